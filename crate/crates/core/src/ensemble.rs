//! Deterministic parallel ensembles.
//!
//! Particles are grouped into fixed chunks of consecutive indices. Each chunk
//! is simulated into a fresh accumulator and chunks are folded left in index
//! order, so the result does not depend on the thread count. Checkpoints fall
//! on chunk boundaries, which keeps resumed runs bit-identical as well.

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{derive_stream, RandomStream};

/// Particles per chunk. Part of the reproducibility contract: changing it
/// changes the floating-point summation order.
pub const CHUNK: u64 = 256;

/// A mergeable summary of simulated particles.
pub trait Accumulator: Clone + Send + Serialize + DeserializeOwned {
    /// Appends `other`, which summarizes particles with larger indices.
    fn merge(&mut self, other: Self);
}

/// An ensemble experiment: how to simulate one particle and how to turn the
/// merged accumulator into a result.
pub trait Experiment: Sync {
    type Acc: Accumulator;
    type Output;

    fn empty(&self) -> Self::Acc;

    fn particle(&self, index: u64, stream: &mut RandomStream, acc: &mut Self::Acc) -> Result<()>;

    fn finish(&self, acc: Self::Acc, n_particles: u64) -> Result<Self::Output>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint<A> {
    pub next_index: u64,
    pub acc: A,
}

/// Called with each checkpoint as it is taken.
pub type CheckpointHook<'a, A> = &'a mut dyn FnMut(&Checkpoint<A>) -> Result<()>;

/// Scheduling and checkpoint options; none of them affect the result.
pub struct RunControl<'a, A> {
    pub threads: usize,
    /// Checkpoint interval in particles, rounded up to whole chunks.
    pub checkpoint_every: Option<u64>,
    pub resume: Option<Checkpoint<A>>,
    pub on_checkpoint: Option<CheckpointHook<'a, A>>,
    /// Stop after at least this many particles (rounded up to a checkpoint
    /// boundary), leaving the run incomplete.
    pub stop_after: Option<u64>,
}

impl<A> Default for RunControl<'_, A> {
    fn default() -> Self {
        RunControl { threads: 1, checkpoint_every: None, resume: None, on_checkpoint: None, stop_after: None }
    }
}

impl<A> RunControl<'_, A> {
    pub fn threads(threads: usize) -> Self {
        RunControl { threads, ..Default::default() }
    }
}

/// Result of [`run`]: the output when all particles were simulated, or the
/// checkpoint to resume from when the run was stopped early.
pub enum RunOutcome<O, A> {
    Complete(O),
    Stopped(Checkpoint<A>),
}

impl<O, A> RunOutcome<O, A> {
    pub fn complete(self) -> Result<O> {
        match self {
            RunOutcome::Complete(o) => Ok(o),
            RunOutcome::Stopped(c) => {
                Err(Error::InvalidParameter(format!("run stopped at particle {}", c.next_index)))
            }
        }
    }
}

/// Runs `n_particles` particles of `exp`, particle `i` drawing from
/// `derive_stream(seed, i)`.
pub fn run<E: Experiment>(
    exp: &E,
    n_particles: u64,
    seed: u64,
    mut ctl: RunControl<'_, E::Acc>,
) -> Result<RunOutcome<E::Output, E::Acc>> {
    if n_particles == 0 {
        return Err(Error::InsufficientSamples { got: 0, need: 1 });
    }
    let (mut next, mut total) = match ctl.resume.take() {
        Some(c) if c.next_index > n_particles || c.next_index % CHUNK != 0 && c.next_index != n_particles => {
            return Err(Error::InvalidParameter(format!("checkpoint index {} does not fit this run", c.next_index)));
        }
        Some(c) => (c.next_index, c.acc),
        None => (0, exp.empty()),
    };
    let batch = ctl.checkpoint_every.map_or(n_particles.max(1), |n| n.max(1).div_ceil(CHUNK) * CHUNK);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(ctl.threads.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let started = next;

    while next < n_particles {
        let end = (next + batch).min(n_particles);
        let chunks: Vec<(u64, u64)> =
            (next..end).step_by(CHUNK as usize).map(|a| (a, (a + CHUNK).min(end))).collect();
        let parts: Vec<Result<E::Acc>> = pool.install(|| {
            chunks
                .par_iter()
                .map(|&(a, b)| {
                    let mut acc = exp.empty();
                    for i in a..b {
                        let mut stream = derive_stream(seed, i);
                        exp.particle(i, &mut stream, &mut acc)?;
                    }
                    Ok(acc)
                })
                .collect()
        });
        for part in parts {
            total.merge(part?);
        }
        next = end;
        let checkpoint_due = ctl.checkpoint_every.is_some() && next < n_particles;
        if checkpoint_due {
            let cp = Checkpoint { next_index: next, acc: total };
            if let Some(cb) = ctl.on_checkpoint.as_mut() {
                cb(&cp)?;
            }
            if ctl.stop_after.is_some_and(|s| next - started >= s) {
                return Ok(RunOutcome::Stopped(cp));
            }
            total = cp.acc;
        }
    }
    Ok(RunOutcome::Complete(exp.finish(total, n_particles)?))
}

/// Runs to completion on `threads` threads without checkpoints.
pub fn run_simple<E: Experiment>(exp: &E, n_particles: u64, seed: u64, threads: usize) -> Result<E::Output> {
    run(exp, n_particles, seed, RunControl::threads(threads))?.complete()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[derive(Clone, Serialize, Deserialize, PartialEq, Debug)]
    struct Sum(f64, u64);

    impl Accumulator for Sum {
        fn merge(&mut self, other: Self) {
            self.0 += other.0;
            self.1 += other.1;
        }
    }

    struct Draws;

    impl Experiment for Draws {
        type Acc = Sum;
        type Output = Sum;
        fn empty(&self) -> Sum {
            Sum(0.0, 0)
        }
        fn particle(&self, _i: u64, s: &mut RandomStream, acc: &mut Sum) -> Result<()> {
            acc.0 += s.random::<f64>().ln();
            acc.1 += 1;
            Ok(())
        }
        fn finish(&self, acc: Sum, _n: u64) -> Result<Sum> {
            Ok(acc)
        }
    }

    #[test]
    fn thread_count_does_not_change_bits() {
        let a = run_simple(&Draws, 5000, 3, 1).unwrap();
        let b = run_simple(&Draws, 5000, 3, 4).unwrap();
        assert_eq!(a.0.to_bits(), b.0.to_bits());
        assert_eq!(a.1, 5000);
    }

    #[test]
    fn interrupted_run_resumes_identically() {
        let full = run_simple(&Draws, 3000, 8, 2).unwrap();
        let mut seen = Vec::new();
        let mut cb = |c: &Checkpoint<Sum>| {
            seen.push(c.next_index);
            Ok(())
        };
        let ctl = RunControl {
            threads: 3,
            checkpoint_every: Some(700),
            on_checkpoint: Some(&mut cb),
            stop_after: Some(1),
            ..Default::default()
        };
        let RunOutcome::Stopped(cp) = run(&Draws, 3000, 8, ctl).unwrap() else { panic!("expected a stop") };
        assert_eq!(cp.next_index, 768);
        let json = serde_json::to_string(&cp).unwrap();
        let cp: Checkpoint<Sum> = serde_json::from_str(&json).unwrap();
        let ctl = RunControl { threads: 1, checkpoint_every: Some(700), resume: Some(cp), ..Default::default() };
        let resumed = run(&Draws, 3000, 8, ctl).unwrap().complete().unwrap();
        assert_eq!(full.0.to_bits(), resumed.0.to_bits());
        assert_eq!(seen, vec![768]);
    }

    #[test]
    fn zero_particles_is_an_error() {
        assert!(matches!(run_simple(&Draws, 0, 1, 1), Err(Error::InsufficientSamples { .. })));
    }
}
