//! Hydrodynamic evolution in a finite tube: Poisson initial data plus
//! Poisson sources at both ends, counted on a grid of diffusive times.
//!
//! All particles are independent, so the expectation is estimated from one
//! realization with every intensity multiplied by `Λ`. A fair coin drawn
//! from each particle's stream splits the realization into two independent
//! Poisson halves, which measures the count fluctuation without a second
//! run.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::sub_seed;
use crate::analysis::EXCLUDED_CELLS;
use crate::dynamics::{Particle, Stop, WallSide};
use crate::ensemble::{run_simple, Accumulator, Experiment};
use crate::error::{Error, Result};
use crate::geometry::{Tube, TubeKind};
use crate::measures::{derive_stream, poisson_count, sample_lebesgue_in_cell, InjectionMeasure, RandomStream};

/// Initial profile `f` on `[0, 1]`.
pub type Profile = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct HeatSetup {
    pub length: u32,
    pub f: Profile,
    /// Source rates at the left and right ends.
    pub lambda0: f64,
    pub lambda1: f64,
    pub measure: InjectionMeasure,
    /// Observation times in units of `L²`.
    pub times: Vec<f64>,
    pub scale: f64,
}

impl fmt::Debug for HeatSetup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HeatSetup")
            .field("length", &self.length)
            .field("lambda0", &self.lambda0)
            .field("lambda1", &self.lambda1)
            .field("measure", &self.measure)
            .field("times", &self.times)
            .field("scale", &self.scale)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
enum Origin {
    /// Placed in cell `k` at time 0.
    Initial(u32),
    /// Emitted by a source at the given time.
    Source(WallSide, f64),
}

/// Expected counts per cell `u_hat[time][cell]`, divided by the scale `Λ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyField {
    pub times: Vec<f64>,
    pub length: usize,
    pub scale: f64,
    pub u_hat: Vec<Vec<f64>>,
    pub stderr: Vec<Vec<f64>>,
    /// Relative count fluctuation over interior cells, from the split halves.
    pub fluctuation: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct HeatExperiment {
    pub tube: Tube,
    pub setup: HeatSetup,
    origins: Vec<Origin>,
}

/// Counts per (time, cell) for the two halves, flattened time-major.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HeatAcc {
    pub a: Vec<u64>,
    pub b: Vec<u64>,
}

impl Accumulator for HeatAcc {
    fn merge(&mut self, o: Self) {
        self.a.merge(o.a);
        self.b.merge(o.b);
    }
}

impl HeatExperiment {
    /// Draws the particle population from `seed`; particle `i` is then
    /// simulated with `derive_stream(seed, i)`.
    pub fn new(tube: &Tube, setup: HeatSetup, seed: u64) -> Result<Self> {
        let l = setup.length;
        if l == 0 {
            return Err(Error::InvalidParameter("tube length must be positive".into()));
        }
        if !(setup.scale > 0.0) || !(setup.lambda0 >= 0.0) || !(setup.lambda1 >= 0.0) {
            return Err(Error::InvalidParameter("scale must be > 0 and source rates >= 0".into()));
        }
        if setup.times.is_empty() || setup.times.iter().any(|t| !(*t >= 0.0)) || !setup.times.is_sorted() {
            return Err(Error::InvalidParameter("times must be nonempty, nonnegative and sorted".into()));
        }
        setup.measure.validate(tube)?;
        let mut s = derive_stream(sub_seed(seed, 0x4EA7), 0);
        let mut origins = Vec::new();
        for k in 0..l {
            let fk = (setup.f)((k as f64 + 0.5) / l as f64);
            if !(fk >= 0.0) {
                return Err(Error::InvalidParameter(format!("initial profile is negative or NaN at cell {k}")));
            }
            let n = poisson_count(&mut s, setup.scale * fk)?;
            origins.extend((0..n).map(|_| Origin::Initial(k)));
        }
        let horizon = setup.times.last().copied().unwrap_or(0.0) * (l as f64).powi(2);
        if horizon > 0.0 {
            for (side, rate) in [(WallSide::Left, setup.lambda0), (WallSide::Right, setup.lambda1)] {
                if rate > 0.0 {
                    let n = poisson_count(&mut s, setup.scale * rate * horizon)?;
                    origins.extend((0..n).map(|_| Origin::Source(side, horizon * s.uniform())));
                }
            }
        }
        Ok(HeatExperiment { tube: tube.with_kind(TubeKind::Finite { length: l }), setup, origins })
    }

    pub fn n_particles(&self) -> u64 {
        self.origins.len() as u64
    }

    fn cells(&self) -> usize {
        self.setup.length as usize
    }
}

impl Experiment for HeatExperiment {
    type Acc = HeatAcc;
    type Output = OccupancyField;

    fn empty(&self) -> HeatAcc {
        let n = self.setup.times.len() * self.cells();
        HeatAcc { a: vec![0; n], b: vec![0; n] }
    }

    fn particle(&self, index: u64, stream: &mut RandomStream, acc: &mut HeatAcc) -> Result<()> {
        let first = stream.uniform() < 0.5;
        let l = self.setup.length as f64;
        let start = match self.origins[index as usize] {
            Origin::Initial(k) => sample_lebesgue_in_cell(stream, &self.tube, k as i64),
            Origin::Source(side, birth) => {
                let mut s = self.setup.measure.sample(stream, &self.tube, side, l);
                s.time = birth;
                s
            }
        };
        let counts = if first { &mut acc.a } else { &mut acc.b };
        let mut p = Particle::new(start);
        for (j, &t) in self.setup.times.iter().enumerate() {
            let t_abs = t * l * l;
            if t_abs < start.time {
                continue;
            }
            if let Stop::Absorbed { .. } = p.advance(&self.tube, self.tube.walls(), t_abs, u64::MAX, &mut ())? {
                break;
            }
            let c = p.state.position.x.floor() as usize;
            counts[j * self.cells() + c.min(self.cells() - 1)] += 1;
        }
        Ok(())
    }

    fn finish(&self, acc: HeatAcc, _n: u64) -> Result<OccupancyField> {
        let (l, lam) = (self.cells(), self.setup.scale);
        let rows = |f: &dyn Fn(u64, u64) -> f64| -> Vec<Vec<f64>> {
            (0..self.setup.times.len())
                .map(|j| (0..l).map(|c| f(acc.a[j * l + c], acc.b[j * l + c])).collect())
                .collect()
        };
        let u_hat = rows(&|a, b| (a + b) as f64 / lam);
        let stderr = rows(&|a, b| ((a + b).max(1) as f64).sqrt() / lam);
        // E(A − B)² = E(A + B) for independent Poisson halves of equal mean.
        let (mut sq, mut tot, mut k) = (0.0, 0.0, 0.0);
        for j in 0..self.setup.times.len() {
            for c in EXCLUDED_CELLS..l.saturating_sub(EXCLUDED_CELLS) {
                let (a, b) = (acc.a[j * l + c] as f64, acc.b[j * l + c] as f64);
                sq += (a - b).powi(2);
                tot += a + b;
                k += 1.0;
            }
        }
        let fluctuation = (tot > 0.0).then(|| (sq / k).sqrt() / (tot / k));
        Ok(OccupancyField { times: self.setup.times.clone(), length: l, scale: lam, u_hat, stderr, fluctuation })
    }
}

/// Simulates the hydrodynamic setup once and returns the scaled counts.
pub fn heat_evolution(tube: &Tube, setup: HeatSetup, seed: u64, threads: usize) -> Result<OccupancyField> {
    let exp = HeatExperiment::new(tube, setup, seed)?;
    if exp.n_particles() == 0 {
        return Err(Error::InsufficientSamples { got: 0, need: 1 });
    }
    run_simple(&exp, exp.n_particles(), seed, threads)
}

/// Scaling of the relative count fluctuation between two scales.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluctuationScaling {
    pub scales: (f64, f64),
    pub relative: (f64, f64),
    /// `d log(fluctuation) / d log Λ`; −½ for Poisson counts.
    pub slope: f64,
}

pub fn count_fluctuation(low: &OccupancyField, high: &OccupancyField) -> Result<FluctuationScaling> {
    let (Some(a), Some(b)) = (low.fluctuation, high.fluctuation) else {
        return Err(Error::InsufficientSamples { got: 0, need: 1 });
    };
    if low.scale == high.scale {
        return Err(Error::InvalidParameter("fluctuation scaling needs two distinct scales".into()));
    }
    Ok(FluctuationScaling {
        scales: (low.scale, high.scale),
        relative: (a, b),
        slope: (b / a).ln() / (high.scale / low.scale).ln(),
    })
}
