//! Visits to cell `L` before absorption, started from the invariant measure
//! in cell `L`.
//!
//! The discrete count uses collision cells and stops at the first collision
//! in a cell `<= −1`. The continuous occupation of the strip `[L, L+1)` stops
//! at the first crossing of `x = 0`, which never comes later. Both come from
//! one trajectory in a wall-free tube.

use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};

use super::{require_particles, split_segment, sub_seed};
use crate::analysis::{weighted_linear_fit, FitResult};
use crate::dynamics::{CollisionEvent, FlightObserver, Particle, Stop};
use crate::ensemble::{run_simple, Accumulator, Experiment};
use crate::error::{Error, Result};
use crate::geometry::{Tube, TubeKind, Walls};
use crate::measures::{sample_mu0_cell0, RandomStream};
use crate::stats::Moments;
use crate::vec2::Vec2;

#[derive(Debug, Clone)]
pub struct LocalTimeExperiment {
    pub tube: Tube,
    pub length: u32,
    /// Per-particle collision cap.
    pub max_collisions: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LocalTimeAcc {
    pub visits: Moments,
    pub occupation: Moments,
    pub capped: u64,
    pub min_visits: u64,
}

impl Accumulator for LocalTimeAcc {
    fn merge(&mut self, o: Self) {
        let min = if self.visits.n == 0 { o.min_visits } else if o.visits.n == 0 { self.min_visits } else { self.min_visits.min(o.min_visits) };
        self.visits.merge(o.visits);
        self.occupation.merge(o.occupation);
        self.capped += o.capped;
        self.min_visits = min;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalTimeEstimate {
    pub length: u32,
    /// Mean discrete visits divided by `L`.
    pub discrete: f64,
    pub discrete_se: f64,
    /// Mean occupation time of the strip divided by `L`.
    pub continuous: f64,
    pub continuous_se: f64,
    /// Fraction of particles stopped by the collision cap; their counts are
    /// truncated, so both ratios are biased low by at most this order.
    pub capped_fraction: f64,
    pub min_visits: u64,
}

struct Visits {
    cell: i64,
    count: u64,
    occupation: f64,
    crossed: bool,
}

impl FlightObserver for Visits {
    #[inline]
    fn segment(&mut self, start: Vec2, v: Vec2, _t0: f64, dt: f64) {
        if self.crossed {
            return;
        }
        let end = start.x + dt * v.x;
        if end < 0.0 {
            // Only the part before the crossing counts.
            let dt0 = (-start.x / v.x).clamp(0.0, dt);
            split_segment(start.x, v.x, dt0, |m, d| {
                if m == self.cell {
                    self.occupation += d;
                }
            });
            self.crossed = true;
        } else {
            split_segment(start.x, v.x, dt, |m, d| {
                if m == self.cell {
                    self.occupation += d;
                }
            });
        }
    }

    #[inline]
    fn collision(&mut self, ev: &CollisionEvent, _time: f64) -> ControlFlow<()> {
        let c = ev.hit_point.x.floor() as i64;
        if c <= -1 {
            return ControlFlow::Break(());
        }
        if c == self.cell {
            self.count += 1;
        }
        ControlFlow::Continue(())
    }
}

impl LocalTimeExperiment {
    pub fn new(tube: &Tube, length: u32, max_collisions: u64) -> Result<Self> {
        if length == 0 || max_collisions == 0 {
            return Err(Error::InvalidParameter("length and collision cap must be positive".into()));
        }
        Ok(LocalTimeExperiment { tube: tube.with_kind(TubeKind::BiInfinite), length, max_collisions })
    }
}

impl Experiment for LocalTimeExperiment {
    type Acc = LocalTimeAcc;
    type Output = LocalTimeEstimate;

    fn empty(&self) -> LocalTimeAcc {
        LocalTimeAcc::default()
    }

    fn particle(&self, _index: u64, stream: &mut RandomStream, acc: &mut LocalTimeAcc) -> Result<()> {
        let mut b = sample_mu0_cell0(stream, &self.tube);
        b.cell += self.length as i64;
        let start = b.to_flight(&self.tube);
        let cell = self.length as i64;
        // The starting state is itself a collision in cell L.
        let mut obs = Visits { cell, count: u64::from(start.position.x.floor() as i64 == cell), occupation: 0.0, crossed: false };
        let mut p = Particle::new(start);
        let stop = p.advance(&self.tube, Walls::NONE, f64::INFINITY, self.max_collisions, &mut obs)?;
        if stop == Stop::Collisions {
            acc.capped += 1;
        }
        acc.min_visits = if acc.visits.n == 0 { obs.count } else { acc.min_visits.min(obs.count) };
        acc.visits.push(obs.count as f64);
        acc.occupation.push(obs.occupation);
        Ok(())
    }

    fn finish(&self, acc: LocalTimeAcc, n: u64) -> Result<LocalTimeEstimate> {
        require_particles(n, 2)?;
        let l = self.length as f64;
        Ok(LocalTimeEstimate {
            length: self.length,
            discrete: acc.visits.mean() / l,
            discrete_se: acc.visits.stderr() / l,
            continuous: acc.occupation.mean() / l,
            continuous_se: acc.occupation.stderr() / l,
            capped_fraction: acc.capped as f64 / n as f64,
            min_visits: acc.min_visits,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalTimeTable {
    pub rows: Vec<LocalTimeEstimate>,
    /// Fits of the ratios against `1/L`; the intercept is the `L → ∞` limit.
    /// Present with at least three lengths.
    pub discrete_limit: Option<FitResult>,
    pub continuous_limit: Option<FitResult>,
}

/// Local-time ratios for each length in `lengths`, each from an independent
/// sub-ensemble of `n_particles`.
pub fn local_time_constant(
    tube: &Tube,
    lengths: &[u32],
    n_particles: u64,
    max_collisions: u64,
    seed: u64,
    threads: usize,
) -> Result<LocalTimeTable> {
    let rows = lengths
        .iter()
        .enumerate()
        .map(|(k, &l)| run_simple(&LocalTimeExperiment::new(tube, l, max_collisions)?, n_particles, sub_seed(seed, k as u64), threads))
        .collect::<Result<Vec<_>>>()?;
    let fit = |sel: fn(&LocalTimeEstimate) -> (f64, f64)| -> Result<Option<FitResult>> {
        if rows.len() < 3 {
            return Ok(None);
        }
        let pts: Vec<(f64, f64, f64)> = rows.iter().map(|r| (1.0 / r.length as f64, sel(r).0, sel(r).1)).collect();
        weighted_linear_fit(&pts).map(Some)
    };
    Ok(LocalTimeTable {
        discrete_limit: fit(|r| (r.discrete, r.discrete_se))?,
        continuous_limit: fit(|r| (r.continuous, r.continuous_se))?,
        rows,
    })
}
