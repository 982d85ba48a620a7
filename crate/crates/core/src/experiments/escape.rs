//! Escape constant `c̄ = lim L·P(τ_L < τ*)`.

use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};

use super::require_particles;
use crate::analysis::{weighted_linear_fit, FitResult};
use crate::dynamics::{CollisionEvent, FlightObserver, Particle, Stop, WallSide};
use crate::ensemble::{run_simple, Accumulator, Experiment};
use crate::error::{Error, Result};
use crate::geometry::{Tube, TubeKind, Walls};
use crate::measures::{InjectionMeasure, RandomStream};
use crate::vec2::Vec2;

/// Which hitting times define the escape event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    /// Plane crossings: reach `x = L` before `x = 0`.
    Continuous,
    /// Collision cells: a collision in cell `>= L` before one in cell `<= −1`.
    Discrete,
}

#[derive(Debug, Clone)]
pub struct EscapeExperiment {
    pub tube: Tube,
    pub measure: InjectionMeasure,
    pub lengths: Vec<u32>,
    pub convention: Convention,
    pub t_cap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EscapeRow {
    pub length: u32,
    pub p: f64,
    pub stderr: f64,
    pub c_bar: f64,
    pub c_bar_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EscapeEstimate {
    pub measure: String,
    pub convention: Convention,
    pub rows: Vec<EscapeRow>,
    /// Inverse-variance mean of `L·P̂` over the rows.
    pub c_bar: f64,
    pub c_bar_se: f64,
    /// Linear drift of `L·P̂` in `L`; `None` for fewer than three lengths.
    pub drift: Option<FitResult>,
    /// Particles that reached neither end before the cap.
    pub capped: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EscapeAcc {
    pub escaped: Vec<u64>,
    pub capped: u64,
}

impl Accumulator for EscapeAcc {
    fn merge(&mut self, o: Self) {
        self.escaped.merge(o.escaped);
        self.capped += o.capped;
    }
}

struct RunningMax(f64);

impl FlightObserver for RunningMax {
    #[inline]
    fn segment(&mut self, start: Vec2, v: Vec2, _t0: f64, dt: f64) {
        self.0 = self.0.max(start.x).max(start.x + dt * v.x);
    }
}

/// Highest collision cell, stopping at the first collision outside `[0, top)`.
struct CellRange {
    top: i64,
    max: i64,
    below: bool,
}

impl FlightObserver for CellRange {
    #[inline]
    fn collision(&mut self, ev: &CollisionEvent, _time: f64) -> ControlFlow<()> {
        let c = ev.hit_point.x.floor() as i64;
        self.max = self.max.max(c);
        if c <= -1 {
            self.below = true;
            ControlFlow::Break(())
        } else if c >= self.top {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    }
}

impl EscapeExperiment {
    pub fn new(tube: &Tube, measure: InjectionMeasure, lengths: &[u32], convention: Convention) -> Result<Self> {
        if lengths.is_empty() || lengths.contains(&0) {
            return Err(Error::InvalidParameter("escape lengths must be positive and nonempty".into()));
        }
        measure.validate(tube)?;
        let mut lengths = lengths.to_vec();
        lengths.sort_unstable();
        lengths.dedup();
        let top = *lengths.last().expect("nonempty") as f64;
        Ok(EscapeExperiment {
            tube: tube.with_kind(TubeKind::BiInfinite),
            measure,
            lengths,
            convention,
            t_cap: 100.0 * top * top,
        })
    }

    fn top(&self) -> u32 {
        *self.lengths.last().expect("nonempty")
    }
}

impl Experiment for EscapeExperiment {
    type Acc = EscapeAcc;
    type Output = EscapeEstimate;

    fn empty(&self) -> EscapeAcc {
        EscapeAcc { escaped: vec![0; self.lengths.len()], capped: 0 }
    }

    fn particle(&self, _index: u64, stream: &mut RandomStream, acc: &mut EscapeAcc) -> Result<()> {
        let start = self.measure.sample(stream, &self.tube, WallSide::Left, 0.0);
        let top = self.top();
        let mut p = Particle::new(start);
        let reached = match self.convention {
            Convention::Continuous => {
                let walls = Walls { left: Some(0.0), right: Some(top as f64) };
                let mut obs = RunningMax(start.position.x);
                match p.advance(&self.tube, walls, self.t_cap, u64::MAX, &mut obs)? {
                    Stop::Absorbed { side: WallSide::Right, .. } => Some(top as f64),
                    Stop::Absorbed { side: WallSide::Left, .. } => Some(obs.0),
                    _ => None,
                }
            }
            Convention::Discrete => {
                let c0 = start.position.x.floor() as i64;
                let mut obs = CellRange { top: top as i64, max: c0, below: c0 <= -1 };
                if obs.below {
                    Some(-1.0)
                } else {
                    match p.advance(&self.tube, Walls::NONE, self.t_cap, u64::MAX, &mut obs)? {
                        Stop::Observer => Some(obs.max as f64),
                        _ => None,
                    }
                }
            }
        };
        match reached {
            Some(m) => {
                for (i, &l) in self.lengths.iter().enumerate() {
                    if m >= l as f64 {
                        acc.escaped[i] += 1;
                    }
                }
            }
            None => acc.capped += 1,
        }
        Ok(())
    }

    fn finish(&self, acc: EscapeAcc, n: u64) -> Result<EscapeEstimate> {
        require_particles(n, 2)?;
        let nf = n as f64;
        let rows: Vec<EscapeRow> = self
            .lengths
            .iter()
            .zip(&acc.escaped)
            .map(|(&l, &k)| {
                let p = k as f64 / nf;
                let se = (p * (1.0 - p) / nf).sqrt();
                EscapeRow { length: l, p, stderr: se, c_bar: l as f64 * p, c_bar_se: l as f64 * se }
            })
            .collect();
        let (mut sw, mut swx) = (0.0, 0.0);
        for r in &rows {
            let w = 1.0 / r.c_bar_se.max(f64::MIN_POSITIVE).powi(2);
            sw += w;
            swx += w * r.c_bar;
        }
        let drift = if rows.len() >= 3 && rows.iter().all(|r| r.c_bar_se > 0.0) {
            let pts: Vec<(f64, f64, f64)> = rows.iter().map(|r| (r.length as f64, r.c_bar, r.c_bar_se)).collect();
            Some(weighted_linear_fit(&pts)?)
        } else {
            None
        };
        Ok(EscapeEstimate {
            measure: self.measure.name().into(),
            convention: self.convention,
            rows,
            c_bar: swx / sw,
            c_bar_se: sw.recip().sqrt(),
            drift,
            capped: acc.capped,
        })
    }
}

/// Estimates `c̄` for `measure` from `L·P̂(τ_L < τ*)` over `lengths`.
pub fn escape_constant(
    tube: &Tube,
    measure: InjectionMeasure,
    lengths: &[u32],
    n_particles: u64,
    seed: u64,
    threads: usize,
) -> Result<EscapeEstimate> {
    let exp = EscapeExperiment::new(tube, measure, lengths, Convention::Continuous)?;
    run_simple(&exp, n_particles, seed, threads)
}
