//! One semi-infinite ensemble feeding the survival tail, the meander
//! statistics, the density plateau and the meander local-limit count.

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::profile::{profile_from_sums, DensityProfile};
use super::{require_particles, LltResult, StripOccupation};
use crate::analysis::{loglog_slope, FitResult};
use crate::dynamics::{FlightObserver, Particle, Stop, WallSide};
use crate::ensemble::{run_simple, Accumulator, Experiment};
use crate::error::{Error, Result};
use crate::geometry::{Tube, TubeKind};
use crate::measures::{InjectionMeasure, RandomStream};
use crate::reference::MeanderLaw;
use crate::stats::{CellSums, Moments};
use crate::vec2::Vec2;

/// Minimum number of survivors for meander statistics.
pub const MIN_SURVIVORS: u64 = 1000;

/// Counts survivors at time `N` with running maximum `<= y√N` and
/// `⌊X̂(N)⌋ − ⌊x√N⌋ ∈ [−cells, cells]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanderWindow {
    pub x: f64,
    pub y: f64,
    pub cells: u32,
}

#[derive(Debug, Clone)]
pub struct SemiInfiniteExperiment {
    pub tube: Tube,
    pub measure: InjectionMeasure,
    pub rate: f64,
    pub t_cap: f64,
    /// Survival is recorded at these times (capped at `t_cap`).
    pub survival_times: Vec<f64>,
    /// Log-log fit range for the survival tail.
    pub fit_range: (f64, f64),
    pub meander_time: Option<f64>,
    pub meander_window: Option<MeanderWindow>,
    /// Cells `0..profile_cells` of the occupation profile.
    pub profile_cells: usize,
    /// Diffusion constant for the tail-bias and meander references; estimated
    /// from the survivors at the cap when absent.
    pub sigma_hat: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SemiAcc {
    pub survivors: Vec<u64>,
    pub occupation: CellSums,
    pub endpoints: Vec<f64>,
    pub maxima: Vec<f64>,
    pub meander_hits: u64,
    /// `X̂(t_cap)²` of particles alive at the cap.
    pub cap_square: Moments,
    pub collisions: u64,
}

impl Accumulator for SemiAcc {
    fn merge(&mut self, o: Self) {
        self.survivors.merge(o.survivors);
        self.occupation.merge(o.occupation);
        self.endpoints.extend(o.endpoints);
        self.maxima.extend(o.maxima);
        self.meander_hits += o.meander_hits;
        self.cap_square.merge(o.cap_square);
        self.collisions += o.collisions;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalTable {
    /// `(N, P̂(τ̂* > N), stderr)`.
    pub rows: Vec<(f64, f64, f64)>,
    pub fit: Option<FitResult>,
    /// Mean of `P̂·√N` over the fitted rows.
    pub c1_hat: f64,
    pub c1_hat_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanderSamples {
    pub time: f64,
    pub survivors: u64,
    /// `X̂(N)/√N` of the survivors.
    pub endpoints: Vec<f64>,
    /// `max_{t ≤ N} X̂(t)/√N` of the survivors.
    pub maxima: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemiInfiniteOutput {
    pub survival: SurvivalTable,
    pub meander: Option<MeanderSamples>,
    pub profile: Option<DensityProfile>,
    pub meander_llt: Option<LltResult>,
    /// `σ̂` used by the references (given or estimated).
    pub sigma_hat: f64,
    pub collisions: u64,
}

struct RunningMax(f64);

impl FlightObserver for RunningMax {
    #[inline]
    fn segment(&mut self, start: Vec2, v: Vec2, _t0: f64, dt: f64) {
        self.0 = self.0.max(start.x).max(start.x + dt * v.x);
    }
}

impl SemiInfiniteExperiment {
    pub fn new(tube: &Tube, measure: InjectionMeasure, t_cap: f64) -> Result<Self> {
        if !(t_cap > 0.0) {
            return Err(Error::InvalidParameter(format!("t_cap must be positive, got {t_cap}")));
        }
        measure.validate(tube)?;
        Ok(SemiInfiniteExperiment {
            tube: tube.with_kind(TubeKind::SemiInfinite),
            measure,
            rate: 1.0,
            t_cap,
            survival_times: vec![t_cap],
            fit_range: (1e2, 1e4),
            meander_time: None,
            meander_window: None,
            profile_cells: 0,
            sigma_hat: None,
        })
    }

    fn stops(&self) -> Vec<f64> {
        let mut t: Vec<f64> = self.survival_times.iter().copied().filter(|&s| s <= self.t_cap).collect();
        t.extend(self.meander_time.filter(|&m| m <= self.t_cap));
        t.push(self.t_cap);
        t.sort_by(f64::total_cmp);
        t.dedup();
        t
    }
}

impl Experiment for SemiInfiniteExperiment {
    type Acc = SemiAcc;
    type Output = SemiInfiniteOutput;

    fn empty(&self) -> SemiAcc {
        SemiAcc {
            survivors: vec![0; self.survival_times.len()],
            occupation: CellSums::new(self.profile_cells),
            ..Default::default()
        }
    }

    fn particle(&self, _index: u64, stream: &mut RandomStream, acc: &mut SemiAcc) -> Result<()> {
        let start = self.measure.sample(stream, &self.tube, WallSide::Left, 0.0);
        let mut obs = (StripOccupation::new(0, self.profile_cells), RunningMax(start.position.x));
        let mut p = Particle::new(start);
        for t in self.stops() {
            if let Stop::Absorbed { .. } = p.advance(&self.tube, self.tube.walls(), t, u64::MAX, &mut obs)? {
                break;
            }
            for (i, &s) in self.survival_times.iter().enumerate() {
                if s == t {
                    acc.survivors[i] += 1;
                }
            }
            if self.meander_time == Some(t) {
                let sn = t.sqrt();
                let x = p.state.position.x;
                acc.endpoints.push(x / sn);
                acc.maxima.push(obs.1 .0 / sn);
                if let Some(w) = self.meander_window {
                    let m = x.floor() as i64 - (w.x * sn).floor() as i64;
                    if obs.1 .0 <= w.y * sn && m.unsigned_abs() <= w.cells as u64 {
                        acc.meander_hits += 1;
                    }
                }
            }
            if t == self.t_cap {
                acc.cap_square.push(p.state.position.x.powi(2));
            }
        }
        if self.profile_cells > 0 {
            acc.occupation.push(&obs.0.times);
        }
        acc.collisions += p.collisions;
        Ok(())
    }

    fn finish(&self, acc: SemiAcc, n: u64) -> Result<SemiInfiniteOutput> {
        require_particles(n, 2)?;
        let nf = n as f64;
        let rows: Vec<(f64, f64, f64)> = self
            .survival_times
            .iter()
            .zip(&acc.survivors)
            .map(|(&t, &k)| {
                let p = k as f64 / nf;
                (t, p, (p * (1.0 - p) / nf).sqrt())
            })
            .collect();
        let fitted: Vec<(f64, f64, f64)> = rows
            .iter()
            .copied()
            .filter(|r| r.0 >= self.fit_range.0 && r.0 <= self.fit_range.1 && r.1 > 0.0)
            .collect();
        let fit = if fitted.len() >= 3 { Some(loglog_slope(&fitted)?) } else { None };
        let (c1_hat, c1_hat_se) = if fitted.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            let k = fitted.len() as f64;
            let c = fitted.iter().map(|r| r.1 * r.0.sqrt()).sum::<f64>() / k;
            let last = fitted.last().expect("nonempty");
            (c, last.2 * last.0.sqrt())
        };
        let survival = SurvivalTable { rows, fit, c1_hat, c1_hat_se };

        // Conditioned on survival, X̂(t)/σ̂√t is asymptotically Rayleigh with
        // second moment 2.
        let sigma_hat = match self.sigma_hat {
            Some(s) => s,
            None if acc.cap_square.n > 1 => (acc.cap_square.mean() / (2.0 * self.t_cap)).sqrt(),
            None => f64::NAN,
        };

        let meander = self.meander_time.map(|t| MeanderSamples {
            time: t,
            survivors: acc.endpoints.len() as u64,
            endpoints: acc.endpoints.clone(),
            maxima: acc.maxima.clone(),
        });

        let profile = if self.profile_cells > 0 {
            // Occupation after the cap, from the asymptotic survival tail and
            // the Rayleigh law of survivors: 2ĉ₁(m+½)/(σ̂²√t_cap) per unit rate.
            let bias: Vec<f64> = (0..self.profile_cells)
                .map(|m| self.rate * 2.0 * c1_hat * (m as f64 + 0.5) / (sigma_hat * sigma_hat * self.t_cap.sqrt()))
                .collect();
            let capped = acc.cap_square.n as f64 / nf;
            Some(profile_from_sums(&acc.occupation, n, self.rate, self.measure.name(), self.t_cap, None, bias, capped))
        } else {
            None
        };

        let meander_llt = match (self.meander_window, self.meander_time) {
            (Some(w), Some(t)) => {
                let law = MeanderLaw::new(sigma_hat)?;
                let sn = t.sqrt();
                let c = (w.x * sn).floor() as i64;
                let width = 2 * w.cells as i64 + 1;
                let mut total = 0.0;
                for j in -(w.cells as i64)..=w.cells as i64 {
                    let x = ((c + j) as f64 + 0.5) / sn;
                    total += if x > 0.0 && x <= w.y { law.density(x, w.y)?.value } else { 0.0 };
                }
                let reference = c1_hat * total / width as f64;
                let empirical = t * acc.meander_hits as f64 / (nf * width as f64);
                let params = json!({ "t": t, "x": w.x, "y": w.y, "cells": w.cells, "c1_hat": c1_hat, "sigma_hat": sigma_hat });
                Some(LltResult::new("meander", params, empirical, reference, acc.meander_hits))
            }
            _ => None,
        };

        Ok(SemiInfiniteOutput { survival, meander, profile, meander_llt, sigma_hat, collisions: acc.collisions })
    }
}

/// Survival table `P̂(τ̂* > N)` over `times`, with a log-log fit over
/// `[10², 10⁴]` (restricted to the supplied times).
pub fn survival_tail(
    tube: &Tube,
    measure: InjectionMeasure,
    times: &[f64],
    n_particles: u64,
    seed: u64,
    threads: usize,
) -> Result<SurvivalTable> {
    require_particles(n_particles, 2)?;
    let t_cap = times.iter().copied().fold(0.0, f64::max);
    let mut exp = SemiInfiniteExperiment::new(tube, measure, t_cap.max(f64::MIN_POSITIVE))?;
    exp.survival_times = times.to_vec();
    Ok(run_simple(&exp, n_particles, seed, threads)?.survival)
}

/// Scaled endpoints and maxima of the particles surviving to time `n_time`.
pub fn meander_statistics(
    tube: &Tube,
    measure: InjectionMeasure,
    n_time: f64,
    n_particles: u64,
    seed: u64,
    threads: usize,
) -> Result<MeanderSamples> {
    let mut exp = SemiInfiniteExperiment::new(tube, measure, n_time)?;
    exp.meander_time = Some(n_time);
    let out = run_simple(&exp, n_particles, seed, threads)?;
    let m = out.meander.expect("meander time set");
    if m.survivors < MIN_SURVIVORS {
        return Err(Error::TooFewSurvivors { got: m.survivors, need: MIN_SURVIVORS });
    }
    Ok(m)
}
