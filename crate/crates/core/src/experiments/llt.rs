//! Local-limit counting checks: hits of a small window, scaled so that the
//! limit is a density, compared with the window average of that density.

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::bi_infinite::{BiInfiniteExperiment, ContinuousWindow, JointWindow};
use super::semi::{MeanderWindow, SemiInfiniteExperiment};
use super::{require_particles, LltResult};
use crate::dynamics::{Particle, Stop};
use crate::ensemble::{run_simple, Experiment};
use crate::error::{Error, Result};
use crate::geometry::{Tube, TubeKind};
use crate::measures::{sample_mu0_cell0, InjectionMeasure, RandomStream};
use crate::reference::killed_bm_density;

/// Minimum hits in the target window.
pub const MIN_HITS: u64 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum LltParams {
    /// `√T·P(⌊X̂(T)⌋ = ⌊x√T⌋)` against `φ_σ̂(x)`.
    Continuous { t: f64, x: f64, cells: u32 },
    /// `n·P(cell hit, F_n − nκ̄ − y√n ∈ [0, Δ))/Δ` against `φ_Σ(x, y)`; `Δ`
    /// defaults to the mean free path.
    Joint { n: u64, x: f64, y: f64, delta: Option<f64>, cells: u32, slots: u32 },
    /// `T·P(⌊X̂(T)⌋ = ⌊x√T⌋, max ≤ y√T)` against `ĉ₁·φ_σ̂(x, y)`.
    Meander { t: f64, x: f64, y: f64, cells: u32, sigma_hat: Option<f64> },
    /// `L·P(⌊X̂(tL²)⌋ = ⌊yL⌋, not absorbed | start in cell ⌊xL⌋)` against `ψ(t, x, y)`.
    Heat { length: u32, t: f64, x: f64, y: f64, cells: u32, sigma_hat: f64 },
}

#[derive(Debug, Clone)]
pub struct HeatLltExperiment {
    pub tube: Tube,
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub cells: u32,
    pub sigma_hat: f64,
}

impl HeatLltExperiment {
    pub fn new(tube: &Tube, length: u32, t: f64, x: f64, y: f64, cells: u32, sigma_hat: f64) -> Result<Self> {
        if length == 0 || !(t > 0.0) || !(0.0..1.0).contains(&x) || !(0.0..1.0).contains(&y) {
            return Err(Error::InvalidParameter(format!("bad heat window L={length} t={t} x={x} y={y}")));
        }
        Ok(HeatLltExperiment { tube: tube.with_kind(TubeKind::Finite { length }), t, x, y, cells, sigma_hat })
    }

    fn length(&self) -> f64 {
        match self.tube.config().kind {
            TubeKind::Finite { length } => length as f64,
            _ => unreachable!("constructed finite"),
        }
    }
}

impl Experiment for HeatLltExperiment {
    type Acc = u64;
    type Output = LltResult;

    fn empty(&self) -> u64 {
        0
    }

    fn particle(&self, _index: u64, stream: &mut RandomStream, acc: &mut u64) -> Result<()> {
        let l = self.length();
        let mut b = sample_mu0_cell0(stream, &self.tube);
        b.cell += (self.x * l).floor() as i64;
        let mut p = Particle::new(b.to_flight(&self.tube));
        if p.advance(&self.tube, self.tube.walls(), self.t * l * l, u64::MAX, &mut ())? == Stop::Time {
            let m = p.state.position.x.floor() as i64 - (self.y * l).floor() as i64;
            if m.unsigned_abs() <= self.cells as u64 {
                *acc += 1;
            }
        }
        Ok(())
    }

    fn finish(&self, hits: u64, n: u64) -> Result<LltResult> {
        require_particles(n, 1)?;
        let l = self.length();
        let width = 2 * self.cells as i64 + 1;
        let x = ((self.x * l).floor() + 0.5) / l;
        let cy = (self.y * l).floor() as i64;
        let mut total = 0.0;
        for j in -(self.cells as i64)..=self.cells as i64 {
            let y = ((cy + j) as f64 + 0.5) / l;
            if (0.0..=1.0).contains(&y) {
                total += killed_bm_density(self.sigma_hat, self.t, x, y)?.value;
            }
        }
        let empirical = l * hits as f64 / (n as f64 * width as f64);
        let params = json!({ "L": l, "t": self.t, "x": self.x, "y": self.y, "cells": self.cells, "sigma_hat": self.sigma_hat });
        Ok(LltResult::new("heat", params, empirical, total / width as f64, hits))
    }
}


/// Heat-mode count with `n_particles` started in cell `⌊xL⌋`.
#[allow(clippy::too_many_arguments)]
pub fn heat_llt(
    tube: &Tube,
    length: u32,
    t: f64,
    x: f64,
    y: f64,
    cells: u32,
    sigma_hat: f64,
    n_particles: u64,
    seed: u64,
    threads: usize,
) -> Result<LltResult> {
    run_simple(&HeatLltExperiment::new(tube, length, t, x, y, cells, sigma_hat)?, n_particles, seed, threads)
}

/// Runs the count selected by `params`; fails with `InsufficientHits` below
/// [`MIN_HITS`] events in the window.
pub fn llt_counts(tube: &Tube, params: LltParams, n_particles: u64, seed: u64, threads: usize) -> Result<LltResult> {
    let result = match params {
        LltParams::Continuous { t, x, cells } => {
            let snap = (t / tube.config().mean_free_path()).ceil().max(1.0) as u64;
            let exp = BiInfiniteExperiment::new(tube, &[snap], n_particles)?.with_continuous(ContinuousWindow { t, x, cells });
            run_simple(&exp, n_particles, seed, threads)?.continuous.expect("window set")
        }
        LltParams::Joint { n, x, y, delta, cells, slots } => {
            let delta = delta.unwrap_or_else(|| tube.config().mean_free_path());
            let w = JointWindow { n, x, y, delta, cells, slots };
            let exp = BiInfiniteExperiment::new(tube, &[n.div_ceil(4).max(1), n], n_particles)?.with_joint(w);
            run_simple(&exp, n_particles, seed, threads)?.joint.expect("window set")
        }
        LltParams::Meander { t, x, y, cells, sigma_hat } => {
            let mut exp = SemiInfiniteExperiment::new(tube, InjectionMeasure::Mu0Cell0, t)?;
            let lo = 1e2_f64.min(t / 8.0);
            exp.survival_times = (0..=8).map(|k| lo * (t / lo).powf(k as f64 / 8.0)).collect();
            exp.fit_range = (lo, t);
            exp.meander_time = Some(t);
            exp.meander_window = Some(MeanderWindow { x, y, cells });
            exp.sigma_hat = sigma_hat;
            run_simple(&exp, n_particles, seed, threads)?.meander_llt.expect("window set")
        }
        LltParams::Heat { length, t, x, y, cells, sigma_hat } => {
            heat_llt(tube, length, t, x, y, cells, sigma_hat, n_particles, seed, threads)?
        }
    };
    result.require_hits(MIN_HITS)
}
