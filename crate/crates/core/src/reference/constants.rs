use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Measured inputs `c̄`, `κ̄`, `σ` and the constants derived from them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantSet {
    /// Escape constant: `L·P(reach cell L before returning)` as `L → ∞`.
    pub c_bar: f64,
    /// Mean free path.
    pub kappa_bar: f64,
    /// Per-collision diffusion constant.
    pub sigma: f64,
    /// Limiting density slope constant `2c̄κ̄/σ²`.
    pub c: f64,
    pub c1: f64,
    pub c1_hat: f64,
    /// Local-time constant `2/σ²`.
    pub c_b: f64,
    /// Continuous-time diffusion constant `σ/√κ̄`.
    pub sigma_hat: f64,
}

pub fn derive_constants(c_bar: f64, kappa_bar: f64, sigma: f64) -> Result<ConstantSet> {
    for (name, v) in [("c_bar", c_bar), ("kappa_bar", kappa_bar), ("sigma", sigma)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::NonPositiveInput(name));
        }
    }
    let c1 = c_bar * 2f64.sqrt() / (PI.sqrt() * sigma);
    Ok(ConstantSet {
        c_bar,
        kappa_bar,
        sigma,
        c: 2.0 * c_bar * kappa_bar / (sigma * sigma),
        c1,
        c1_hat: c1 * kappa_bar.sqrt(),
        c_b: 2.0 / (sigma * sigma),
        sigma_hat: sigma / kappa_bar.sqrt(),
    })
}
