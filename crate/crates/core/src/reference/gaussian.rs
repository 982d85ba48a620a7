use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{Error, Result};

/// Centered normal density with standard deviation `rho`.
pub fn gaussian_density(rho: f64, x: f64) -> Result<f64> {
    if !(rho > 0.0) {
        return Err(Error::DomainError(format!("standard deviation must be positive, got {rho}")));
    }
    Ok(phi(rho, x))
}

#[inline]
pub(crate) fn phi(rho: f64, x: f64) -> f64 {
    let z = x / rho;
    (-0.5 * z * z).exp() / ((2.0 * PI).sqrt() * rho)
}

/// Centered bivariate normal density with covariance `sigma`.
pub fn gaussian_density2(sigma: [[f64; 2]; 2], x: f64, y: f64) -> Result<f64> {
    let [[a, b], [b2, d]] = sigma;
    let det = a * d - b * b2;
    if !(a > 0.0 && det > 0.0) || b != b2 {
        return Err(Error::NonPositiveDefinite);
    }
    let q = (d * x * x - 2.0 * b * x * y + a * y * y) / det;
    Ok((-0.5 * q).exp() / (2.0 * PI * det.sqrt()))
}

/// Standard normal distribution function.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * FRAC_1_SQRT_2)
}

/// Standard normal upper tail `1 − Φ(z)`, accurate for large `z`.
pub fn normal_sf(z: f64) -> f64 {
    0.5 * libm::erfc(z * FRAC_1_SQRT_2)
}
