//! Joint law of a Brownian meander at time 1 and its running maximum.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::gaussian::phi;
use super::Series;
use crate::error::{Error, Result};

pub const MIN_TERMS: u32 = 3;
const MAX_TERMS: u32 = 1 << 24;

/// Meander law with standard deviation `rho`. The truncation `K` is chosen
/// per evaluation point so that the dropped tail is below `tail_tol`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanderLaw {
    pub rho: f64,
    pub tail_tol: f64,
}

impl MeanderLaw {
    pub fn new(rho: f64) -> Result<Self> {
        Self::with_tolerance(rho, 1e-12)
    }

    pub fn with_tolerance(rho: f64, tail_tol: f64) -> Result<Self> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::DomainError(format!("meander scale must be positive, got {rho}")));
        }
        if !(tail_tol > 0.0) {
            return Err(Error::DomainError("tail tolerance must be positive".into()));
        }
        Ok(MeanderLaw { rho, tail_tol })
    }

    fn scaled(&self, x: f64, y: f64) -> Result<(f64, f64)> {
        if !(x >= 0.0 && x <= y) {
            return Err(Error::DomainError(format!("meander arguments need 0 <= x <= y, got x={x}, y={y}")));
        }
        Ok((x / self.rho, y / self.rho))
    }

    /// `P(X < x, M < y)`, `y` may be infinite.
    pub fn cdf(&self, x: f64, y: f64) -> Result<Series> {
        let (u, v) = self.scaled(x, y)?;
        if v.is_infinite() {
            return Ok(Series { value: -(-0.5 * u * u).exp_m1(), tail_bound: 0.0, terms: 0 });
        }
        if v == 0.0 {
            return Ok(Series { value: 0.0, tail_bound: 0.0, terms: 0 });
        }
        Ok(adaptive(self.tail_tol, |k| cdf_sum(u, v, k)))
    }

    /// The series truncated at `|k| <= terms`.
    pub fn cdf_truncated(&self, x: f64, y: f64, terms: u32) -> Result<Series> {
        let (u, v) = self.scaled(x, y)?;
        let (value, tail_bound) = cdf_sum(u, v, terms);
        Ok(Series { value, tail_bound, terms })
    }

    /// Density in `x` of `P(X ∈ dx, M < y)`, `y` may be infinite.
    pub fn density(&self, x: f64, y: f64) -> Result<Series> {
        let (u, v) = self.scaled(x, y)?;
        if v.is_infinite() {
            return Ok(Series { value: u * (-0.5 * u * u).exp() / self.rho, tail_bound: 0.0, terms: 0 });
        }
        if v == 0.0 {
            return Ok(Series { value: 0.0, tail_bound: 0.0, terms: 0 });
        }
        let rho = self.rho;
        Ok(adaptive(self.tail_tol, |k| {
            let (s, b) = density_sum(u, v, k);
            (s / rho, b / rho)
        }))
    }

    pub fn density_truncated(&self, x: f64, y: f64, terms: u32) -> Result<Series> {
        let (u, v) = self.scaled(x, y)?;
        let (s, b) = density_sum(u, v, terms);
        Ok(Series { value: s / self.rho, tail_bound: b / self.rho, terms })
    }
}

fn adaptive(tol: f64, eval: impl Fn(u32) -> (f64, f64)) -> Series {
    let mut k = MIN_TERMS;
    loop {
        let (value, tail_bound) = eval(k);
        if tail_bound < tol || k >= MAX_TERMS {
            return Series { value, tail_bound, terms: k };
        }
        k *= 2;
    }
}

// Below this scaled barrier the Poisson-dual series is used: it needs few
// terms and has no cancellation.
const DUAL_BELOW: f64 = 1.0;

// Unit-scale series; the k and −k terms are paired. For |k| > K each term is
// bounded by exp(−((2|k|−1)v)²/2), whose ratios are at most exp(−4(K+1)v²).
fn cdf_sum(u: f64, v: f64, terms: u32) -> (f64, f64) {
    if v < DUAL_BELOW {
        return cdf_dual(u, v, terms);
    }
    let g = |z: f64| (-0.5 * z * z).exp();
    let mut s = 1.0 - g(u);
    for k in 1..=terms {
        let a = 2.0 * k as f64 * v;
        s += 2.0 * g(a) - g(a + u) - g(a - u);
    }
    let w = (2 * terms + 1) as f64 * v;
    let q = (-4.0 * (terms + 1) as f64 * v * v).exp();
    let bound = if q < 1.0 { 2.0 * g(w) / (1.0 - q) } else { f64::INFINITY };
    (s.clamp(0.0, 1.0), bound)
}

// Terms are bounded by w·exp(−w²/2) with w ≥ (2|k|−1)v, decreasing once w ≥ 1.
fn density_sum(u: f64, v: f64, terms: u32) -> (f64, f64) {
    if v < DUAL_BELOW {
        return density_dual(u, v, terms);
    }
    let h = |z: f64| z * (-0.5 * z * z).exp();
    let mut s = h(u);
    for k in 1..=terms {
        let a = 2.0 * k as f64 * v;
        s += h(a + u) + h(u - a);
    }
    let w = (2 * terms + 1) as f64 * v;
    let kk = (terms + 1) as f64;
    let q = (2.0 * kk + 1.0) / (2.0 * kk - 1.0) * (-4.0 * kk * v * v).exp();
    let bound = if w >= 1.0 && q < 1.0 { 2.0 * h(w) / (1.0 - q) } else { f64::INFINITY };
    (s, bound)
}

// Poisson summation of the theta series in u:
//   cdf     = (2√(2π)/v) Σ_{n≥1} e^{−π²n²/2v²} sin²(πnu/2v)
//   density = (π√(2π)/v²) Σ_{n≥1} n e^{−π²n²/2v²} sin(πnu/v)
fn cdf_dual(u: f64, v: f64, terms: u32) -> (f64, f64) {
    let a = PI * PI / (2.0 * v * v);
    let pre = 2.0 * (2.0 * PI).sqrt() / v;
    let mut s = 0.0;
    for n in 1..=terms {
        let n = n as f64;
        s += (-a * n * n).exp() * (0.5 * PI * n * u / v).sin().powi(2);
    }
    let nn = (terms + 1) as f64;
    let q = (-a * (2.0 * nn + 1.0)).exp();
    ((pre * s).clamp(0.0, 1.0), pre * (-a * nn * nn).exp() / (1.0 - q))
}

fn density_dual(u: f64, v: f64, terms: u32) -> (f64, f64) {
    let a = PI * PI / (2.0 * v * v);
    let pre = PI * (2.0 * PI).sqrt() / (v * v);
    let mut s = 0.0;
    for n in 1..=terms {
        let n = n as f64;
        s += n * (-a * n * n).exp() * (PI * n * u / v).sin();
    }
    let nn = (terms + 1) as f64;
    let q = (nn + 1.0) / nn * (-a * (2.0 * nn + 1.0)).exp();
    (pre * s, pre * nn * (-a * nn * nn).exp() / (1.0 - q))
}

/// Approximates the meander density by conditioning on the position at time
/// `1 − δt` (binned with width `y·δs`) followed by a free Gaussian step.
pub fn meander_chop_identity(law: &MeanderLaw, x: f64, y: f64, delta_t: f64, delta_s: f64) -> Result<f64> {
    if !(x > 0.0 && x < y && y.is_finite()) {
        return Err(Error::DomainError(format!("chop identity needs 0 < x < y < inf, got x={x}, y={y}")));
    }
    for (name, d) in [("delta_t", delta_t), ("delta_s", delta_s)] {
        if !(d > 0.0 && d < 1.0) {
            return Err(Error::DomainError(format!("{name} must lie in (0,1), got {d}")));
        }
    }
    let early = MeanderLaw::with_tolerance(law.rho * (1.0 - delta_t).sqrt(), law.tail_tol)?;
    let step = law.rho * delta_t.sqrt();
    let width = y * delta_s;
    let bins = (1.0 / delta_s).floor() as u64;
    let mut prev = early.cdf(width.min(y), y)?.value;
    let mut total = 0.0;
    for h in 1..=bins {
        let lo = h as f64 * width;
        let hi = ((h + 1) as f64 * width).min(y);
        let next = early.cdf(hi, y)?.value;
        if lo < y {
            let mid = 0.5 * (lo + hi);
            total += (next - prev).max(0.0) * phi(step, x - mid);
        }
        prev = next;
    }
    Ok(total)
}
