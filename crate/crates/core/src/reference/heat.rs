//! Heat equation on (0,1) with constant Dirichlet data.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use super::quad::simpson;
use super::Series;
use crate::error::{Error, Result};

/// Default number of sine modes.
pub const DEFAULT_MODES: usize = 256;
/// Simpson intervals used to project a callable profile.
pub const DEFAULT_INTERVALS: usize = 1 << 14;

#[derive(Clone)]
enum Profile {
    Callable(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
    /// Values on a uniform grid of `[0, 1]`.
    Table(Vec<f64>),
}

impl Profile {
    fn eval(&self, x: f64) -> f64 {
        match self {
            Profile::Callable(f) => f(x),
            Profile::Table(v) => {
                let m = (v.len() - 1) as f64;
                let p = (x * m).clamp(0.0, m);
                let i = (p.floor() as usize).min(v.len() - 2);
                let w = p - i as f64;
                v[i] * (1.0 - w) + v[i + 1] * w
            }
        }
    }
}

/// `u_t = (σ̂²/2) u_xx`, `u(0,·) = f`, `u(t,0) = f₀`, `u(t,1) = f₁`, solved by a
/// sine expansion of `f` minus the stationary linear profile.
#[derive(Clone)]
pub struct HeatReference {
    pub sigma_hat: f64,
    pub f0: f64,
    pub f1: f64,
    profile: Profile,
    /// Sine coefficients `b_1, …, b_K`.
    coefficients: Vec<f64>,
}

impl fmt::Debug for HeatReference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HeatReference")
            .field("sigma_hat", &self.sigma_hat)
            .field("f0", &self.f0)
            .field("f1", &self.f1)
            .field("modes", &self.coefficients.len())
            .finish()
    }
}

impl HeatReference {
    pub fn new(
        sigma_hat: f64,
        f0: f64,
        f1: f64,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        modes: usize,
    ) -> Result<Self> {
        let m = DEFAULT_INTERVALS.max(16 * modes).next_multiple_of(2);
        let samples: Vec<f64> = (0..=m).map(|i| f(i as f64 / m as f64)).collect();
        Self::build(sigma_hat, f0, f1, Profile::Callable(Arc::new(f)), &samples, modes)
    }

    /// Profile given by `values` on a uniform grid of `[0, 1]` with an even
    /// number of intervals, interpolated linearly in between.
    pub fn from_table(sigma_hat: f64, f0: f64, f1: f64, values: Vec<f64>, modes: usize) -> Result<Self> {
        let m = values.len().saturating_sub(1);
        if m < 4 * modes {
            return Err(Error::QuadratureFailure(format!("{m} intervals cannot resolve {modes} modes")));
        }
        let samples = values.clone();
        Self::build(sigma_hat, f0, f1, Profile::Table(values), &samples, modes)
    }

    fn build(sigma_hat: f64, f0: f64, f1: f64, profile: Profile, samples: &[f64], modes: usize) -> Result<Self> {
        if !(sigma_hat > 0.0) || modes == 0 {
            return Err(Error::DomainError("need sigma_hat > 0 and at least one mode".into()));
        }
        if samples.iter().any(|v| !v.is_finite()) || !f0.is_finite() || !f1.is_finite() {
            return Err(Error::QuadratureFailure("non-finite profile values".into()));
        }
        let m = samples.len() - 1;
        let h = 1.0 / m as f64;
        let g: Vec<f64> =
            samples.iter().enumerate().map(|(i, &v)| v - (f0 + (f1 - f0) * (i as f64 * h))).collect();
        let mut buf = vec![0.0; m + 1];
        let coefficients = (1..=modes)
            .map(|n| {
                let w = n as f64 * PI;
                for (i, b) in buf.iter_mut().enumerate() {
                    *b = g[i] * (w * i as f64 * h).sin();
                }
                simpson(&buf, h).map(|v| 2.0 * v)
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(HeatReference { sigma_hat, f0, f1, profile, coefficients })
    }

    pub fn modes(&self) -> usize {
        self.coefficients.len()
    }

    pub fn stationary(&self, x: f64) -> f64 {
        self.f0 + (self.f1 - self.f0) * x
    }
}

/// Evaluates the solution. At `t = 0` the initial profile is returned. The
/// tail bound assumes the dropped coefficients do not exceed the largest of
/// the last half of the retained ones.
pub fn heat_solution(r: &HeatReference, t: f64, x: f64) -> Result<Series> {
    if !(t >= 0.0) || !(0.0..=1.0).contains(&x) {
        return Err(Error::DomainError(format!("need t >= 0 and x in [0,1], got t={t}, x={x}")));
    }
    if t == 0.0 {
        return Ok(Series { value: r.profile.eval(x), tail_bound: 0.0, terms: 0 });
    }
    if x == 0.0 || x == 1.0 {
        return Ok(Series { value: r.stationary(x), tail_bound: 0.0, terms: 0 });
    }
    let a = 0.5 * r.sigma_hat * r.sigma_hat * PI * PI * t;
    let mut v = r.stationary(x);
    let mut used = 0;
    for (i, b) in r.coefficients.iter().enumerate() {
        let n = (i + 1) as f64;
        let decay = (-a * n * n).exp();
        if decay < 1e-300 {
            break;
        }
        v += b * decay * (n * PI * x).sin();
        used = i + 1;
    }
    let k = r.coefficients.len();
    let bmax = r.coefficients[k / 2..].iter().fold(0.0f64, |m, b| m.max(b.abs()));
    let kk = (k + 1) as f64;
    let q = (-a * (2.0 * kk + 1.0)).exp();
    let tail_bound = if q < 1.0 { bmax * (-a * kk * kk).exp() / (1.0 - q) } else { f64::INFINITY };
    Ok(Series { value: v, tail_bound, terms: used as u32 })
}

/// Crank–Nicolson solver for `u_t = D u_xx` on `[0, 1]` with constant
/// Dirichlet values, used as an independent oracle.
#[derive(Debug, Clone)]
pub struct CrankNicolson {
    pub diffusivity: f64,
    pub left: f64,
    pub right: f64,
    /// Values at `x_i = i/nx`, `i = 0..=nx`.
    pub u: Vec<f64>,
    pub time: f64,
}

impl CrankNicolson {
    pub fn new(diffusivity: f64, left: f64, right: f64, nx: usize, f: impl Fn(f64) -> f64) -> Self {
        let mut u: Vec<f64> = (0..=nx).map(|i| f(i as f64 / nx as f64)).collect();
        u[0] = left;
        u[nx] = right;
        CrankNicolson { diffusivity, left, right, u, time: 0.0 }
    }

    /// Advances by `steps` steps of size `dt`.
    pub fn advance(&mut self, dt: f64, steps: usize) {
        let nx = self.u.len() - 1;
        let h = 1.0 / nx as f64;
        let r = self.diffusivity * dt / (h * h);
        let n = nx - 1;
        let (diag, off) = (1.0 + r, -0.5 * r);
        // Thomas elimination coefficients are the same at every step.
        let mut c = vec![0.0; n];
        let mut denom = vec![0.0; n];
        denom[0] = diag;
        c[0] = off / diag;
        for i in 1..n {
            denom[i] = diag - off * c[i - 1];
            c[i] = off / denom[i];
        }
        let mut rhs = vec![0.0; n];
        for _ in 0..steps {
            for (i, w) in self.u.windows(3).enumerate() {
                rhs[i] = w[1] + 0.5 * r * (w[0] - 2.0 * w[1] + w[2]);
            }
            rhs[0] += 0.5 * r * self.left;
            rhs[n - 1] += 0.5 * r * self.right;
            rhs[0] /= denom[0];
            for i in 1..n {
                rhs[i] = (rhs[i] - off * rhs[i - 1]) / denom[i];
            }
            for i in (0..n - 1).rev() {
                rhs[i] -= c[i] * rhs[i + 1];
            }
            self.u[1..=n].copy_from_slice(&rhs);
            self.time += dt;
        }
    }

    /// Linear interpolation of the current grid values.
    pub fn value(&self, x: f64) -> f64 {
        Profile::Table(self.u.clone()).eval(x)
    }
}
