//! Killed Brownian motion on (0,1), the limiting profile integral and the
//! boundary-layer solution.

use std::f64::consts::{PI, SQRT_2};

use super::constants::ConstantSet;
use super::gaussian::{normal_cdf, phi};
use super::meander::{MeanderLaw, MIN_TERMS};
use super::quad::integrate;
use super::Series;
use crate::error::{Error, Result};

const TAIL_TOL: f64 = 1e-12;
const MAX_TERMS: u32 = 1 << 24;

fn adaptive(eval: impl Fn(u32) -> (f64, f64)) -> Series {
    let mut k = MIN_TERMS;
    loop {
        let (value, tail_bound) = eval(k);
        if tail_bound < TAIL_TOL || k >= MAX_TERMS {
            return Series { value, tail_bound, terms: k };
        }
        k *= 2;
    }
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::DomainError(format!("{name} must lie in (0,1), got {v}")))
    }
}

/// Transition density of Brownian motion with variance `σ̂²` killed at 0
/// and 1, by the method of images.
pub fn killed_bm_density(sigma_hat: f64, t: f64, x: f64, y: f64) -> Result<Series> {
    if !(sigma_hat > 0.0 && t > 0.0) {
        return Err(Error::DomainError(format!("need sigma_hat > 0 and t > 0, got {sigma_hat}, {t}")));
    }
    check_unit("x", x)?;
    check_unit("y", y)?;
    Ok(killed_series(sigma_hat * t.sqrt(), x, y))
}

fn killed_series(s: f64, x: f64, y: f64) -> Series {
    let d = y - x;
    let e = y + x;
    adaptive(|terms| {
        // Pairs are summed symmetrically so that swapping x and y is exact.
        let mut v = phi(s, d) - phi(s, e);
        for k in 1..=terms {
            let a = 2.0 * k as f64;
            v += (phi(s, d + a) + phi(s, d - a)) - (phi(s, e + a) + phi(s, e - a));
        }
        // Every dropped term has |argument| >= 2K, ratios <= exp(−(8K+4)/2s²).
        let k = terms as f64;
        let q = (-(8.0 * k + 4.0) / (2.0 * s * s)).exp();
        let bound = if q < 1.0 { 4.0 * phi(s, 2.0 * k) / (1.0 - q) } else { f64::INFINITY };
        (v, bound)
    })
}

/// `I_x = (ĉ₁√(2π)/σ̂)(1 − x)`.
pub fn profile_limit(k: &ConstantSet, x: f64) -> Result<f64> {
    check_unit("x", x)?;
    Ok(k.c1_hat * (2.0 * PI).sqrt() / k.sigma_hat * (1.0 - x))
}

/// `I_{x,δ} = 2ĉ₁ ∫_{√δ}^{1/√δ} φ_σ̂(xs, s)/s ds`, by adaptive quadrature.
pub fn profile_integral(k: &ConstantSet, x: f64, delta: f64) -> Result<f64> {
    check_unit("x", x)?;
    check_unit("delta", delta)?;
    let law = MeanderLaw::new(k.sigma_hat)?;
    let lo = delta.sqrt();
    let hi = 1.0 / lo;
    let integrand = |s: f64| law.density(x * s, s).map_or(f64::NAN, |d| d.value / s);
    let scale = profile_limit(k, x)?.max(f64::MIN_POSITIVE);
    // Split at the Gaussian decay scale of the k = 0 term so the tail interval
    // does not dominate the error budget.
    let knee = (8.0 * k.sigma_hat / x).clamp(lo, hi);
    let v = integrate(integrand, lo, knee, 1e-13 * scale)? + integrate(integrand, knee, hi, 1e-13 * scale)?;
    if !v.is_finite() {
        return Err(Error::QuadratureFailure("non-finite profile integrand".into()));
    }
    Ok(2.0 * k.c1_hat * v)
}

/// Solution of the heat equation `u_t = (σ̂²/2)u_xx` on (0,1) with `u(0,·) = 0`,
/// `u(t,0) = f₀`, `u(t,1) = 0`.
pub fn boundary_layer(k: &ConstantSet, f0: f64, t: f64, x: f64) -> Result<Series> {
    if !(t > 0.0) {
        return Err(Error::DomainError(format!("t must be positive, got {t}")));
    }
    check_unit("x", x)?;
    let s = k.sigma_hat * t.sqrt() * SQRT_2;
    let term = |z: f64| z.signum() * libm::erfc(z.abs() / s);
    let series = adaptive(|terms| {
        let mut v = term(x);
        for j in 1..=terms {
            let a = 2.0 * j as f64;
            v += term(x + a) + term(x - a);
        }
        // Dropped terms have |argument| >= 2K + 1 and erfc(z) <= exp(−z²).
        let w = (2 * terms + 1) as f64 / s;
        let q = (-8.0 * (terms + 1) as f64 / (s * s)).exp();
        let bound = if q < 1.0 { 2.0 * (-w * w).exp() / (1.0 - q) } else { f64::INFINITY };
        (v, bound)
    });
    Ok(Series { value: f0 * series.value, tail_bound: f0.abs() * series.tail_bound, terms: series.terms })
}

/// The same profile integral from the closed-form Gaussian antiderivative.
pub(crate) fn profile_integral_closed(k: &ConstantSet, x: f64, delta: f64) -> f64 {
    let sd = delta.sqrt();
    let mut sum = 0.0;
    let mut j = 0i64;
    loop {
        let mut block = 0.0;
        for kk in if j == 0 { vec![0] } else { vec![j, -j] } {
            let a = 2.0 * kk as f64 + x;
            let z = a.abs() / k.sigma_hat;
            block += a.signum() * (normal_cdf(z / sd) - normal_cdf(z * sd));
        }
        sum += block;
        if j > 0 && (2.0 * j as f64 - 1.0) * sd / k.sigma_hat > 40.0 {
            break;
        }
        j += 1;
    }
    2.0 * k.c1_hat * (2.0 * PI).sqrt() / k.sigma_hat * sum
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference::constants::derive_constants;

    #[test]
    fn killed_density_short_time_is_free_gaussian() {
        let v = killed_bm_density(1.0, 0.01, 0.5, 0.5).unwrap().value;
        assert!((v - 3.989_423).abs() < 1e-6);
    }

    #[test]
    fn killed_density_is_symmetric_and_vanishes_at_walls() {
        for &(t, x, y) in &[(0.05, 0.2, 0.7), (0.5, 0.9, 0.1), (2.0, 0.33, 0.34)] {
            let a = killed_bm_density(0.8, t, x, y).unwrap().value;
            let b = killed_bm_density(0.8, t, y, x).unwrap().value;
            assert_eq!(a, b);
        }
        assert!(killed_bm_density(1.0, 0.1, 0.4, 1e-9).unwrap().value.abs() < 1e-7);
        assert!(killed_bm_density(1.0, 0.1, 0.4, 1.0 - 1e-9).unwrap().value.abs() < 1e-7);
    }

    #[test]
    fn killed_mass_decreases() {
        let mass = |t: f64| integrate(|y| killed_bm_density(1.0, t, 0.3, y).unwrap().value, 1e-12, 1.0 - 1e-12, 1e-11).unwrap();
        let m: Vec<f64> = [0.01, 0.05, 0.2, 1.0].iter().map(|&t| mass(t)).collect();
        assert!(m[0] < 1.0);
        assert!(m.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn chapman_kolmogorov() {
        let (s, t, x, y) = (0.03, 0.05, 0.3, 0.6);
        let lhs = integrate(
            |z| killed_bm_density(1.0, s, x, z).unwrap().value * killed_bm_density(1.0, t, z, y).unwrap().value,
            1e-12,
            1.0 - 1e-12,
            1e-12,
        )
        .unwrap();
        let rhs = killed_bm_density(1.0, s + t, x, y).unwrap().value;
        assert!((lhs - rhs).abs() < 1e-6);
    }

    #[test]
    fn profile_integral_matches_closed_form() {
        let k = derive_constants(0.5, 0.18, 0.15).unwrap();
        for &x in &[0.1, 0.5, 0.9] {
            for &d in &[1e-2, 1e-3] {
                let q = profile_integral(&k, x, d).unwrap();
                let c = profile_integral_closed(&k, x, d);
                assert!(((q - c) / c).abs() < 1e-8, "{x} {d}: {q} vs {c}");
            }
        }
    }

    #[test]
    fn profile_integral_approaches_linear_limit() {
        let k = derive_constants(1.0, 1.0, 1.0).unwrap();
        for &x in &[0.2, 0.5, 0.8] {
            let lim = profile_limit(&k, x).unwrap();
            let errs: Vec<f64> =
                [1e-2, 1e-3, 1e-4].iter().map(|&d| (profile_integral(&k, x, d).unwrap() - lim).abs()).collect();
            // Non-increasing down to rounding level.
            assert!(errs.windows(2).all(|w| w[1] <= w[0] + 1e-14 * lim), "{x}: {errs:?}");
            assert!(errs[0] < 1e-12 * lim || errs[0] > errs[2]);
            assert!(errs[2] / lim < 1e-3);
        }
        assert!(profile_limit(&k, 1.0 - 1e-12).unwrap() < 1e-11);
    }

    #[test]
    fn boundary_layer_limits() {
        let k = derive_constants(0.5, 0.18, 0.15).unwrap();
        let f0 = 2.5;
        for &t in &[0.01, 0.3, 3.0] {
            let u = boundary_layer(&k, f0, t, 1e-6).unwrap().value;
            assert!((u - f0).abs() < 1e-4 * f0, "{t}: {u}");
            assert!(boundary_layer(&k, f0, t, 1.0 - 1e-9).unwrap().value.abs() < 1e-6);
        }
        assert!(boundary_layer(&k, f0, 1e-6, 0.5).unwrap().value < 1e-8 * f0);
    }

    #[test]
    fn boundary_layer_solves_heat_equation() {
        let k = derive_constants(0.5, 0.18, 0.15).unwrap();
        let f0 = 1.7;
        let u = |t: f64, x: f64| boundary_layer(&k, f0, t, x).unwrap().value;
        let (t, x, h) = (0.3, 0.4, 1e-4);
        let ut = (u(t + h, x) - u(t - h, x)) / (2.0 * h);
        let uxx = (u(t, x + h) - 2.0 * u(t, x) + u(t, x - h)) / (h * h);
        let residual = ut - 0.5 * k.sigma_hat * k.sigma_hat * uxx;
        assert!(residual.abs() < 1e-5 * f0, "{residual}");
    }
}
