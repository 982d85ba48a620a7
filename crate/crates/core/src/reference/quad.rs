//! Adaptive Gauss–Kronrod (7/15) quadrature.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
// Gauss weights for nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const MAX_DEPTH: u32 = 40;

/// Returns the Kronrod estimate, the Kronrod–Gauss difference and the
/// Kronrod integral of `|f|`.
fn kronrod(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    let mut abs = WGK[7] * fc.abs();
    for j in 0..7 {
        let dx = h * XGK[j];
        let (l, r) = (f(c - dx), f(c + dx));
        let s = l + r;
        k += WGK[j] * s;
        abs += WGK[j] * (l.abs() + r.abs());
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs(), abs * h.abs())
}

fn refine(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> Result<f64> {
    let (k, err, abs) = kronrod(f, a, b);
    // Below the rounding floor further bisection cannot help.
    if err <= tol || err <= 50.0 * f64::EPSILON * abs {
        return Ok(k);
    }
    if depth >= MAX_DEPTH {
        return Err(Error::QuadratureFailure(format!("no convergence on [{a}, {b}], error estimate {err:e}")));
    }
    let m = 0.5 * (a + b);
    Ok(refine(f, a, m, 0.5 * tol, depth + 1)? + refine(f, m, b, 0.5 * tol, depth + 1)?)
}

/// Integrates `f` over `[a, b]` to absolute error about `tol`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    if !(a.is_finite() && b.is_finite()) || !(tol > 0.0) {
        return Err(Error::QuadratureFailure("finite limits and a positive tolerance are required".into()));
    }
    if a == b {
        return Ok(0.0);
    }
    refine(&f, a, b, tol, 0)
}

/// Composite Simpson rule over samples on a uniform grid with an even number
/// of intervals.
pub fn simpson(samples: &[f64], h: f64) -> Result<f64> {
    let m = samples.len().saturating_sub(1);
    if m < 2 || m % 2 != 0 {
        return Err(Error::QuadratureFailure(format!("Simpson needs an even number of intervals, got {m}")));
    }
    let mut odd = 0.0;
    let mut even = 0.0;
    for (i, &v) in samples.iter().enumerate().take(m).skip(1) {
        if i % 2 == 1 { odd += v } else { even += v }
    }
    Ok(h / 3.0 * (samples[0] + 4.0 * odd + 2.0 * even + samples[m]))
}
