//! Goodness-of-fit tests, weighted fits and field comparisons.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::OccupancyField;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KSResult {
    pub statistic: f64,
    pub n: usize,
    pub p_value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub intercept_se: f64,
    pub r_squared: f64,
    pub n: usize,
    /// Weighted residual sum of squares divided by `n − 2`.
    pub reduced_chi2: f64,
}

impl FitResult {
    pub fn at(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }
}

/// Kolmogorov distribution upper tail `P(K > λ)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // Theta-dual series, fast for small λ.
        let c = std::f64::consts::PI * std::f64::consts::PI / (8.0 * lambda * lambda);
        let s: f64 = (1..=8).map(|j| (-((2 * j - 1) as f64).powi(2) * c).exp()).sum();
        return (1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s).clamp(0.0, 1.0);
    }
    let mut s = 0.0;
    for j in 1..=100 {
        let t = (-2.0 * (j * j) as f64 * lambda * lambda).exp();
        s += if j % 2 == 1 { t } else { -t };
        if t < 1e-17 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// One-sample Kolmogorov–Smirnov test with the asymptotic p-value
/// (Stephens' small-sample correction of the argument).
pub fn ks_test(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<KSResult> {
    let n = samples.len();
    if n < 10 {
        return Err(Error::TooFewSamples { got: n, need: 10 });
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let nf = n as f64;
    let mut d = 0.0f64;
    let mut i = 0;
    while i < n {
        // Ties are handled as one jump of the empirical distribution.
        let mut j = i;
        while j + 1 < n && xs[j + 1] == xs[i] {
            j += 1;
        }
        let f = cdf(xs[i]);
        d = d.max(f - i as f64 / nf).max((j + 1) as f64 / nf - f);
        i = j + 1;
    }
    let d = d.clamp(0.0, 1.0);
    let sn = nf.sqrt();
    Ok(KSResult { statistic: d, n, p_value: kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d) })
}

/// Weighted least squares with weights `1/stderr²`. Standard errors assume
/// the supplied `stderr` values are correct (no rescaling by the residuals).
pub fn weighted_linear_fit(points: &[(f64, f64, f64)]) -> Result<FitResult> {
    let n = points.len();
    if n < 3 {
        return Err(Error::TooFewSamples { got: n, need: 3 });
    }
    if let Some(p) = points.iter().find(|p| !(p.2 > 0.0) || !p.0.is_finite() || !p.1.is_finite()) {
        return Err(Error::InvalidParameter(format!("fit point {p:?} needs finite values and stderr > 0")));
    }
    let (mut s, mut sx, mut sy) = (0.0, 0.0, 0.0);
    for &(x, y, e) in points {
        let w = 1.0 / (e * e);
        s += w;
        sx += w * x;
        sy += w * y;
    }
    let (xm, ym) = (sx / s, sy / s);
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y, e) in points {
        let w = 1.0 / (e * e);
        sxx += w * (x - xm) * (x - xm);
        sxy += w * (x - xm) * (y - ym);
        syy += w * (y - ym) * (y - ym);
    }
    if sxx <= 0.0 || sxx <= 1e-14 * points.iter().map(|p| p.0 * p.0 / (p.2 * p.2)).sum::<f64>() {
        return Err(Error::DegenerateDesign);
    }
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let rss: f64 = points.iter().map(|&(x, y, e)| ((y - intercept - slope * x) / e).powi(2)).sum();
    let r_squared = if syy > 0.0 { (1.0 - rss / syy).clamp(0.0, 1.0) } else { 1.0 };
    Ok(FitResult {
        slope,
        intercept,
        slope_se: (1.0 / sxx).sqrt(),
        intercept_se: (1.0 / s + xm * xm / sxx).sqrt(),
        r_squared,
        n,
        reduced_chi2: if n > 2 { rss / (n - 2) as f64 } else { f64::NAN },
    })
}

/// Fit of `log p` against `log N` with delta-method errors `stderr/p`.
pub fn loglog_slope(table: &[(f64, f64, f64)]) -> Result<FitResult> {
    let mut pts = Vec::with_capacity(table.len());
    for (i, &(n, p, e)) in table.iter().enumerate() {
        if !(p > 0.0) || !(n > 0.0) {
            return Err(Error::NonPositiveProbability(i));
        }
        pts.push((n.ln(), p.ln(), e / p));
    }
    weighted_linear_fit(&pts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldComparison {
    pub sup_error: f64,
    /// Root-mean-square difference over the compared points.
    pub l2_error: f64,
    /// `z[i][k]` for time index `i` and interior cell `k + EXCLUDED_CELLS`.
    pub z_scores: Vec<Vec<f64>>,
}

/// Cells at each end left out of field comparisons.
pub const EXCLUDED_CELLS: usize = 2;

/// Compares an occupancy field with `reference(t, x)` evaluated at cell
/// centers `x = (k + ½)/L`, skipping boundary cells.
pub fn compare_fields(empirical: &OccupancyField, reference: impl Fn(f64, f64) -> f64) -> Result<FieldComparison> {
    let l = empirical.length;
    if l <= 2 * EXCLUDED_CELLS
        || empirical.u_hat.len() != empirical.times.len()
        || empirical.stderr.len() != empirical.times.len()
        || empirical.u_hat.iter().chain(&empirical.stderr).any(|row| row.len() != l)
    {
        return Err(Error::GridMismatch(format!(
            "field of {} times over {} cells is not a consistent grid",
            empirical.times.len(),
            l
        )));
    }
    let mut sup = 0.0f64;
    let mut ss = 0.0;
    let mut count = 0usize;
    let mut z_scores = Vec::with_capacity(empirical.times.len());
    for (i, &t) in empirical.times.iter().enumerate() {
        let mut row = Vec::with_capacity(l - 2 * EXCLUDED_CELLS);
        for k in EXCLUDED_CELLS..l - EXCLUDED_CELLS {
            let x = (k as f64 + 0.5) / l as f64;
            let diff = empirical.u_hat[i][k] - reference(t, x);
            sup = sup.max(diff.abs());
            ss += diff * diff;
            count += 1;
            let se = empirical.stderr[i][k];
            row.push(if se > 0.0 { diff / se } else if diff == 0.0 { 0.0 } else { diff.signum() * f64::INFINITY });
        }
        z_scores.push(row);
    }
    Ok(FieldComparison { sup_error: sup, l2_error: (ss / count as f64).sqrt(), z_scores })
}

/// Compares two fields on the same grid.
pub fn compare_field_pair(a: &OccupancyField, b: &OccupancyField) -> Result<FieldComparison> {
    if a.length != b.length || a.times != b.times || b.u_hat.len() != b.times.len() {
        return Err(Error::GridMismatch("fields are sampled on different grids".into()));
    }
    let l = a.length as f64;
    compare_fields(a, |t, x| {
        let i = a.times.iter().position(|&s| s == t).expect("same time grid");
        b.u_hat[i][(x * l).floor() as usize]
    })
}
