//! Mergeable moment accumulators.

use serde::{Deserialize, Serialize};

use crate::ensemble::Accumulator;

/// Count, sum and sum of squares of a scalar.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub n: u64,
    pub sum: f64,
    pub sumsq: f64,
}

impl Moments {
    #[inline]
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        self.sumsq += x * x;
    }

    pub fn mean(&self) -> f64 {
        self.sum / self.n as f64
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        let n = self.n as f64;
        ((self.sumsq - self.sum * self.sum / n) / (n - 1.0)).max(0.0)
    }

    pub fn stderr(&self) -> f64 {
        (self.variance() / self.n as f64).sqrt()
    }
}

impl Accumulator for Moments {
    fn merge(&mut self, o: Self) {
        self.n += o.n;
        self.sum += o.sum;
        self.sumsq += o.sumsq;
    }
}

/// First and second moments of a pair `(a, b)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PairMoments {
    pub n: u64,
    pub sa: f64,
    pub sb: f64,
    pub saa: f64,
    pub sbb: f64,
    pub sab: f64,
}

impl PairMoments {
    #[inline]
    pub fn push(&mut self, a: f64, b: f64) {
        self.n += 1;
        self.sa += a;
        self.sb += b;
        self.saa += a * a;
        self.sbb += b * b;
        self.sab += a * b;
    }

    /// Sample covariance matrix `[[caa, cab], [cab, cbb]]` (divisor n − 1).
    pub fn covariance(&self) -> [[f64; 2]; 2] {
        let n = self.n as f64;
        let caa = (self.saa - self.sa * self.sa / n) / (n - 1.0);
        let cbb = (self.sbb - self.sb * self.sb / n) / (n - 1.0);
        let cab = (self.sab - self.sa * self.sb / n) / (n - 1.0);
        [[caa, cab], [cab, cbb]]
    }

    /// Second moments about zero, `E[a²]`, `E[b²]`, `E[ab]`.
    pub fn raw_second(&self) -> [f64; 3] {
        let n = self.n as f64;
        [self.saa / n, self.sbb / n, self.sab / n]
    }
}

impl Accumulator for PairMoments {
    fn merge(&mut self, o: Self) {
        self.n += o.n;
        self.sa += o.sa;
        self.sb += o.sb;
        self.saa += o.saa;
        self.sbb += o.sbb;
        self.sab += o.sab;
    }
}

/// Per-cell sums of a per-particle quantity, with the number of particles
/// contributing a nonzero value to each cell.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CellSums {
    pub sum: Vec<f64>,
    pub sumsq: Vec<f64>,
    pub nonzero: Vec<u64>,
}

impl CellSums {
    pub fn new(cells: usize) -> Self {
        CellSums { sum: vec![0.0; cells], sumsq: vec![0.0; cells], nonzero: vec![0; cells] }
    }

    pub fn len(&self) -> usize {
        self.sum.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sum.is_empty()
    }

    /// Adds one particle's per-cell values.
    pub fn push(&mut self, values: &[f64]) {
        for (c, &v) in values.iter().enumerate().take(self.sum.len()) {
            if v != 0.0 {
                self.sum[c] += v;
                self.sumsq[c] += v * v;
                self.nonzero[c] += 1;
            }
        }
    }

    /// Mean over `n` particles and its standard error, per cell.
    pub fn mean_stderr(&self, n: u64) -> Vec<(f64, f64)> {
        let nf = n as f64;
        self.sum
            .iter()
            .zip(&self.sumsq)
            .map(|(&s, &q)| {
                let mean = s / nf;
                let var = ((q - s * s / nf) / (nf - 1.0)).max(0.0);
                (mean, (var / nf).sqrt())
            })
            .collect()
    }
}

impl Accumulator for CellSums {
    fn merge(&mut self, o: Self) {
        if self.sum.len() < o.sum.len() {
            self.sum.resize(o.sum.len(), 0.0);
            self.sumsq.resize(o.sum.len(), 0.0);
            self.nonzero.resize(o.sum.len(), 0);
        }
        for c in 0..o.sum.len() {
            self.sum[c] += o.sum[c];
            self.sumsq[c] += o.sumsq[c];
            self.nonzero[c] += o.nonzero[c];
        }
    }
}

impl<A: Accumulator> Accumulator for Vec<A> {
    fn merge(&mut self, o: Self) {
        if self.is_empty() {
            *self = o;
            return;
        }
        assert_eq!(self.len(), o.len(), "merging accumulators of different shapes");
        for (a, b) in self.iter_mut().zip(o) {
            a.merge(b);
        }
    }
}

impl<A: Accumulator, B: Accumulator> Accumulator for (A, B) {
    fn merge(&mut self, o: Self) {
        self.0.merge(o.0);
        self.1.merge(o.1);
    }
}

impl Accumulator for u64 {
    fn merge(&mut self, o: Self) {
        *self += o;
    }
}

/// Jackknife standard error of `stat` over `blocks` of a block accumulator.
pub fn jackknife<A: Accumulator + Default>(blocks: &[A], stat: impl Fn(&A) -> f64) -> f64 {
    let g = blocks.len();
    let leave_out: Vec<f64> = (0..g)
        .map(|skip| {
            let mut acc = A::default();
            for (j, b) in blocks.iter().enumerate() {
                if j != skip {
                    acc.merge(b.clone());
                }
            }
            stat(&acc)
        })
        .collect();
    let mean = leave_out.iter().sum::<f64>() / g as f64;
    let ss: f64 = leave_out.iter().map(|v| (v - mean).powi(2)).sum();
    ((g as f64 - 1.0) / g as f64 * ss).sqrt()
}
