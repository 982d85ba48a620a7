//! Stationary density profiles from Poisson sources.
//!
//! By Campbell's formula the stationary mean count in strip `m` equals the
//! source rate times the expected time one injected particle spends in that
//! strip before absorption, so each particle contributes its occupation
//! vector and no arrival process is simulated.

use serde::{Deserialize, Serialize};

use super::{require_particles, StripOccupation};
use crate::dynamics::{Particle, Stop, WallSide};
use crate::ensemble::{run_simple, Accumulator, Experiment};
use crate::error::{Error, Result};
use crate::geometry::{Tube, TubeKind};
use crate::measures::{InjectionMeasure, RandomStream};
use crate::stats::{CellSums, Moments};

/// A Poisson source of particles entering at one end of the tube.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Source {
    pub measure: InjectionMeasure,
    pub side: WallSide,
    pub rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileCell {
    pub cell: usize,
    pub estimate: f64,
    pub stderr: f64,
    /// Particles that visited the cell.
    pub visits: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityProfile {
    pub cells: Vec<ProfileCell>,
    pub measure: String,
    pub rate: f64,
    pub t_cap: f64,
    pub length: Option<u32>,
    /// Expected occupation lost to the time cap, per cell (zero when not
    /// modelled).
    pub tail_bias: Vec<f64>,
    /// Fraction of particles still alive at the cap.
    pub capped_fraction: f64,
}

impl DensityProfile {
    pub fn estimates(&self) -> Vec<f64> {
        self.cells.iter().map(|c| c.estimate).collect()
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn profile_from_sums(
    sums: &CellSums,
    n: u64,
    rate: f64,
    measure: &str,
    t_cap: f64,
    length: Option<u32>,
    tail_bias: Vec<f64>,
    capped_fraction: f64,
) -> DensityProfile {
    let cells = sums
        .mean_stderr(n)
        .into_iter()
        .enumerate()
        .map(|(cell, (m, se))| ProfileCell { cell, estimate: rate * m, stderr: rate * se, visits: sums.nonzero[cell] })
        .collect();
    DensityProfile { cells, measure: measure.into(), rate, t_cap, length, tail_bias, capped_fraction }
}

/// Occupation profile of cells `0..cells` fed by one or more sources.
/// Particle `i` comes from source `i mod sources.len()`.
#[derive(Debug, Clone)]
pub struct ProfileExperiment {
    pub tube: Tube,
    pub sources: Vec<Source>,
    pub t_cap: f64,
    pub cells: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProfileAcc {
    pub per_source: Vec<CellSums>,
    pub capped: Vec<u64>,
    /// `X̂(t_cap)²` of capped particles.
    pub cap_square: Moments,
}

impl Accumulator for ProfileAcc {
    fn merge(&mut self, o: Self) {
        self.per_source.merge(o.per_source);
        self.capped.merge(o.capped);
        self.cap_square.merge(o.cap_square);
    }
}

impl ProfileExperiment {
    pub fn new(tube: &Tube, sources: Vec<Source>, t_cap: f64, cells: usize) -> Result<Self> {
        if sources.is_empty() {
            return Err(Error::InvalidParameter("at least one source is required".into()));
        }
        if !(t_cap > 0.0) {
            return Err(Error::InvalidParameter(format!("t_cap must be positive, got {t_cap}")));
        }
        for s in &sources {
            if !(s.rate >= 0.0) {
                return Err(Error::InvalidParameter(format!("source rate must be >= 0, got {}", s.rate)));
            }
            if tube.config().kind == TubeKind::SemiInfinite && s.side == WallSide::Right {
                return Err(Error::InvalidParameter("a semi-infinite tube has no right end".into()));
            }
            s.measure.validate(tube)?;
        }
        Ok(ProfileExperiment { tube: tube.clone(), sources, t_cap, cells })
    }

    fn length(&self) -> Option<u32> {
        match self.tube.config().kind {
            TubeKind::Finite { length } => Some(length),
            _ => None,
        }
    }
}

impl Experiment for ProfileExperiment {
    type Acc = ProfileAcc;
    type Output = DensityProfile;

    fn empty(&self) -> ProfileAcc {
        ProfileAcc {
            per_source: vec![CellSums::new(self.cells); self.sources.len()],
            capped: vec![0; self.sources.len()],
            cap_square: Moments::default(),
        }
    }

    fn particle(&self, index: u64, stream: &mut RandomStream, acc: &mut ProfileAcc) -> Result<()> {
        let k = (index % self.sources.len() as u64) as usize;
        let src = &self.sources[k];
        let length = self.length().unwrap_or(0) as f64;
        let start = src.measure.sample(stream, &self.tube, src.side, length);
        let mut obs = StripOccupation::new(0, self.cells);
        let mut p = Particle::new(start);
        if p.advance(&self.tube, self.tube.walls(), self.t_cap, u64::MAX, &mut obs)? == Stop::Time {
            acc.capped[k] += 1;
            acc.cap_square.push(p.state.position.x.powi(2));
        }
        acc.per_source[k].push(&obs.times);
        Ok(())
    }

    fn finish(&self, acc: ProfileAcc, n: u64) -> Result<DensityProfile> {
        let k = self.sources.len() as u64;
        require_particles(n, 2 * k)?;
        let mut est = vec![0.0; self.cells];
        let mut var = vec![0.0; self.cells];
        let mut visits = vec![0u64; self.cells];
        for (s, (src, sums)) in self.sources.iter().zip(&acc.per_source).enumerate() {
            let ns = n / k + u64::from((s as u64) < n % k);
            for (c, (m, se)) in sums.mean_stderr(ns).into_iter().enumerate() {
                est[c] += src.rate * m;
                var[c] += (src.rate * se).powi(2);
                visits[c] += sums.nonzero[c];
            }
        }
        let cells = (0..self.cells)
            .map(|c| ProfileCell { cell: c, estimate: est[c], stderr: var[c].sqrt(), visits: visits[c] })
            .collect();
        let capped = acc.capped.iter().sum::<u64>() as f64 / n as f64;
        // With one wall the survivors at the cap are Rayleigh distributed and
        // P(τ̂* > t) ≈ ĉ₁/√t, which gives the occupation still to come.
        let tail_bias = match self.length() {
            None if acc.cap_square.n > 1 => {
                let sigma2 = acc.cap_square.mean() / (2.0 * self.t_cap);
                let rate: f64 = self.sources.iter().map(|s| s.rate).sum();
                (0..self.cells).map(|m| rate * 2.0 * capped * (m as f64 + 0.5) / sigma2).collect()
            }
            _ => vec![0.0; self.cells],
        };
        let measure = if self.sources.len() == 1 { self.sources[0].measure.name() } else { "mixed" };
        let rate = self.sources.iter().map(|s| s.rate).sum();
        Ok(DensityProfile { cells, measure: measure.into(), rate, t_cap: self.t_cap, length: self.length(), tail_bias, capped_fraction: capped })
    }
}

/// Stationary profile of a single left source of rate `rate` over cells
/// `0..cells`.
#[allow(clippy::too_many_arguments)]
pub fn density_profile(
    tube: &Tube,
    measure: InjectionMeasure,
    rate: f64,
    t_cap: f64,
    cells: usize,
    n_particles: u64,
    seed: u64,
    threads: usize,
) -> Result<DensityProfile> {
    let exp = ProfileExperiment::new(tube, vec![Source { measure, side: WallSide::Left, rate }], t_cap, cells)?;
    run_simple(&exp, n_particles, seed, threads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{certified, HorizonSettings, TubeConfig};

    fn tube(kind: TubeKind) -> Tube {
        let cfg = TubeConfig::new(TubeConfig::default_disks(), kind);
        let (cfg, _) = certified(&cfg, &HorizonSettings { mc_trajectories: 64, ..Default::default() }, 1).unwrap();
        Tube::new(&cfg).unwrap()
    }

    #[test]
    fn doubling_the_rate_doubles_the_profile() {
        let t = tube(TubeKind::SemiInfinite);
        let a = density_profile(&t, InjectionMeasure::Mu0Cell0, 1.0, 500.0, 6, 600, 4, 1).unwrap();
        let b = density_profile(&t, InjectionMeasure::Mu0Cell0, 2.0, 500.0, 6, 600, 4, 1).unwrap();
        for (x, y) in a.cells.iter().zip(&b.cells) {
            assert_eq!(2.0 * x.estimate, y.estimate);
        }
    }

    #[test]
    fn finite_tube_empties_before_a_long_cap() {
        let t = tube(TubeKind::Finite { length: 4 });
        let p = density_profile(&t, InjectionMeasure::WallInflow { side: WallSide::Left }, 1.0, 1600.0, 4, 1000, 2, 1)
            .unwrap();
        assert!(p.capped_fraction < 0.01);
        assert!(p.cells.iter().all(|c| c.estimate > 0.0));
        assert!(p.tail_bias.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn right_source_mirrors_left_source() {
        let t = tube(TubeKind::Finite { length: 4 });
        let mk = |side| {
            let src = Source { measure: InjectionMeasure::WallInflow { side }, side, rate: 1.0 };
            run_simple(&ProfileExperiment::new(&t, vec![src], 1600.0, 4).unwrap(), 4000, 9, 1).unwrap()
        };
        let (l, r) = (mk(WallSide::Left), mk(WallSide::Right));
        for c in 0..4 {
            let (a, b) = (l.cells[c], r.cells[3 - c]);
            assert!((a.estimate - b.estimate).abs() < 5.0 * (a.stderr.hypot(b.stderr)), "{a:?} {b:?}");
        }
    }

    #[test]
    fn right_source_rejected_without_right_end() {
        let t = tube(TubeKind::SemiInfinite);
        let src = Source { measure: InjectionMeasure::Mu0Cell0, side: WallSide::Right, rate: 1.0 };
        assert!(ProfileExperiment::new(&t, vec![src], 10.0, 3).is_err());
    }
}
