//! Bi-infinite tube: transport coefficients, mean free path, invariant-measure
//! marginals, and the continuous-time and joint local-limit counts.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{require_particles, LltResult};
use crate::analysis::{ks_test, KSResult};
use crate::dynamics::{step_map, Particle, Stop};
use crate::ensemble::{run_simple, Accumulator, Experiment};
use crate::error::{Error, Result};
use crate::geometry::{Tube, TubeKind, Walls};
use crate::measures::{derive_stream, sample_mu0_cell0, RandomStream};
use crate::reference::{gaussian_density, gaussian_density2};
use crate::stats::{jackknife, Moments, PairMoments};

/// Jackknife blocks for transport standard errors.
pub const BLOCKS: usize = 32;

/// Counts `⌊X̂(T)⌋ − ⌊x√T⌋ ∈ [−cells, cells]` (X̂ measured from the start).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuousWindow {
    pub t: f64,
    pub x: f64,
    pub cells: u32,
}

/// Counts `⌊X_n⌋ − ⌊x√n⌋ ∈ [−cells, cells]` together with
/// `⌊(F_n − nκ̄ − y√n)/Δ⌋ ∈ [−slots, slots]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointWindow {
    pub n: u64,
    pub x: f64,
    pub y: f64,
    pub delta: f64,
    pub cells: u32,
    pub slots: u32,
}

/// μ₀ particles from cell 0 in a tube without walls, observed after fixed
/// numbers of collisions and optionally at one fixed time.
#[derive(Debug, Clone)]
pub struct BiInfiniteExperiment {
    pub tube: Tube,
    pub snapshots: Vec<u64>,
    pub n_particles: u64,
    pub continuous: Option<ContinuousWindow>,
    pub joint: Option<JointWindow>,
    kappa_exact: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BiAcc {
    /// `[snapshot][block]` moments of `(X_n, F_n − nκ̄)`.
    pub blocks: Vec<Vec<PairMoments>>,
    pub continuous_hits: u64,
    pub joint_hits: u64,
}

impl Accumulator for BiAcc {
    fn merge(&mut self, o: Self) {
        self.blocks.merge(o.blocks);
        self.continuous_hits += o.continuous_hits;
        self.joint_hits += o.joint_hits;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub n: u64,
    /// `Var(X_n)/n`.
    pub var_ratio: f64,
    pub var_ratio_se: f64,
    /// `F_n/n`.
    pub kappa: f64,
    pub kappa_se: f64,
    /// Covariance of `(X_n, F_n − nκ̄)/√n`.
    pub sigma: [[f64; 2]; 2],
    pub sigma_se: [[f64; 2]; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportEstimates {
    /// Diffusion constant per collision from the growth of `Var(X_n)` between
    /// the last two snapshots (from the last snapshot alone if there is one).
    pub sigma2: f64,
    pub sigma2_se: f64,
    pub kappa_bar: f64,
    pub kappa_bar_se: f64,
    pub sigma_hat2: f64,
    pub sigma_hat2_se: f64,
    /// Covariance at the last snapshot.
    pub sigma: [[f64; 2]; 2],
    pub sigma_se: [[f64; 2]; 2],
    /// Jackknife error of `Σ₁₁ − sigma2`.
    pub sigma11_minus_sigma2_se: f64,
    pub snapshots: Vec<Snapshot>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiInfiniteOutput {
    pub transport: TransportEstimates,
    pub continuous: Option<LltResult>,
    pub joint: Option<LltResult>,
}

impl BiInfiniteExperiment {
    pub fn new(tube: &Tube, snapshots: &[u64], n_particles: u64) -> Result<Self> {
        let mut snaps = snapshots.to_vec();
        snaps.sort_unstable();
        snaps.dedup();
        if snaps.is_empty() || snaps[0] == 0 {
            return Err(Error::InvalidParameter("snapshots must be positive collision counts".into()));
        }
        Ok(BiInfiniteExperiment {
            tube: tube.with_kind(TubeKind::BiInfinite),
            snapshots: snaps,
            n_particles,
            continuous: None,
            joint: None,
            kappa_exact: tube.config().mean_free_path(),
        })
    }

    pub fn with_continuous(mut self, w: ContinuousWindow) -> Self {
        self.continuous = Some(w);
        self
    }

    pub fn with_joint(mut self, w: JointWindow) -> Self {
        if !self.snapshots.contains(&w.n) {
            self.snapshots.push(w.n);
            self.snapshots.sort_unstable();
        }
        self.joint = Some(w);
        self
    }

    fn block(&self, index: u64) -> usize {
        ((index as u128 * BLOCKS as u128) / self.n_particles.max(1) as u128).min(BLOCKS as u128 - 1) as usize
    }
}

impl Experiment for BiInfiniteExperiment {
    type Acc = BiAcc;
    type Output = BiInfiniteOutput;

    fn empty(&self) -> BiAcc {
        BiAcc { blocks: vec![vec![PairMoments::default(); BLOCKS]; self.snapshots.len()], ..Default::default() }
    }

    fn particle(&self, index: u64, stream: &mut RandomStream, acc: &mut BiAcc) -> Result<()> {
        let start = sample_mu0_cell0(stream, &self.tube).to_flight(&self.tube);
        let x0 = start.position.x;
        let mut p = Particle::new(start);
        let mut pending_time = self.continuous.map(|c| c.t);
        let block = self.block(index);
        let record_time = |p: &Particle, acc: &mut BiAcc| {
            let w = self.continuous.expect("time stop implies a window");
            let target = (w.x * w.t.sqrt()).floor() as i64;
            let m = (p.state.position.x - x0).floor() as i64 - target;
            if m.unsigned_abs() <= w.cells as u64 {
                acc.continuous_hits += 1;
            }
        };
        for (s, &n) in self.snapshots.iter().enumerate() {
            loop {
                match p.advance(&self.tube, Walls::NONE, pending_time.unwrap_or(f64::INFINITY), n, &mut ())? {
                    Stop::Time => {
                        record_time(&p, acc);
                        pending_time = None;
                    }
                    Stop::Collisions => break,
                    other => return Err(Error::InvalidParameter(format!("unexpected stop {other:?} without walls"))),
                }
            }
            let dx = p.state.position.x - x0;
            let df = p.state.time - n as f64 * self.kappa_exact;
            acc.blocks[s][block].push(dx, df);
            if let Some(w) = self.joint.filter(|w| w.n == n) {
                let sn = (n as f64).sqrt();
                let m = dx.floor() as i64 - (w.x * sn).floor() as i64;
                let slot = ((df - w.y * sn) / w.delta).floor();
                if m.unsigned_abs() <= w.cells as u64 && slot.abs() <= w.slots as f64 {
                    acc.joint_hits += 1;
                }
            }
        }
        if let Some(t) = pending_time {
            p.advance(&self.tube, Walls::NONE, t, u64::MAX, &mut ())?;
            record_time(&p, acc);
        }
        Ok(())
    }

    fn finish(&self, acc: BiAcc, n_particles: u64) -> Result<BiInfiniteOutput> {
        require_particles(n_particles, 2 * BLOCKS as u64)?;
        let kx = self.kappa_exact;
        let snapshots: Vec<Snapshot> = self
            .snapshots
            .iter()
            .zip(&acc.blocks)
            .map(|(&n, blocks)| snapshot(n, kx, blocks))
            .collect();
        let last = snapshots.last().expect("nonempty snapshots");
        let k = self.snapshots.len();
        let nf = last.n as f64;
        let (sigma2, sigma2_se, diff_se) = if k >= 2 {
            let (n1, n2) = (self.snapshots[k - 2] as f64, nf);
            let pairs: Vec<(PairMoments, PairMoments)> =
                acc.blocks[k - 2].iter().copied().zip(acc.blocks[k - 1].iter().copied()).collect();
            let inc = |a: &PairMoments, b: &PairMoments| (b.covariance()[0][0] - a.covariance()[0][0]) / (n2 - n1);
            let all = pairs.iter().fold((PairMoments::default(), PairMoments::default()), |mut s, p| {
                s.merge(*p);
                s
            });
            let v = inc(&all.0, &all.1);
            let se = jackknife(&pairs, |p| inc(&p.0, &p.1));
            let dse = jackknife(&pairs, |p| p.1.covariance()[0][0] / n2 - inc(&p.0, &p.1));
            (v, se, dse)
        } else {
            (last.var_ratio, last.var_ratio_se, 0.0)
        };
        let kappa_bar = last.kappa;
        let kappa_bar_se = last.kappa_se;
        let sigma_hat2 = sigma2 / kappa_bar;
        let sigma_hat2_se = sigma_hat2 * ((sigma2_se / sigma2).powi(2) + (kappa_bar_se / kappa_bar).powi(2)).sqrt();
        let transport = TransportEstimates {
            sigma2,
            sigma2_se,
            kappa_bar,
            kappa_bar_se,
            sigma_hat2,
            sigma_hat2_se,
            sigma: last.sigma,
            sigma_se: last.sigma_se,
            sigma11_minus_sigma2_se: diff_se,
            snapshots: snapshots.clone(),
        };
        let nn = n_particles as f64;
        let continuous = self.continuous.map(|w| {
            let st = w.t.sqrt();
            let sigma_hat = sigma_hat2.sqrt();
            let c = (w.x * st).floor() as i64;
            let width = 2 * w.cells as i64 + 1;
            let reference = (-(w.cells as i64)..=w.cells as i64)
                .map(|j| gaussian_density(sigma_hat, ((c + j) as f64 + 0.5) / st).unwrap_or(f64::NAN))
                .sum::<f64>()
                / width as f64;
            let empirical = st * acc.continuous_hits as f64 / (nn * width as f64);
            LltResult::new("continuous", json!(w), empirical, reference, acc.continuous_hits)
        });
        let joint = match self.joint {
            Some(w) => {
                let sn = (w.n as f64).sqrt();
                let c = (w.x * sn).floor() as i64;
                let s = self.snapshots.iter().position(|&m| m == w.n).expect("joint snapshot present");
                let sig = snapshot(w.n, kx, &acc.blocks[s]).sigma;
                let (nc, ns) = (2 * w.cells as i64 + 1, 2 * w.slots as i64 + 1);
                let mut total = 0.0;
                for j in -(w.cells as i64)..=w.cells as i64 {
                    for i in -(w.slots as i64)..=w.slots as i64 {
                        let px = ((c + j) as f64 + 0.5) / sn;
                        let py = w.y + (i as f64 + 0.5) * w.delta / sn;
                        total += gaussian_density2(sig, px, py)?;
                    }
                }
                let reference = total / (nc * ns) as f64;
                let empirical = w.n as f64 * acc.joint_hits as f64 / (nn * w.delta * (nc * ns) as f64);
                Some(LltResult::new("joint", json!(w), empirical, reference, acc.joint_hits))
            }
            None => None,
        };
        Ok(BiInfiniteOutput { transport, continuous, joint })
    }
}

fn snapshot(n: u64, kx: f64, blocks: &[PairMoments]) -> Snapshot {
    let nf = n as f64;
    let mut all = PairMoments::default();
    blocks.iter().for_each(|b| all.merge(*b));
    let cov = |p: &PairMoments, i: usize, j: usize| p.covariance()[i][j] / nf;
    let mut sigma = [[0.0; 2]; 2];
    let mut sigma_se = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            sigma[i][j] = cov(&all, i, j);
            sigma_se[i][j] = jackknife(blocks, |p| cov(p, i, j));
        }
    }
    let kappa = |p: &PairMoments| kx + p.sb / p.n as f64 / nf;
    Snapshot {
        n,
        var_ratio: sigma[0][0],
        var_ratio_se: sigma_se[0][0],
        kappa: kappa(&all),
        kappa_se: jackknife(blocks, kappa),
        sigma,
        sigma_se,
    }
}

/// Transport coefficients from `n_particles` μ₀ orbits of `n_steps`
/// collisions, with an intermediate snapshot at `n_steps/4`.
pub fn estimate_transport(
    tube: &Tube,
    n_particles: u64,
    n_steps: u64,
    seed: u64,
    threads: usize,
) -> Result<TransportEstimates> {
    require_particles(n_particles, 2 * BLOCKS as u64)?;
    let exp = BiInfiniteExperiment::new(tube, &[(n_steps / 4).max(1), n_steps], n_particles)?;
    Ok(run_simple(&exp, n_particles, seed, threads)?.transport)
}

/// Mean flight length over μ₀-distributed orbits.
#[derive(Debug, Clone)]
pub struct MeanFreePath {
    pub tube: Tube,
    pub flights: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanFreePathEstimate {
    pub kappa_bar: f64,
    /// From the spread of independent per-orbit means.
    pub stderr: f64,
    /// `π·(free area)/(total perimeter)`.
    pub exact: f64,
    pub flights: u64,
}

impl Experiment for MeanFreePath {
    type Acc = Moments;
    type Output = MeanFreePathEstimate;

    fn empty(&self) -> Moments {
        Moments::default()
    }

    fn particle(&self, _index: u64, stream: &mut RandomStream, acc: &mut Moments) -> Result<()> {
        let mut b = sample_mu0_cell0(stream, &self.tube);
        let mut total = 0.0;
        for _ in 0..self.flights {
            let (next, inc) = step_map(&b, &self.tube)?;
            total += inc.flight;
            b = next;
        }
        acc.push(total / self.flights as f64);
        Ok(())
    }

    fn finish(&self, acc: Moments, n: u64) -> Result<MeanFreePathEstimate> {
        require_particles(n, 2)?;
        Ok(MeanFreePathEstimate {
            kappa_bar: acc.mean(),
            stderr: acc.stderr(),
            exact: self.tube.config().mean_free_path(),
            flights: n * self.flights,
        })
    }
}

pub fn mean_free_path(
    tube: &Tube,
    n_orbits: u64,
    flights: u64,
    seed: u64,
    threads: usize,
) -> Result<MeanFreePathEstimate> {
    if flights == 0 {
        return Err(Error::InvalidParameter("flights per orbit must be positive".into()));
    }
    run_simple(&MeanFreePath { tube: tube.with_kind(TubeKind::BiInfinite), flights }, n_orbits, seed, threads)
}

/// Kolmogorov–Smirnov checks of the `sin φ` marginal and of the arc-length
/// marginal on each disk along one long orbit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitMarginals {
    pub collisions: u64,
    pub sin_phi: KSResult,
    pub arc_length: Vec<KSResult>,
    pub grazing: u64,
}

pub fn orbit_marginals(tube: &Tube, collisions: u64, seed: u64) -> Result<OrbitMarginals> {
    let tube = tube.with_kind(TubeKind::BiInfinite);
    let mut stream = derive_stream(seed, 0);
    let mut b = sample_mu0_cell0(&mut stream, &tube);
    let mut sin_phi = Vec::with_capacity(collisions as usize);
    let mut arcs: Vec<Vec<f64>> = vec![Vec::new(); tube.disks().len()];
    let mut grazing = 0;
    for _ in 0..collisions {
        let (next, _) = step_map(&b, &tube)?;
        b = next;
        sin_phi.push(b.phi.sin());
        let r = tube.disks()[b.disk_id].radius;
        arcs[b.disk_id].push(b.r / (2.0 * PI * r));
        if b.phi.abs() > PI / 2.0 - 1e-7 {
            grazing += 1;
        }
    }
    let sin_phi = ks_test(&sin_phi, |s| (0.5 * (s + 1.0)).clamp(0.0, 1.0))?;
    let arc_length =
        arcs.iter().map(|a| ks_test(a, |u| u.clamp(0.0, 1.0))).collect::<Result<Vec<KSResult>>>()?;
    Ok(OrbitMarginals { collisions, sin_phi, arc_length, grazing })
}
