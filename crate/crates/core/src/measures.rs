//! Random streams and initial-condition samplers.

use std::f64::consts::PI;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::dynamics::{BoundaryState, FlightState, WallSide};
use crate::error::{Error, Result};
use crate::geometry::Tube;
use crate::vec2::Vec2;

/// Counter-based random stream: its output is a pure function of
/// `(master_seed, stream_index, counter)`, where the counter addresses
/// 32-bit words of the ChaCha8 keystream.
#[derive(Debug, Clone)]
pub struct RandomStream {
    master_seed: u64,
    stream_index: u64,
    rng: ChaCha8Rng,
}

impl RandomStream {
    pub fn new(master_seed: u64, stream_index: u64, counter: u128) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(stream_index);
        rng.set_word_pos(counter);
        RandomStream { master_seed, stream_index, rng }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_index(&self) -> u64 {
        self.stream_index
    }

    pub fn counter(&self) -> u128 {
        self.rng.get_word_pos()
    }

    /// Jumps to an arbitrary counter in O(1).
    pub fn seek(&mut self, counter: u128) {
        self.rng.set_word_pos(counter);
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }
}

impl RngCore for RandomStream {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// Per-particle stream: particle `index` of a run seeded with `master_seed`.
pub fn derive_stream(master_seed: u64, index: u64) -> RandomStream {
    RandomStream::new(master_seed, index, 0)
}

/// Samples the invariant collision measure restricted to cell 0: the
/// returned state sits on the disk copy whose boundary point has `x` in `[0, 1)`.
pub fn sample_mu0_cell0(stream: &mut RandomStream, tube: &Tube) -> BoundaryState {
    let cum = tube.cumulative_perimeter();
    let total = *cum.last().expect("nonempty configuration");
    let u = stream.uniform() * total;
    let disk_id = cum.iter().position(|&c| u < c).unwrap_or(cum.len() - 1);
    let disk = &tube.disks()[disk_id];
    let theta = 2.0 * PI * stream.uniform();
    let phi = (2.0 * stream.uniform() - 1.0).asin();
    let x = disk.center.x + disk.radius * theta.cos();
    BoundaryState { disk_id, cell: -(x.floor() as i64), r: theta * disk.radius, phi, time: 0.0 }
}

/// Entry through the absorbing plane `x = wall_x`: position uniform on the
/// free part of the plane, direction cos-distributed about the inward normal.
pub fn sample_wall_inflow(stream: &mut RandomStream, tube: &Tube, side: WallSide, wall_x: f64) -> FlightState {
    let y = loop {
        let y = stream.uniform();
        if tube.is_free(Vec2::new(wall_x, y)) {
            break y;
        }
    };
    let s = 2.0 * stream.uniform() - 1.0;
    let c = (1.0 - s * s).sqrt();
    let vx = match side {
        WallSide::Left => c,
        WallSide::Right => -c,
    };
    FlightState::new(Vec2::new(wall_x, y), Vec2::new(vx, s))
}

/// Uniform position in the free part of cell `cell`, uniform direction.
pub fn sample_lebesgue_in_cell(stream: &mut RandomStream, tube: &Tube, cell: i64) -> FlightState {
    let p = loop {
        let p = Vec2::new(cell as f64 + stream.uniform(), stream.uniform());
        if tube.is_free(p) {
            break p;
        }
    };
    FlightState::new(p, Vec2::from_angle(2.0 * PI * stream.uniform()))
}

/// Sorted arrival times of a rate-`rate` Poisson process on `[-window, 0]`.
pub fn poisson_arrivals(stream: &mut RandomStream, rate: f64, window: f64) -> Result<Vec<f64>> {
    let n = poisson_count(stream, rate * window)?;
    if !(window > 0.0) {
        return Err(Error::InvalidParameter(format!("window {window} must be > 0")));
    }
    let mut times: Vec<f64> = (0..n).map(|_| -window * stream.uniform()).collect();
    times.sort_by(f64::total_cmp);
    Ok(times)
}

/// Poisson-distributed count with the given mean (> 0).
pub fn poisson_count(stream: &mut RandomStream, mean: f64) -> Result<u64> {
    if !(mean > 0.0) || !mean.is_finite() {
        return Err(Error::InvalidParameter(format!("Poisson mean {mean} must be positive and finite")));
    }
    let d = Poisson::new(mean).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(d.sample(stream) as u64)
}

/// One row of a tabulated injection law: a boundary state in cell 0 and its weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InjectionRow {
    pub disk_id: usize,
    pub r: f64,
    pub phi: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InjectionMeasure {
    /// Invariant collision measure on cell 0 (mirrored to the last cell for a right source).
    Mu0Cell0,
    /// Cos-law inflow through a wall.
    WallInflow { side: WallSide },
    /// Weighted table of boundary states in cell 0.
    Custom { table: Vec<InjectionRow> },
}

impl InjectionMeasure {
    pub fn parse(name: &str) -> Result<InjectionMeasure> {
        match name {
            "mu0" => Ok(InjectionMeasure::Mu0Cell0),
            "wall_left" => Ok(InjectionMeasure::WallInflow { side: WallSide::Left }),
            "wall_right" => Ok(InjectionMeasure::WallInflow { side: WallSide::Right }),
            other => Err(Error::Config(format!("unknown injection measure '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            InjectionMeasure::Mu0Cell0 => "mu0",
            InjectionMeasure::WallInflow { side: WallSide::Left } => "wall_left",
            InjectionMeasure::WallInflow { side: WallSide::Right } => "wall_right",
            InjectionMeasure::Custom { .. } => "custom",
        }
    }

    pub fn validate(&self, tube: &Tube) -> Result<()> {
        if let InjectionMeasure::Custom { table } = self {
            if table.is_empty() {
                return Err(Error::InvalidParameter("empty injection table".into()));
            }
            for row in table {
                let ok = row.disk_id < tube.disks().len()
                    && row.weight >= 0.0
                    && row.phi.abs() <= PI / 2.0
                    && row.r.is_finite();
                if !ok {
                    return Err(Error::InvalidParameter(format!("bad injection row {row:?}")));
                }
            }
            if table.iter().map(|r| r.weight).sum::<f64>() <= 0.0 {
                return Err(Error::InvalidParameter("injection weights sum to zero".into()));
            }
        }
        Ok(())
    }

    /// Samples an initial flight state for a source at `side` of a tube whose
    /// right end (if any) is at `x = length`.
    pub fn sample(&self, stream: &mut RandomStream, tube: &Tube, side: WallSide, length: f64) -> FlightState {
        let mirror = |b: BoundaryState| match side {
            WallSide::Left => b,
            WallSide::Right => BoundaryState { cell: b.cell + length as i64 - 1, ..b },
        };
        match self {
            InjectionMeasure::Mu0Cell0 => mirror(sample_mu0_cell0(stream, tube)).to_flight(tube),
            InjectionMeasure::WallInflow { side: wall } => {
                let x = match wall {
                    WallSide::Left => 0.0,
                    WallSide::Right => length,
                };
                sample_wall_inflow(stream, tube, *wall, x)
            }
            InjectionMeasure::Custom { table } => {
                let total: f64 = table.iter().map(|r| r.weight).sum();
                let mut u = stream.uniform() * total;
                let row = table
                    .iter()
                    .find(|r| {
                        u -= r.weight;
                        u < 0.0
                    })
                    .unwrap_or(table.last().expect("validated nonempty"));
                let disk = &tube.disks()[row.disk_id];
                let x = disk.center.x + disk.radius * (row.r / disk.radius).cos();
                let b = BoundaryState { disk_id: row.disk_id, cell: -(x.floor() as i64), r: row.r, phi: row.phi, time: 0.0 };
                mirror(b).to_flight(tube)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{TubeConfig, TubeKind};

    fn tube() -> Tube {
        let cfg = TubeConfig::new(TubeConfig::default_disks(), TubeKind::BiInfinite);
        Tube::uncertified(&cfg, 50.0).unwrap()
    }

    #[test]
    fn same_seed_and_index_repeat() {
        let mut a = derive_stream(7, 3);
        let mut b = derive_stream(7, 3);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn seek_addresses_any_counter() {
        let mut a = derive_stream(1, 2);
        for _ in 0..1000 {
            a.next_u32();
        }
        let expected = a.next_u32();
        let mut b = RandomStream::new(1, 2, 1000);
        assert_eq!(b.next_u32(), expected);
        let mut far = RandomStream::new(1, 2, 1_000_000_000);
        assert_eq!(far.counter(), 1_000_000_000);
        far.next_u64();
    }

    #[test]
    fn mu0_states_lie_in_cell_zero() {
        let t = tube();
        let mut s = derive_stream(11, 0);
        for _ in 0..10_000 {
            let b = sample_mu0_cell0(&mut s, &t);
            let fs = b.to_flight(&t);
            assert!((0.0..1.0).contains(&fs.position.x), "{:?}", fs.position);
            assert!(b.phi.abs() <= PI / 2.0);
            assert!(fs.velocity.dot(b.normal(&t)) >= 0.0);
        }
    }

    #[test]
    fn wall_inflow_enters_the_tube() {
        let t = tube();
        let mut s = derive_stream(5, 0);
        for _ in 0..10_000 {
            let f = sample_wall_inflow(&mut s, &t, WallSide::Left, 0.0);
            assert!(f.velocity.x > 0.0);
            assert!(t.is_free(f.position));
            let g = sample_wall_inflow(&mut s, &t, WallSide::Right, 20.0);
            assert!(g.velocity.x < 0.0 && g.position.x == 20.0);
        }
    }

    #[test]
    fn poisson_rejects_zero_rate() {
        let mut s = derive_stream(0, 0);
        assert!(poisson_arrivals(&mut s, 0.0, 10.0).is_err());
        assert!(poisson_arrivals(&mut s, 1.0, 0.0).is_err());
    }

    #[test]
    fn poisson_arrivals_are_sorted_in_window() {
        let mut s = derive_stream(9, 9);
        let times = poisson_arrivals(&mut s, 1.0, 1e4).unwrap();
        assert!((times.len() as f64 - 1e4).abs() < 400.0);
        assert!(times.windows(2).all(|w| w[0] <= w[1]));
        assert!(times.iter().all(|&t| (-1e4..=0.0).contains(&t)));
    }

    #[test]
    fn right_source_mirrors_to_last_cell() {
        let t = tube();
        let mut s = derive_stream(3, 1);
        for _ in 0..1000 {
            let f = InjectionMeasure::Mu0Cell0.sample(&mut s, &t, WallSide::Right, 20.0);
            assert!((19.0..20.0).contains(&f.position.x));
        }
    }

    #[test]
    fn injection_names_round_trip() {
        for name in ["mu0", "wall_left", "wall_right"] {
            assert_eq!(InjectionMeasure::parse(name).unwrap().name(), name);
        }
        assert!(InjectionMeasure::parse("nope").is_err());
    }
}
