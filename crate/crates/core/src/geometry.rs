//! Scatterer configuration of the periodic tube.
//!
//! The tube is the strip `R x S^1` (the vertical coordinate has period one)
//! with a finite set of disks placed in the unit cell `[0,1) x [0,1)` and
//! repeated under all integer horizontal translations. Cell `m` is the strip
//! `[m, m+1) x S^1`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::dynamics::{self, FlightState};
use crate::error::{Error, Result};
use crate::measures;
use crate::vec2::Vec2;

pub const DEFAULT_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScattererDisk {
    #[serde(with = "point_as_array")]
    pub center: Vec2,
    pub radius: f64,
}

impl ScattererDisk {
    pub fn new(x: f64, y: f64, radius: f64) -> Self {
        ScattererDisk { center: Vec2::new(x, y), radius }
    }

    pub fn perimeter(&self) -> f64 {
        2.0 * PI * self.radius
    }
}

/// A disk image positioned in tube coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlacedDisk {
    pub center: Vec2,
    pub radius: f64,
}

/// Translates a unit-cell disk into cell `cell`.
pub fn lift_disk(disk: &ScattererDisk, cell: i64) -> PlacedDisk {
    PlacedDisk { center: Vec2::new(disk.center.x + cell as f64, disk.center.y), radius: disk.radius }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TubeKind {
    /// Cells `0, 1, 2, ...`, absorbing wall at `x = 0`.
    SemiInfinite,
    /// Cells `0..length`, absorbing walls at `x = 0` and `x = length`.
    Finite { length: u32 },
    /// No walls.
    BiInfinite,
}

/// Free-flight bounds attached to a configuration once the horizon check passes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaBounds {
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TubeConfig {
    pub disks: Vec<ScattererDisk>,
    pub kind: TubeKind,
    pub margin: f64,
    /// Filled in by [`certify`]; `None` for an unchecked configuration.
    pub kappa: Option<KappaBounds>,
}

impl TubeConfig {
    pub fn new(disks: Vec<ScattererDisk>, kind: TubeKind) -> Self {
        TubeConfig { disks, kind, margin: DEFAULT_MARGIN, kappa: None }
    }

    /// Disks (0.5, 0.5) r = 0.45 and (0, 0) r = 0.2.
    ///
    /// The big disk blocks every rational direction except the axes and the
    /// two diagonals; the small one closes the axial corridors left open by
    /// the big disk. Usable only after [`certify`] succeeds.
    pub fn default_disks() -> Vec<ScattererDisk> {
        vec![ScattererDisk::new(0.5, 0.5, 0.45), ScattererDisk::new(0.0, 0.0, 0.2)]
    }

    pub fn with_kind(&self, kind: TubeKind) -> Self {
        TubeConfig { kind, ..self.clone() }
    }

    pub fn total_perimeter(&self) -> f64 {
        self.disks.iter().map(ScattererDisk::perimeter).sum()
    }

    /// Area of the unit cell not covered by scatterers.
    pub fn free_area(&self) -> f64 {
        1.0 - self.disks.iter().map(|d| PI * d.radius * d.radius).sum::<f64>()
    }

    /// Mean free path of the invariant collision measure, `pi |Q| / |dQ|`.
    pub fn mean_free_path(&self) -> f64 {
        PI * self.free_area() / self.total_perimeter()
    }

    /// Smallest boundary-to-boundary distance between two distinct disk images.
    pub fn min_image_gap(&self) -> f64 {
        let mut gap = f64::INFINITY;
        for_each_image_pair(&self.disks, |_, _, dist, rsum| gap = gap.min(dist - rsum));
        gap
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub radii_positive: bool,
    pub centers_in_cell: bool,
    pub disjoint: bool,
    pub margin_respected: bool,
    pub min_gap: f64,
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.radii_positive && self.centers_in_cell && self.disjoint && self.margin_respected
    }
}

fn for_each_image_pair(disks: &[ScattererDisk], mut f: impl FnMut(usize, usize, f64, f64)) {
    for i in 0..disks.len() {
        for j in i..disks.len() {
            // Centers lie in the unit cell, so the nearest image of j relative
            // to i is among the offsets -1..=1 in each coordinate.
            for a in -1i32..=1 {
                for b in -1i32..=1 {
                    if i == j && a == 0 && b == 0 {
                        continue;
                    }
                    let d = disks[j].center + Vec2::new(a as f64, b as f64) - disks[i].center;
                    f(i, j, d.norm(), disks[i].radius + disks[j].radius);
                }
            }
        }
    }
}

/// Checks positivity, placement and pairwise disjointness over all periodic images.
pub fn validate_configuration(config: &TubeConfig) -> Result<ValidationReport> {
    if config.disks.is_empty() {
        return Err(Error::EmptyConfiguration);
    }
    let mut violations = Vec::new();
    let mut radii_positive = true;
    let mut centers_in_cell = true;
    for (i, d) in config.disks.iter().enumerate() {
        if !(d.radius > 0.0 && d.radius.is_finite()) {
            radii_positive = false;
            violations.push(format!("disk {i}: radius {} is not positive", d.radius));
        }
        let c = d.center;
        if !(0.0..1.0).contains(&c.x) || !(0.0..1.0).contains(&c.y) {
            centers_in_cell = false;
            violations.push(format!("disk {i}: center ({}, {}) outside [0,1)^2", c.x, c.y));
        }
    }
    if let TubeKind::Finite { length } = config.kind {
        if length < 2 {
            violations.push(format!("finite tube length {length} < 2"));
            centers_in_cell = false;
        }
    }
    let mut disjoint = true;
    let mut margin_respected = true;
    let mut min_gap = f64::INFINITY;
    for_each_image_pair(&config.disks, |i, j, dist, rsum| {
        min_gap = min_gap.min(dist - rsum);
        if dist < rsum {
            if disjoint {
                violations.push(format!("disks {i} and {j} overlap: distance {dist:.6} < {rsum:.6}"));
            }
            disjoint = false;
        } else if dist < rsum + config.margin && margin_respected {
            violations.push(format!("disks {i} and {j} closer than margin: gap {:.3e}", dist - rsum));
        }
        if dist < rsum + config.margin {
            margin_respected = false;
        }
    });
    Ok(ValidationReport { radii_positive, centers_in_cell, disjoint, margin_respected, min_gap, violations })
}

/// A primitive lattice direction `(p, q)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Direction {
    pub p: i64,
    pub q: i64,
}

impl Direction {
    pub fn new(p: i64, q: i64) -> Self {
        Direction { p, q }
    }

    pub fn unit(&self) -> Vec2 {
        Vec2::new(self.p as f64, self.q as f64).normalized()
    }
}

/// Widest band of parallel lines in direction `(p, q)` that misses every disk
/// image, measured perpendicular to the lines. Zero when the direction is blocked.
pub fn corridor_width(disks: &[ScattererDisk], dir: Direction) -> f64 {
    let (p, q) = (dir.p as f64, dir.q as f64);
    let len = (p * p + q * q).sqrt();
    // Projections of Z^2 onto the unit normal form the lattice spacing * Z.
    let spacing = 1.0 / len;
    let normal = Vec2::new(-q, p) * spacing;
    let mut intervals: Vec<(f64, f64)> = Vec::with_capacity(2 * disks.len());
    for d in disks {
        if 2.0 * d.radius >= spacing {
            return 0.0;
        }
        let c = normal.dot(d.center).rem_euclid(spacing);
        intervals.push((c - d.radius, c + d.radius));
    }
    // Sweep two periods so that intervals wrapping past `spacing` are seen
    // from both sides; gaps starting in the first period are all counted.
    let n = intervals.len();
    for i in 0..n {
        let (lo, hi) = intervals[i];
        intervals.push((lo + spacing, hi + spacing));
    }
    intervals.sort_by(|a, b| a.0.total_cmp(&b.0));
    let start = intervals[0].0;
    let mut reach = intervals[0].1;
    let mut widest: f64 = 0.0;
    for &(lo, hi) in &intervals[1..] {
        if reach >= start + spacing {
            break;
        }
        widest = widest.max(lo - reach);
        reach = reach.max(hi);
    }
    widest.max(0.0)
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

/// Primitive directions with `|p|, |q| <= max_denominator`, one per line
/// orientation, in order of increasing `max(|p|, |q|)`.
pub fn rational_directions(max_denominator: i64) -> Vec<Direction> {
    let mut dirs = Vec::new();
    for d in 1..=max_denominator.max(1) {
        for p in (0..=d).rev() {
            for q in [-d, d].into_iter().chain(-(d - 1)..=(d - 1)) {
                if p.abs().max(q.abs()) != d || gcd(p, q) != 1 {
                    continue;
                }
                if p == 0 && q != 1 {
                    continue;
                }
                let dir = Direction::new(p, q);
                if !dirs.contains(&dir) {
                    dirs.push(dir);
                }
            }
        }
    }
    // Put the axes and diagonals first, in the conventional order.
    let lead = [Direction::new(1, 0), Direction::new(0, 1), Direction::new(1, 1), Direction::new(1, -1)];
    let mut ordered: Vec<Direction> = lead.iter().copied().filter(|d| dirs.contains(d)).collect();
    ordered.extend(dirs.into_iter().filter(|d| !lead.contains(d)));
    ordered
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HorizonSettings {
    pub max_denominator: u32,
    pub mc_trajectories: u64,
    pub mc_steps: u64,
}

impl Default for HorizonSettings {
    fn default() -> Self {
        HorizonSettings { max_denominator: 8, mc_trajectories: 10_000, mc_steps: 1_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonReport {
    pub empirical_kappa_max: f64,
    pub empirical_kappa_min: f64,
    pub corridor_found: bool,
    pub worst_direction: Option<Direction>,
    pub worst_corridor_width: f64,
    pub samples: u64,
}

impl HorizonReport {
    pub fn require_finite(&self) -> Result<()> {
        match (self.corridor_found, self.worst_direction) {
            (true, Some(d)) => Err(Error::CorridorFound(d)),
            (true, None) => Err(Error::CorridorFound(Direction::new(0, 0))),
            _ => Ok(()),
        }
    }
}

/// Scans rational directions for open corridors, then samples free flights
/// along random orbits of the periodic dynamics.
pub fn check_finite_horizon(config: &TubeConfig, settings: &HorizonSettings, seed: u64) -> Result<HorizonReport> {
    let report = validate_configuration(config)?;
    if !report.passed() {
        return Err(Error::InvalidConfiguration(report.violations.join("; ")));
    }
    let mut worst: Option<(Direction, f64)> = None;
    for dir in rational_directions(settings.max_denominator as i64) {
        let w = corridor_width(&config.disks, dir);
        if w > 0.0 && worst.is_none_or(|(_, best)| w > best) {
            worst = Some((dir, w));
        }
    }
    if let Some((dir, width)) = worst {
        return Ok(HorizonReport {
            empirical_kappa_max: f64::INFINITY,
            empirical_kappa_min: config.min_image_gap().max(0.0),
            corridor_found: true,
            worst_direction: Some(dir),
            worst_corridor_width: width,
            samples: 0,
        });
    }

    // Any corridor missed by the scan has a large denominator and forces
    // long flights, which the sampled maximum exposes.
    let search_limit = 1.0e3;
    let tube = Tube::uncertified(&config.with_kind(TubeKind::BiInfinite), search_limit)?;
    let mut kmax: f64 = 0.0;
    let mut kmin = f64::INFINITY;
    let mut samples = 0u64;
    for traj in 0..settings.mc_trajectories {
        let mut stream = measures::derive_stream(seed, traj);
        let mut b = measures::sample_mu0_cell0(&mut stream, &tube);
        for _ in 0..settings.mc_steps {
            let (next, inc) = dynamics::step_map(&b, &tube)?;
            kmax = kmax.max(inc.flight);
            kmin = kmin.min(inc.flight);
            samples += 1;
            b = next;
        }
    }
    Ok(HorizonReport {
        empirical_kappa_max: kmax,
        empirical_kappa_min: kmin,
        corridor_found: false,
        worst_direction: None,
        worst_corridor_width: 0.0,
        samples,
    })
}

/// Attaches free-flight bounds to a configuration that passed the horizon check.
///
/// The lower bound is the smallest gap between disk images. The upper bound
/// doubles the sampled maximum: it only limits the collision search, so it is
/// kept loose.
pub fn certify(config: &TubeConfig, report: &HorizonReport) -> Result<TubeConfig> {
    report.require_finite()?;
    let min = config.min_image_gap();
    let max = 2.0 * report.empirical_kappa_max.max(min);
    Ok(TubeConfig { kappa: Some(KappaBounds { min, max }), ..config.clone() })
}

/// Validates, scans and certifies in one call.
pub fn certified(config: &TubeConfig, settings: &HorizonSettings, seed: u64) -> Result<(TubeConfig, HorizonReport)> {
    let report = check_finite_horizon(config, settings, seed)?;
    let cfg = certify(config, &report)?;
    Ok((cfg, report))
}

/// One disk image overlapping the unit square, relative to the square's corner.
#[derive(Debug, Clone, Copy)]
pub(crate) struct SquareImage {
    pub disk: u32,
    /// Horizontal offset of the image's cell relative to the square.
    pub cell_offset: i32,
    pub center: Vec2,
    pub radius: f64,
    pub radius_sq: f64,
}

/// Absorbing planes `x = left` and `x = right`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Walls {
    pub left: Option<f64>,
    pub right: Option<f64>,
}

impl Walls {
    pub const NONE: Walls = Walls { left: None, right: None };

    pub fn for_kind(kind: TubeKind) -> Walls {
        match kind {
            TubeKind::SemiInfinite => Walls { left: Some(0.0), right: None },
            TubeKind::Finite { length } => Walls { left: Some(0.0), right: Some(length as f64) },
            TubeKind::BiInfinite => Walls::NONE,
        }
    }
}

/// Immutable, validated geometry with the lookup tables used by the
/// collision search. Cheap to share between threads.
#[derive(Debug, Clone)]
pub struct Tube {
    config: TubeConfig,
    pub(crate) square: Vec<SquareImage>,
    search_limit: f64,
    walls: Walls,
    cumulative_perimeter: Vec<f64>,
}

impl Tube {
    /// Builds the tube from a certified configuration.
    pub fn new(config: &TubeConfig) -> Result<Tube> {
        let bounds = config
            .kappa
            .ok_or_else(|| Error::InvalidConfiguration("finite horizon has not been certified".into()))?;
        Tube::build(config, bounds.max + 1.0)
    }

    /// Builds the tube without horizon bounds; the collision search gives up
    /// after `search_limit` units of flight.
    pub fn uncertified(config: &TubeConfig, search_limit: f64) -> Result<Tube> {
        Tube::build(config, search_limit)
    }

    fn build(config: &TubeConfig, search_limit: f64) -> Result<Tube> {
        let report = validate_configuration(config)?;
        if !report.passed() {
            return Err(Error::InvalidConfiguration(report.violations.join("; ")));
        }
        let mut square = Vec::new();
        for (id, d) in config.disks.iter().enumerate() {
            for a in -1i32..=1 {
                for b in -1i32..=1 {
                    let c = d.center + Vec2::new(a as f64, b as f64);
                    let overlaps = c.x + d.radius > 0.0
                        && c.x - d.radius < 1.0
                        && c.y + d.radius > 0.0
                        && c.y - d.radius < 1.0;
                    if overlaps {
                        square.push(SquareImage {
                            disk: id as u32,
                            cell_offset: a,
                            center: c,
                            radius: d.radius,
                            radius_sq: d.radius * d.radius,
                        });
                    }
                }
            }
        }
        let mut acc = 0.0;
        let cumulative_perimeter = config
            .disks
            .iter()
            .map(|d| {
                acc += d.perimeter();
                acc
            })
            .collect();
        Ok(Tube {
            config: config.clone(),
            square,
            search_limit,
            walls: Walls::for_kind(config.kind),
            cumulative_perimeter,
        })
    }

    pub fn config(&self) -> &TubeConfig {
        &self.config
    }

    pub fn disks(&self) -> &[ScattererDisk] {
        &self.config.disks
    }

    pub fn walls(&self) -> Walls {
        self.walls
    }

    pub fn search_limit(&self) -> f64 {
        self.search_limit
    }

    pub(crate) fn cumulative_perimeter(&self) -> &[f64] {
        &self.cumulative_perimeter
    }

    /// Same scatterers, different tube kind.
    pub fn with_kind(&self, kind: TubeKind) -> Tube {
        Tube { config: self.config.with_kind(kind), walls: Walls::for_kind(kind), ..self.clone() }
    }

    /// Signed distance from `p` to the nearest disk image (negative inside).
    pub fn signed_distance(&self, p: Vec2) -> f64 {
        let base = Vec2::new(p.x.floor(), p.y.floor());
        let local = p - base;
        let mut best = f64::INFINITY;
        for img in &self.square {
            best = best.min((local - img.center).norm() - img.radius);
        }
        best
    }

    pub fn is_free(&self, p: Vec2) -> bool {
        self.signed_distance(p) > 0.0
    }

    /// Length of the part of the vertical line `x` lying outside all disks.
    pub fn free_wall_length(&self, x: f64) -> f64 {
        let mut covered: Vec<(f64, f64)> = Vec::new();
        let xf = x - x.floor();
        for img in &self.square {
            let dx = xf - img.center.x;
            if dx.abs() < img.radius {
                let h = (img.radius_sq - dx * dx).sqrt();
                covered.push((img.center.y - h, img.center.y + h));
            }
        }
        1.0 - union_length_on_circle(&mut covered)
    }
}

fn union_length_on_circle(intervals: &mut [(f64, f64)]) -> f64 {
    // Clip to [0,1): the square images already include the wrap-around copies.
    let mut clipped: Vec<(f64, f64)> =
        intervals.iter().map(|&(a, b)| (a.max(0.0), b.min(1.0))).filter(|(a, b)| b > a).collect();
    clipped.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut total = 0.0;
    let mut cur: Option<(f64, f64)> = None;
    for (a, b) in clipped {
        match cur {
            Some((ca, cb)) if a <= cb => cur = Some((ca, cb.max(b))),
            Some((ca, cb)) => {
                total += cb - ca;
                cur = Some((a, b));
            }
            None => cur = Some((a, b)),
        }
    }
    if let Some((ca, cb)) = cur {
        total += cb - ca;
    }
    total
}

/// True if the state is at least `-tol` away from every disk.
pub fn state_is_outside(tube: &Tube, s: &FlightState, tol: f64) -> bool {
    tube.signed_distance(s.position) >= -tol
}

mod point_as_array {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::vec2::Vec2;

    pub fn serialize<S: Serializer>(p: &Vec2, s: S) -> Result<S::Ok, S::Error> {
        [p.x, p.y].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec2, D::Error> {
        let [x, y] = <[f64; 2]>::deserialize(d)?;
        Ok(Vec2::new(x, y))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(disks: Vec<ScattererDisk>) -> TubeConfig {
        TubeConfig::new(disks, TubeKind::BiInfinite)
    }

    #[test]
    fn single_disk_passes_validation() {
        let r = validate_configuration(&cfg(vec![ScattererDisk::new(0.5, 0.5, 0.25)])).unwrap();
        assert!(r.passed(), "{:?}", r.violations);
    }

    #[test]
    fn default_pair_is_disjoint() {
        let r = validate_configuration(&cfg(TubeConfig::default_disks())).unwrap();
        assert!(r.passed());
        // Nearest images: distance sqrt(0.5) against radius sum 0.65.
        assert!((r.min_gap - (0.5f64.sqrt() - 0.65)).abs() < 1e-12);
    }

    #[test]
    fn overlapping_pair_fails() {
        let r = validate_configuration(&cfg(vec![ScattererDisk::new(0.5, 0.5, 0.4), ScattererDisk::new(0.0, 0.0, 0.4)]))
            .unwrap();
        assert!(!r.disjoint);
        assert!(!r.passed());
    }

    #[test]
    fn self_image_overlap_detected() {
        let r = validate_configuration(&cfg(vec![ScattererDisk::new(0.5, 0.5, 0.55)])).unwrap();
        assert!(!r.disjoint);
    }

    #[test]
    fn margin_violation_is_separate_from_overlap() {
        let mut c = cfg(vec![ScattererDisk::new(0.5, 0.5, 0.5 - 1e-8)]);
        c.margin = 1e-6;
        let r = validate_configuration(&c).unwrap();
        assert!(r.disjoint);
        assert!(!r.margin_respected);
    }

    #[test]
    fn empty_configuration_rejected() {
        assert_eq!(validate_configuration(&cfg(vec![])), Err(Error::EmptyConfiguration));
    }

    #[test]
    fn validation_does_not_mutate() {
        let c = cfg(TubeConfig::default_disks());
        let before = c.clone();
        let a = validate_configuration(&c).unwrap();
        let b = validate_configuration(&c).unwrap();
        assert_eq!(a, b);
        assert_eq!(c, before);
    }

    #[test]
    fn lift_translates_horizontally() {
        let d = ScattererDisk::new(0.5, 0.5, 0.45);
        assert_eq!(lift_disk(&d, 0).center, Vec2::new(0.5, 0.5));
        assert_eq!(lift_disk(&d, 3).center, Vec2::new(3.5, 0.5));
        let s = ScattererDisk::new(0.0, 0.0, 0.2);
        let placed = lift_disk(&s, -1);
        assert_eq!(placed.center, Vec2::new(-1.0, 0.0));
        assert_eq!(placed.radius, 0.2);
    }

    #[test]
    fn single_disk_has_horizontal_corridor() {
        let c = cfg(vec![ScattererDisk::new(0.5, 0.5, 0.25)]);
        let rep = check_finite_horizon(&c, &HorizonSettings { max_denominator: 4, ..Default::default() }, 1).unwrap();
        assert!(rep.corridor_found);
        assert_eq!(rep.worst_direction, Some(Direction::new(1, 0)));
        assert!((rep.worst_corridor_width - 0.5).abs() < 1e-12);
        assert!(matches!(rep.require_finite(), Err(Error::CorridorFound(d)) if d == Direction::new(1, 0)));
    }

    #[test]
    fn equal_disks_leave_diagonal_corridor() {
        let disks = vec![ScattererDisk::new(0.5, 0.5, 0.3), ScattererDisk::new(0.0, 0.0, 0.3)];
        // Both centers lie on x - y = 0 (mod 1); the line x - y = 0.5 is at
        // distance 0.5/sqrt(2) = 0.3536 > 0.3 from each.
        let w = corridor_width(&disks, Direction::new(1, 1));
        assert!((w - (0.5f64.sqrt() - 0.6)).abs() < 1e-12, "{w}");
        assert!(corridor_width(&disks, Direction::new(1, 0)) == 0.0);
        let rep = check_finite_horizon(&cfg(disks), &HorizonSettings { max_denominator: 2, ..Default::default() }, 1)
            .unwrap();
        assert!(rep.corridor_found);
    }

    #[test]
    fn corridor_scan_is_sign_symmetric() {
        let disks = vec![ScattererDisk::new(0.3, 0.7, 0.21), ScattererDisk::new(0.8, 0.1, 0.12)];
        for dir in rational_directions(6) {
            let w = corridor_width(&disks, dir);
            let w_neg = corridor_width(&disks, Direction::new(-dir.p, -dir.q));
            assert!((w - w_neg).abs() < 1e-12, "{dir:?} {w} {w_neg}");
        }
    }

    #[test]
    fn default_configuration_blocks_low_denominators() {
        for dir in rational_directions(8) {
            assert_eq!(corridor_width(&TubeConfig::default_disks(), dir), 0.0, "{dir:?}");
        }
    }

    #[test]
    fn rational_directions_are_primitive_and_unique() {
        let dirs = rational_directions(5);
        assert_eq!(dirs[0], Direction::new(1, 0));
        for (i, a) in dirs.iter().enumerate() {
            assert_eq!(gcd(a.p, a.q), 1);
            for b in &dirs[i + 1..] {
                assert!(!(a.p == -b.p && a.q == -b.q) && a != b);
            }
        }
        let mut brute = std::collections::HashSet::new();
        for p in -5i64..=5 {
            for q in -5i64..=5 {
                if gcd(p, q) == 1 {
                    let canon = if p > 0 || (p == 0 && q > 0) { (p, q) } else { (-p, -q) };
                    brute.insert(canon);
                }
            }
        }
        assert_eq!(dirs.len(), brute.len());
    }

    #[test]
    fn square_lists_include_wraparound_images() {
        let tube = Tube::uncertified(&cfg(TubeConfig::default_disks()), 10.0).unwrap();
        // Big disk once, small disk at all four corners.
        assert_eq!(tube.square.len(), 5);
        assert!(tube.signed_distance(Vec2::new(0.5, 0.5)) < 0.0);
        assert!(tube.signed_distance(Vec2::new(0.999, 0.999)) < 0.0);
        assert!(tube.is_free(Vec2::new(0.3, 0.03)));
    }

    #[test]
    fn free_wall_length_of_default_configuration() {
        let tube = Tube::uncertified(&cfg(TubeConfig::default_disks()), 10.0).unwrap();
        // At x = 0 only the small disk (and its vertical images) cuts the wall.
        assert!((tube.free_wall_length(0.0) - 0.6).abs() < 1e-12);
        assert!((tube.free_wall_length(7.0) - 0.6).abs() < 1e-12);
    }

    #[test]
    fn mean_free_path_of_default_configuration() {
        let c = cfg(TubeConfig::default_disks());
        let expected = PI * (1.0 - PI * 0.2425) / (2.0 * PI * 0.65);
        assert!((c.mean_free_path() - expected).abs() < 1e-15);
        assert!((c.mean_free_path() - 0.18324).abs() < 1e-4);
    }
}
