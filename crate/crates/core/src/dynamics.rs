//! Billiard flow and billiard map on the tube.
//!
//! Collisions are found exactly: the ray is walked through the unit squares
//! it crosses and tested against the disk images overlapping each square,
//! stopping as soon as the best hit lies inside the square being visited.

use std::f64::consts::PI;
use std::io::{self, Write};
use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{lift_disk, Tube, Walls};
use crate::vec2::Vec2;

/// Smallest accepted collision time; prevents re-detecting the current collision.
pub const EPS_ROOT: f64 = 1e-12;
/// Normalized-discriminant threshold below which a hit is flagged as grazing.
pub const EPS_DISC: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlightState {
    pub position: Vec2,
    pub velocity: Vec2,
    pub time: f64,
}

impl FlightState {
    pub fn new(position: Vec2, velocity: Vec2) -> Self {
        FlightState { position, velocity, time: 0.0 }
    }

    pub fn cell(&self) -> i64 {
        self.position.x.floor() as i64
    }
}

/// Post-collision state in boundary coordinates.
///
/// `r` is arc length along the disk measured counterclockwise from the
/// rightmost point; `phi` is the angle from the outward normal to the
/// outgoing velocity, positive towards the counterclockwise tangent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryState {
    pub disk_id: usize,
    pub cell: i64,
    pub r: f64,
    pub phi: f64,
    pub time: f64,
}

impl BoundaryState {
    pub fn normal(&self, tube: &Tube) -> Vec2 {
        let radius = tube.disks()[self.disk_id].radius;
        Vec2::from_angle(self.r / radius)
    }

    pub fn position(&self, tube: &Tube) -> Vec2 {
        let disk = lift_disk(&tube.disks()[self.disk_id], self.cell);
        let p = disk.center + disk.radius * self.normal(tube);
        Vec2::new(p.x, p.y.rem_euclid(1.0))
    }

    pub fn velocity(&self, tube: &Tube) -> Vec2 {
        let n = self.normal(tube);
        let (s, c) = self.phi.sin_cos();
        c * n + s * n.perp()
    }

    pub fn to_flight(&self, tube: &Tube) -> FlightState {
        FlightState { position: self.position(tube), velocity: self.velocity(tube), time: self.time }
    }

    /// Boundary coordinates of the outgoing state at a collision.
    pub fn from_collision(ev: &CollisionEvent, outgoing: Vec2, radius: f64, time: f64) -> BoundaryState {
        let theta = ev.normal.angle().rem_euclid(2.0 * PI);
        let phi = outgoing.dot(ev.normal.perp()).atan2(outgoing.dot(ev.normal));
        BoundaryState { disk_id: ev.disk_id, cell: ev.cell, r: theta * radius, phi, time }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollisionEvent {
    pub flight_length: f64,
    pub hit_point: Vec2,
    /// Outward unit normal of the disk at the hit point.
    pub normal: Vec2,
    pub disk_id: usize,
    pub cell: i64,
    pub grazing: bool,
}

/// Earliest positive-time intersection of the ray with any disk image.
pub fn next_collision(state: &FlightState, tube: &Tube) -> Result<CollisionEvent> {
    let p = state.position;
    let v = state.velocity;
    let mut ix = p.x.floor();
    let mut iy = p.y.floor();

    let (step_x, mut t_max_x, t_delta_x) = axis_setup(p.x, ix, v.x);
    let (step_y, mut t_max_y, t_delta_y) = axis_setup(p.y, iy, v.y);

    let mut best_t = f64::INFINITY;
    let mut best: Option<(usize, f64, f64, bool)> = None;
    loop {
        let origin = Vec2::new(p.x - ix, p.y - iy);
        for (k, img) in tube.square.iter().enumerate() {
            let d = origin - img.center;
            let b = d.dot(v);
            if b >= 0.0 {
                continue;
            }
            let cc = d.norm_sq() - img.radius_sq;
            let disc = b * b - cc;
            if disc < 0.0 {
                continue;
            }
            // Smaller root of t^2 + 2bt + cc in cancellation-free form.
            let t = cc / (-b + disc.sqrt());
            if t > EPS_ROOT && t < best_t {
                best_t = t;
                best = Some((k, ix, iy, disc < EPS_DISC * img.radius_sq));
            }
        }
        let t_exit = t_max_x.min(t_max_y);
        if best_t <= t_exit {
            break;
        }
        if t_exit > tube.search_limit() {
            return Err(Error::NoCollisionWithinHorizon { x: p.x, y: p.y });
        }
        if t_max_x < t_max_y {
            ix += step_x;
            t_max_x += t_delta_x;
        } else {
            iy += step_y;
            t_max_y += t_delta_y;
        }
    }
    let (k, sx, sy, grazing) = best.expect("loop exits with a hit");
    let img = &tube.square[k];
    let center = Vec2::new(sx + img.center.x, sy + img.center.y);
    let raw = p + best_t * v;
    let normal = (raw - center).normalized();
    let hit = center + img.radius * normal;
    Ok(CollisionEvent {
        flight_length: best_t,
        hit_point: hit,
        normal,
        disk_id: img.disk as usize,
        cell: sx as i64 + img.cell_offset as i64,
        grazing,
    })
}

#[inline]
fn axis_setup(pos: f64, cell: f64, vel: f64) -> (f64, f64, f64) {
    if vel > 0.0 {
        (1.0, (cell + 1.0 - pos) / vel, 1.0 / vel)
    } else if vel < 0.0 {
        (-1.0, (cell - pos) / vel, -1.0 / vel)
    } else {
        (0.0, f64::INFINITY, f64::INFINITY)
    }
}

/// Specular reflection of an incoming velocity about the unit normal `n`.
pub fn reflect(v: Vec2, n: Vec2) -> Result<Vec2> {
    let vn = v.dot(n);
    if vn >= 0.0 {
        return Err(Error::NotIncoming(vn));
    }
    Ok(reflect_unchecked(v, n))
}

#[inline]
pub(crate) fn reflect_unchecked(v: Vec2, n: Vec2) -> Vec2 {
    v - (2.0 * v.dot(n)) * n
}

/// Horizontal displacement and length of one free flight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapIncrement {
    pub dx: f64,
    pub flight: f64,
}

/// One iterate of the billiard map.
pub fn step_map(b: &BoundaryState, tube: &Tube) -> Result<(BoundaryState, MapIncrement)> {
    let fs = b.to_flight(tube);
    let ev = next_collision(&fs, tube)?;
    let out = reflect_unchecked(fs.velocity, ev.normal);
    let radius = tube.disks()[ev.disk_id].radius;
    let next = BoundaryState::from_collision(&ev, out, radius, b.time + ev.flight_length);
    Ok((next, MapIncrement { dx: ev.hit_point.x - fs.position.x, flight: ev.flight_length }))
}

/// Time reversal on the collision space: `(r, phi) -> (r, -phi)`.
pub fn time_reverse(b: &BoundaryState) -> BoundaryState {
    BoundaryState { phi: -b.phi, ..*b }
}

/// Running sums `X_k` (horizontal displacement) and `F_k` (elapsed flight time).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ObservableStream {
    pub k: u64,
    pub x: f64,
    pub f: f64,
    pub cell: i64,
}

impl ObservableStream {
    pub fn push(&mut self, inc: MapIncrement, cell: i64) {
        self.k += 1;
        self.x += inc.dx;
        self.f += inc.flight;
        self.cell = cell;
    }
}

/// Callbacks invoked while a particle is advanced.
pub trait FlightObserver {
    /// A straight piece of trajectory of duration `dt` starting at `start`.
    #[inline]
    fn segment(&mut self, _start: Vec2, _velocity: Vec2, _t0: f64, _dt: f64) {}

    /// A collision at time `time`; returning `Break` stops the particle
    /// right after the reflection.
    #[inline]
    fn collision(&mut self, _ev: &CollisionEvent, _time: f64) -> ControlFlow<()> {
        ControlFlow::Continue(())
    }
}

impl FlightObserver for () {}

impl<A: FlightObserver, B: FlightObserver> FlightObserver for (A, B) {
    #[inline]
    fn segment(&mut self, start: Vec2, velocity: Vec2, t0: f64, dt: f64) {
        self.0.segment(start, velocity, t0, dt);
        self.1.segment(start, velocity, t0, dt);
    }

    #[inline]
    fn collision(&mut self, ev: &CollisionEvent, time: f64) -> ControlFlow<()> {
        let a = self.0.collision(ev, time);
        let b = self.1.collision(ev, time);
        if a.is_break() || b.is_break() {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WallSide {
    Left,
    Right,
}

/// Why [`Particle::advance`] returned.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Stop {
    /// Reached the requested time.
    Time,
    /// Reached the requested number of collisions.
    Collisions,
    /// Crossed an absorbing plane mid-flight.
    Absorbed { side: WallSide, time: f64 },
    /// The observer asked to stop.
    Observer,
}

/// A particle being advanced by the flow. Caches the pending collision so
/// that stopping mid-flight does not cost a second search.
#[derive(Debug, Clone)]
pub struct Particle {
    pub state: FlightState,
    pub collisions: u64,
    pub grazing: u64,
    pending: Option<CollisionEvent>,
}

impl Particle {
    pub fn new(state: FlightState) -> Self {
        Particle { state, collisions: 0, grazing: 0, pending: None }
    }

    /// Advances until time `t_end`, `max_collisions` total collisions, a wall
    /// crossing, or an observer stop, whichever comes first.
    pub fn advance<O: FlightObserver>(
        &mut self,
        tube: &Tube,
        walls: Walls,
        t_end: f64,
        max_collisions: u64,
        obs: &mut O,
    ) -> Result<Stop> {
        loop {
            if self.collisions >= max_collisions {
                return Ok(Stop::Collisions);
            }
            let remaining = t_end - self.state.time;
            if remaining <= 0.0 {
                return Ok(Stop::Time);
            }
            let p = self.state.position;
            let v = self.state.velocity;
            let ev = match self.pending.take() {
                Some(ev) => ev,
                None => match next_collision(&self.state, tube) {
                    Ok(ev) => ev,
                    // An open line can still end on a wall.
                    Err(e) => {
                        let reach = remaining.min(tube.search_limit());
                        let Some((side, tw)) = wall_crossing(p.x, v.x, reach, walls) else {
                            return Err(e);
                        };
                        obs.segment(p, v, self.state.time, tw);
                        self.state.position = wrap_y(p + tw * v);
                        self.state.time += tw;
                        return Ok(Stop::Absorbed { side, time: self.state.time });
                    }
                },
            };
            let seg = ev.flight_length.min(remaining);

            if let Some((side, tw)) = wall_crossing(p.x, v.x, seg, walls) {
                obs.segment(p, v, self.state.time, tw);
                self.state.position = wrap_y(p + tw * v);
                self.state.time += tw;
                return Ok(Stop::Absorbed { side, time: self.state.time });
            }

            obs.segment(p, v, self.state.time, seg);
            if ev.flight_length <= remaining {
                self.state.time += ev.flight_length;
                self.state.position = wrap_y(ev.hit_point);
                // Renormalized so that round-off in the normal does not accumulate in the speed.
                self.state.velocity = reflect_unchecked(v, ev.normal).normalized();
                self.collisions += 1;
                if ev.grazing {
                    self.grazing += 1;
                }
                if obs.collision(&ev, self.state.time).is_break() {
                    return Ok(Stop::Observer);
                }
            } else {
                self.state.position = wrap_y(p + seg * v);
                self.state.time = t_end;
                self.pending = Some(CollisionEvent { flight_length: ev.flight_length - seg, ..ev });
                return Ok(Stop::Time);
            }
        }
    }
}

#[inline]
fn wrap_y(p: Vec2) -> Vec2 {
    if (0.0..1.0).contains(&p.y) {
        p
    } else {
        Vec2::new(p.x, p.y.rem_euclid(1.0))
    }
}

#[inline]
fn wall_crossing(x0: f64, vx: f64, seg: f64, walls: Walls) -> Option<(WallSide, f64)> {
    if vx < 0.0 {
        if let Some(xl) = walls.left {
            if x0 + seg * vx <= xl {
                return Some((WallSide::Left, ((xl - x0) / vx).max(0.0)));
            }
        }
    } else if vx > 0.0 {
        if let Some(xr) = walls.right {
            if x0 + seg * vx >= xr {
                return Some((WallSide::Right, ((xr - x0) / vx).max(0.0)));
            }
        }
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellCrossing {
    pub time: f64,
    pub from: i64,
    pub to: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FlowOutcome {
    Running(FlightState),
    Absorbed { side: WallSide, at: f64, time: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowResult {
    pub outcome: FlowOutcome,
    pub crossings: Vec<CellCrossing>,
    pub collisions: u64,
}

/// Records every crossing of an integer vertical line.
#[derive(Debug, Default)]
pub struct CrossingLog {
    pub crossings: Vec<CellCrossing>,
}

impl FlightObserver for CrossingLog {
    fn segment(&mut self, start: Vec2, v: Vec2, t0: f64, dt: f64) {
        let c0 = start.x.floor() as i64;
        let c1 = (start.x + dt * v.x).floor() as i64;
        if c1 > c0 {
            for m in (c0 + 1)..=c1 {
                let t = t0 + (m as f64 - start.x) / v.x;
                self.crossings.push(CellCrossing { time: t, from: m - 1, to: m });
            }
        } else if c1 < c0 {
            for m in ((c1 + 1)..=c0).rev() {
                let t = t0 + (m as f64 - start.x) / v.x;
                self.crossings.push(CellCrossing { time: t, from: m, to: m - 1 });
            }
        }
    }
}

/// Advances the flow by `duration` or until an absorbing plane is crossed.
pub fn flow(state: &FlightState, duration: f64, tube: &Tube, walls: Walls) -> Result<FlowResult> {
    if !(duration >= 0.0) {
        return Err(Error::InvalidParameter(format!("duration {duration} must be >= 0")));
    }
    let mut particle = Particle::new(*state);
    let mut log = CrossingLog::default();
    let stop = particle.advance(tube, walls, state.time + duration, u64::MAX, &mut log)?;
    let outcome = match stop {
        Stop::Absorbed { side, time } => FlowOutcome::Absorbed { side, at: particle.state.position.x, time },
        _ => FlowOutcome::Running(particle.state),
    };
    Ok(FlowResult { outcome, crossings: log.crossings, collisions: particle.collisions })
}

/// Writes `n` collisions of the trajectory as CSV, one row per collision
/// with the outgoing velocity.
pub fn write_trajectory_csv<W: Write>(out: &mut W, initial: &FlightState, tube: &Tube, n: u64) -> Result<()> {
    let io_err = |e: io::Error| Error::Config(e.to_string());
    writeln!(out, "k,t,x,y,vx,vy,disk_id,cell,flight_length,grazing").map_err(io_err)?;
    let mut s = *initial;
    for k in 1..=n {
        let ev = next_collision(&s, tube)?;
        s.time += ev.flight_length;
        s.position = wrap_y(ev.hit_point);
        s.velocity = reflect_unchecked(s.velocity, ev.normal).normalized();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            k,
            s.time,
            s.position.x,
            s.position.y,
            s.velocity.x,
            s.velocity.y,
            ev.disk_id,
            ev.cell,
            ev.flight_length,
            ev.grazing as u8
        )
        .map_err(io_err)?;
    }
    Ok(())
}
