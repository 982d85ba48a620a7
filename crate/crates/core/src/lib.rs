//! Finite-horizon periodic Lorentz tube: exact billiard dynamics with
//! absorbing walls and particle sources, ensemble experiments, and the
//! analytic limit laws they are compared against.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod config;
pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod measures;
pub mod reference;
pub mod stats;
pub mod vec2;

pub use dynamics::{BoundaryState, CollisionEvent, FlightState, WallSide};
pub use config::SimConfig;
pub use error::{Error, Result};
pub use geometry::{ScattererDisk, Tube, TubeConfig, TubeKind};
pub use measures::{derive_stream, InjectionMeasure, RandomStream};
pub use vec2::Vec2;
