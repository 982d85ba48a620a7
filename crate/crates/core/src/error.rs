use thiserror::Error;

use crate::geometry::Direction;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("configuration has no scatterers")]
    EmptyConfiguration,
    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),
    #[error("open corridor found in direction ({}, {})", .0.p, .0.q)]
    CorridorFound(Direction),
    #[error("no collision within the free-flight horizon from ({x:.6}, {y:.6})")]
    NoCollisionWithinHorizon { x: f64, y: f64 },
    #[error("velocity is not incoming: <v,n> = {0:e}")]
    NotIncoming(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("insufficient samples: {got} (need at least {need})")]
    InsufficientSamples { got: u64, need: u64 },
    #[error("too few survivors: {got} (need at least {need})")]
    TooFewSurvivors { got: u64, need: u64 },
    #[error("insufficient hits in target window: {got} (need at least {need})")]
    InsufficientHits { got: u64, need: u64 },
    #[error("domain error: {0}")]
    DomainError(String),
    #[error("matrix is not positive definite")]
    NonPositiveDefinite,
    #[error("non-positive input: {0}")]
    NonPositiveInput(&'static str),
    #[error("quadrature failed to converge: {0}")]
    QuadratureFailure(String),
    #[error("too few samples for the test: {got} (need at least {need})")]
    TooFewSamples { got: usize, need: usize },
    #[error("degenerate design: all abscissae are equal")]
    DegenerateDesign,
    #[error("non-positive probability at row {0}")]
    NonPositiveProbability(usize),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("configuration error: {0}")]
    Config(String),
}
