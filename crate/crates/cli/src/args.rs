use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "lorentz-tube", version, about = "Lorentz tube simulator with absorbing walls and particle sources")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Options shared by every subcommand. Only `seed` and `particles` enter the
/// parameter hash; the rest never change results.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML configuration; the built-in default geometry when absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub particles: Option<u64>,
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Write a checkpoint every N particles (rounded up to whole chunks).
    #[arg(long)]
    pub checkpoint_every: Option<u64>,
    /// Continue from a checkpoint file.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Stop after N particles, leaving a checkpoint (for interruption tests).
    #[arg(long, hide = true)]
    pub stop_after: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the geometry and the finite-horizon condition.
    Validate(ValidateArgs),
    /// Diffusion constant, mean free path and joint covariance.
    Transport(TransportArgs),
    /// Survival probability in a semi-infinite tube.
    Survival(SurvivalArgs),
    /// Scaled endpoints and maxima of surviving particles.
    Meander(MeanderArgs),
    /// Stationary density profile from Poisson sources.
    Profile(ProfileArgs),
    /// Relaxation of an initial profile in a finite tube.
    Heat(HeatArgs),
    /// Visits to cell L before absorption.
    Localtime(LocalTimeArgs),
    /// Local-limit counting checks.
    Llt(LltArgs),
    /// Evaluate a reference law.
    Reference(ReferenceArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct ValidateArgs {
    #[command(flatten)]
    #[serde(skip)]
    pub common: Common,
}

#[derive(Debug, Args, Serialize)]
pub struct TransportArgs {
    #[command(flatten)]
    #[serde(skip)]
    pub common: Common,
    /// Collisions per particle.
    #[arg(long, default_value_t = 4000)]
    pub steps: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct SurvivalArgs {
    #[command(flatten)]
    #[serde(skip)]
    pub common: Common,
    #[arg(long, default_value = "mu0")]
    pub injection: String,
    /// Observation times; a log grid from 10 to the cap when absent.
    #[arg(long, value_delimiter = ',')]
    pub times: Vec<f64>,
    #[arg(long, default_value_t = 1e4)]
    pub t_cap: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct MeanderArgs {
    #[command(flatten)]
    #[serde(skip)]
    pub common: Common,
    #[arg(long, default_value = "mu0")]
    pub injection: String,
    #[arg(long, default_value_t = 1e4)]
    pub time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileMode {
    Semi,
    Finite,
}

#[derive(Debug, Args, Serialize)]
pub struct ProfileArgs {
    #[command(flatten)]
    #[serde(skip)]
    pub common: Common,
    #[arg(long, value_enum, default_value = "semi")]
    pub mode: ProfileMode,
    #[arg(long, default_value = "mu0")]
    pub injection: String,
    #[arg(long, default_value_t = 1.0)]
    pub rate: f64,
    /// Tube length (finite) or number of profile cells (semi).
    #[arg(long = "L", default_value_t = 20)]
    pub length: u32,
    /// Defaults to 100·L².
    #[arg(long)]
    pub t_cap: Option<f64>,
    /// Add a right source of the same rate (finite mode).
    #[arg(long)]
    pub both_ends: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialProfile {
    /// `f ≡ f0`.
    Flat,
    /// Linear from `f0` to `f1`.
    Linear,
    /// Linear plus `amplitude·sin(πx)`.
    Sine,
}

#[derive(Debug, Args, Serialize)]
pub struct HeatArgs {
    #[command(flatten)]
    #[serde(skip)]
    pub common: Common,
    #[arg(long = "L", default_value_t = 30)]
    pub length: u32,
    #[arg(long, value_enum, default_value = "sine")]
    pub profile: InitialProfile,
    #[arg(long, default_value_t = 2.0)]
    pub f0: f64,
    #[arg(long, default_value_t = 1.0)]
    pub f1: f64,
    #[arg(long, default_value_t = 2.0)]
    pub amplitude: f64,
    /// Boundary density per unit source rate; source rates are `f_i / C`.
    #[arg(long, default_value_t = 8.0)]
    pub boundary_constant: f64,
    #[arg(long, default_value_t = 1e3)]
    pub scale: f64,
    #[arg(long, default_value = "mu0")]
    pub injection: String,
    /// Observation times in units of L².
    #[arg(long, value_delimiter = ',', default_value = "0.05,0.1,0.3")]
    pub times: Vec<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct LocalTimeArgs {
    #[command(flatten)]
    #[serde(skip)]
    pub common: Common,
    #[arg(long = "L", default_value_t = 15)]
    pub length: u32,
    #[arg(long, default_value_t = 2_000_000)]
    pub max_collisions: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LltMode {
    Continuous,
    Meander,
    Heat,
    Joint,
}

#[derive(Debug, Args, Serialize)]
pub struct LltArgs {
    #[command(flatten)]
    #[serde(skip)]
    pub common: Common,
    #[arg(long, value_enum)]
    pub mode: LltMode,
    /// Time T (continuous, meander) or t in units of L² (heat).
    #[arg(long)]
    pub time: Option<f64>,
    /// Collision count (joint).
    #[arg(long, default_value_t = 10_000)]
    pub n: u64,
    #[arg(long, default_value_t = 0.0)]
    pub x: f64,
    #[arg(long, default_value_t = 0.0)]
    pub y: f64,
    /// Window half-width in cells.
    #[arg(long, default_value_t = 0)]
    pub cells: u32,
    /// Window half-width in time slots (joint).
    #[arg(long, default_value_t = 0)]
    pub slots: u32,
    /// Slot width (joint); the mean free path when absent.
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub sigma_hat: Option<f64>,
    #[arg(long = "L", default_value_t = 20)]
    pub length: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Law {
    Gaussian,
    MeanderCdf,
    MeanderDensity,
    Killed,
    ProfileLimit,
    ProfileIntegral,
    BoundaryLayer,
    Constants,
}

#[derive(Debug, Args, Serialize)]
pub struct ReferenceArgs {
    #[command(flatten)]
    #[serde(skip)]
    pub common: Common,
    #[arg(long, value_enum)]
    pub law: Law,
    #[arg(long, default_value_t = 0.5)]
    pub x: f64,
    #[arg(long, default_value_t = 1.0)]
    pub y: f64,
    #[arg(long, default_value_t = 0.1)]
    pub t: f64,
    /// Scale `ρ` or `σ̂` of the law.
    #[arg(long, default_value_t = 1.0)]
    pub rho: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub delta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub f0: f64,
    #[arg(long, default_value_t = 1.0)]
    pub c_bar: f64,
    #[arg(long, default_value_t = 1.0)]
    pub kappa_bar: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
}
