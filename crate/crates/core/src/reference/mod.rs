//! Analytic limit laws, each evaluated with a reported truncation bound.

mod constants;
mod diffusion;
mod gaussian;
mod heat;
mod meander;
pub mod quad;

use serde::{Deserialize, Serialize};

pub use constants::{derive_constants, ConstantSet};
pub use diffusion::{boundary_layer, killed_bm_density, profile_integral, profile_limit};
pub use gaussian::{gaussian_density, gaussian_density2, normal_cdf, normal_sf};
pub use heat::{heat_solution, CrankNicolson, HeatReference, DEFAULT_MODES};
pub use meander::{meander_chop_identity, MeanderLaw};

/// A truncated series value with a bound on the dropped tail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub value: f64,
    pub tail_bound: f64,
    /// Truncation index actually used.
    pub terms: u32,
}

pub fn meander_cdf(law: &MeanderLaw, x: f64, y: f64) -> crate::Result<Series> {
    law.cdf(x, y)
}

pub fn meander_density(law: &MeanderLaw, x: f64, y: f64) -> crate::Result<Series> {
    law.density(x, y)
}

#[doc(hidden)]
pub fn profile_integral_closed(k: &ConstantSet, x: f64, delta: f64) -> f64 {
    diffusion::profile_integral_closed(k, x, delta)
}
