//! Limit objects: pure-birth and Poisson processes, deterministic limits and
//! linear fluctuation SDEs.

mod birth;
mod det;
mod sde;

pub use birth::{
    birth_sample_events, birth_sample_grid, poisson_sample, BirthFamily, BirthRateSpec, GridPath, TimeGrid,
};
pub use det::{multicolor_det_limit, polya_det_limit, qpolya_det_limit, DetRegime};
pub use sde::{
    brownian_increments, coarsen, euler_maruyama, euler_maruyama_sampled, linear_sde_moments, linear_sde_solution,
    polya_fluct_solution, qpolya_fluct_solution, FnCoefficients, LinearCoefficients, PolyaFluct, QPolyaFluct,
    SdeFamily, SdeSpec,
};
