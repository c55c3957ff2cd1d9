//! Exact laws, forward simulators and scaling-limit processes for the
//! classical Pólya urn and its q-deformation.
//!
//! The crate is organised bottom-up:
//!
//! * [`qcalc`]: q-numbers, q-factorials, q-binomials and q-Pochhammer products.
//! * [`dist`]: closed-form probability mass functions for draw counts,
//!   transition laws and the limit laws they converge to.
//! * [`urn`]: forward simulation of two- and many-colour (q-)Pólya urns.
//! * [`limitproc`]: pure-birth and Poisson samplers, deterministic limits and
//!   the fluctuation SDEs with their closed-form Itô solutions.
//! * [`stats`]: distances, goodness-of-fit statistics and the convergence
//!   experiment runner used by `urnlimits verify`.

pub mod dist;
pub mod error;
pub mod limitproc;
pub mod qcalc;
pub mod quad;
pub mod rng;
pub mod stats;
pub mod urn;

pub use dist::{IncrementLaw, LimitRegime, NegBinomial, Pmf, Poisson, UrnLawParams};
pub use error::{Error, Result};
pub use qcalc::QParam;
pub use urn::{Count, Path, UrnConfig, UrnState};
