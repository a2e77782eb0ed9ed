//! Simulation of quantum Brownian motion with first-order memory corrections
//! to the Caldeira–Leggett master equation.
//!
//! The reduced density matrix `ρ(ξ, η)` is evolved on a uniform grid in
//! dimensionless units (lengths in thermal wavelengths, times in `1/γ`),
//! decoherence is measured with the masked l1-norm of coherence, and the
//! resulting curves are fitted with `A/(A + t^α) · exp(−B t^β)`.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coherence;
pub mod constants;
pub mod error;
pub mod evolve;
pub mod fitting;
pub mod grid;
pub mod kernels;
pub mod liouvillian;
pub mod params;
pub mod quad;
pub mod scenario;
pub mod snapshot;
pub mod stencil;

pub use coherence::{CoherenceSeries, MaskMode, MaskSpec};
pub use error::{Error, Result};
pub use fitting::{Classification, FitParams, FitResult};
pub use evolve::{BoundaryAction, RunConfig, RunRecord, Termination};
pub use grid::{DensityField, Diagnostics, Grid2D, C64};
pub use liouvillian::{Term, TermSet};
pub use params::{DimensionlessParams, PhysicalParams};
