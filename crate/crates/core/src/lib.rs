//! Building blocks for learning forward and inverse operators of steady-state
//! linear poroelasticity on heterogeneous permeability fields.
//!
//! * [`fields`] generates log-permeability rasters (Gaussian, bimodal, Zinn & Harvey).
//! * [`fom`] is the full-order model: two-point flux Darcy flow followed by
//!   plane-strain bilinear elasticity with Biot pressure coupling.
//! * [`dataset`] turns snapshots into normalized, masked and noised training arrays
//!   and owns the on-disk dataset format.
//! * [`metrics`] implements the error, correlation, cost/accuracy and POD measures.

pub mod dataset;
pub mod error;
pub mod fields;
pub mod fom;
pub mod grid;
pub mod linsolve;
pub mod metrics;
pub mod rng;

pub use error::{Error, Result};
pub use grid::{GridSpec, ScalarField};
