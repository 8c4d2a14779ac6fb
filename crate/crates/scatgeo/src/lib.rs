//! Few-body scattering experiments on periodic grids.
//!
//! Builds on [`scatgeo_core`] with split-step dynamics, dense pair
//! eigensolves, finite-time channel diagnostics, the long-range modifier and
//! a reproducible command-line harness.

// `!(x > 0.0)` deliberately rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod eigen;
pub mod error;
pub mod grid;
pub mod hamiltonian;
pub mod harness;
pub mod model;
pub mod modifier;
pub mod snapshot;

pub use error::{Error, ErrorClass, Result};
pub use grid::{GridSpec, GridState};
pub use hamiltonian::{Hamiltonian, PotentialPart};
pub use model::{ModelSpec, PairPotential, PotentialKind};
pub use scatgeo_core as core;
