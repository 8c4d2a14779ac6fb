//! Cluster geometry and phase-space partitions of unity for N-body scattering.
//!
//! This crate holds the pure, allocation-only part of the toolkit:
//!
//! * [`lattice`]: cluster decompositions of `{1..N}`, their refinement order
//!   and intercluster links.
//! * [`geometry`]: clustered Jacobi frames, reduced masses and the mass-weighted
//!   inner product in which frame changes are orthogonal.
//! * [`cutoffs`]: the smooth monotone cutoffs with exact plateaus.
//! * [`partition`]: admissible constants, the cone regions `T_b`, the functions
//!   `varphi_b`, `J_b` and a sampling verifier for the partition of unity.
//! * [`eikonal`]: the long-range phase for the two-cluster case, its glued form
//!   and the residual symbol.
//!
//! Everything here is `no_std` + `alloc`; grids, FFTs, IO and the CLI live in the
//! companion `scatgeo` crate.
#![no_std]
// `!(x > 0.0)` deliberately rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod cutoffs;
pub mod eikonal;
pub mod error;
pub mod geometry;
pub mod lattice;
pub mod partition;
pub mod quadrature;
pub mod sampling;

pub use error::{Error, Result};
pub use geometry::{ClusterNorms, Configuration, JacobiFrame, MassSpec};
pub use lattice::{ClusterDecomposition, InterclusterLink, PairIndex};
pub use partition::PartitionConstants;
