//! Multi-coordinate trajectory learning from demonstration.
//!
//! Demonstrations are encoded simultaneously in Cartesian, tangent, and
//! Laplacian coordinates by three independent Gaussian mixtures.
//! Reproductions minimize a blended inverse-variance-weighted quadratic
//! cost subject to hard equality constraints (initial, target, via
//! points), and the per-coordinate weighting is learned from the
//! demonstrations themselves by a simplex search over preferential
//! weights.
//!
//! Typical flow: [`trajectory::load_demonstrations`] ->
//! [`trajectory::DemonstrationSet::dtw_align`] ->
//! [`multicoord::MultiCoordModel::train`] -> [`balance::balance`] ->
//! [`reproduce::Reproducer::solve`] -> [`metrics::report`].
//!
//! See the `examples/` directory for one runnable example per
//! capability; the `mccb` binary wraps the same flow for batch use.

pub mod balance;
mod banded;
pub mod cli;
pub mod diffops;
pub mod error;
pub mod gmm;
pub mod metrics;
pub mod multicoord;
pub mod reproduce;
pub mod trajectory;

pub use error::{Error, Result};
pub use multicoord::{Coordinate, MultiCoordModel};
pub use reproduce::{ConstraintSet, Reproducer, Reproduction, WeightTriple};
pub use trajectory::{DemoFormat, DemonstrationSet, Trajectory};
