//! Wave maps into the unit sphere on the square `(-1/2, 1/2)^2`.
//!
//! The crate provides the angular-momentum midpoint scheme on a
//! finite-difference grid, time reconstructions of the discrete solution, a
//! fully computable a posteriori bound on the temporal error, and a
//! time-step controller driven by that bound.

// `!(x > 0.0)` style checks are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adapt;
pub mod error;
pub mod estimator;
pub mod grid;
pub mod harness;
pub mod io;
pub mod reconstruct;
pub mod scheme;

pub use adapt::{AdaptiveController, Decision, Strategy};
pub use error::{Error, Result};
pub use grid::{Grid2D, MomentumField, ScalarField, SphereField, Vec3, VecField};
pub use harness::{run, RunConfig, Trajectory};
pub use scheme::{SolverConfig, StepRecord};
