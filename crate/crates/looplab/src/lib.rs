//! Exact finite checks for loop models on rhombic tilings.
//!
//! This crate enumerates loop-model configurations on small rhombic domains,
//! evaluates a complex lattice observable along the boundary, and verifies
//! numerically exact statements about it: the vanishing of discrete contour
//! sums, the inversion relation, the Yang-Baxter equations for both the dense
//! and the dilute model, and invariance of boundary data under star-triangle
//! recombination of the underlying tiling.
//!
//! Modules build on one another in this order:
//!
//! - [`combinatorics`]: chord diagrams, non-crossing matchings, gluing.
//! - [`weights`]: model parameters, rhombus weights, residual functions.
//! - [`highprec`]: 256-bit reference implementations of the residuals.
//! - [`geometry`]: rhombi, tilings, boundary data, star-triangle moves.
//! - [`enumeration`]: plaquette states, path tracing, configuration sums.
//! - [`observable`]: the boundary observable and its closed-form checks.
//! - [`zinvariance`]: partition sums by connectivity and move invariance.
//! - [`appendix`]: the linear-algebra reduction of the dilute hexagon system.
//! - [`report`]: residual reports with stable serialization.
//! - [`cli`]: the command-line front end.

pub mod appendix;
pub mod cli;
pub mod combinatorics;
pub mod enumeration;
pub mod error;
pub mod geometry;
pub mod highprec;
pub mod observable;
pub mod report;
pub mod weights;
pub mod zinvariance;

pub use error::{Error, Result};
