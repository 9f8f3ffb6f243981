//! Subspace approximation with outliers.
//!
//! Given `n` points in `R^d`, a target dimension `k`, an exponent `p >= 1` and an
//! outlier fraction `alpha`, the goal is a `k`-dimensional linear subspace that
//! minimizes the sum of `p`-th powers of distances over its nearest
//! `floor((1 - alpha) n)` points. The solver grows a small index subset (a weak
//! coreset) by adaptive residual sampling; its span contains a near-optimal
//! `k`-subspace whenever the optimal inliers carry at least a `delta` fraction of
//! the optimal subspace's total error.
//!
//! Module map:
//!
//! * [`geometry`]: orthonormal bases, residuals, top-k subspaces, angles.
//! * [`sampling`]: seeded weighted sampling and adaptive residual rounds.
//! * [`solver`]: trimmed costs, the line and general solvers, extraction,
//!   planted-truth diagnostics.
//! * [`mestimators`]: Huber / Tukey / p-th power losses and the residual
//!   sampling variant.
//! * [`affine`]: affine subspaces via sample-mean partition enumeration.
//! * [`oracle`]: brute-force and branch-and-bound exact optima at small scale.
//! * [`datagen`]: planted instances.
//! * [`cli`]: the `osa` command-line harness.

pub mod affine;
pub mod cli;
pub mod datagen;
mod error;
pub mod geometry;
pub mod mestimators;
pub mod oracle;
pub mod sampling;
pub mod solver;

pub use error::{Error, Result};
pub use geometry::{Basis, PointSet};
pub use sampling::{SampleTrace, Seed, WeightVector};
pub use solver::{SolveReport, SolverConfig};
