//! Shapley value estimation via constrained weighted least squares.
//!
//! Cooperative-game values are characterized as the solution of a weighted
//! least squares problem over coalitions, with weights given by a kernel
//! that forces the regression coefficients to the exact values. This crate
//! implements that characterization end to end:
//!
//! - [`games`]: the coalition/game abstractions, synthetic test games, and
//!   tabular-model explanation games (local attribution, global importance,
//!   sensitivity) with marginal-distribution feature removal.
//! - [`kernel`]: the kernel-induced subset distribution, its sampler, and
//!   the closed-form second-moment matrix.
//! - [`solver`]: the constrained solve shared by all estimators and the
//!   projection matrix used for covariance propagation.
//! - [`estimators`]: the four sampling estimators (sampled-moments and
//!   exact-moment, deterministic and stochastic), with paired sampling,
//!   streaming accumulation, convergence detection, and forecasting.
//! - [`diagnostics`]: brute-force oracles, bias/variance decomposition, the
//!   pairing cross-covariance matrix, and trace-ratio studies.
//!
//! Estimator runs are deterministic: the same configuration and seed give a
//! bit-identical [`Estimate`](estimators::Estimate).

pub mod diagnostics;
pub mod error;
pub mod estimators;
pub mod games;
pub mod kernel;
pub mod solver;

pub use error::{Error, Result};
pub use estimators::{Estimate, EstimatorConfig, Variant};
pub use games::{Coalition, Game, StochasticGame};
