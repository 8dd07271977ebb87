//! Adaptive inexact stochastic SQP for equality-constrained stochastic
//! optimization.
//!
//! The crate is split along the lines of the algorithm:
//!
//! - [`problems`]: smooth equality-constrained problems with exact derivatives,
//!   the Gaussian derivative-noise model and a small built-in catalog.
//! - [`kkt`]: Hessian averaging, reduced-Hessian regularization and KKT assembly.
//! - [`sketch`]: sketch-and-project (randomized Kaczmarz and friends) Newton solves.
//! - [`stepsize`]: the `beta_t <= alpha_t <= beta_t + chi_t` stepsize envelope.
//! - [`solver`]: the iteration loop, merit diagnostics and a deterministic
//!   SQP reference solver.
//! - [`inference`]: online covariance estimation, confidence intervals and
//!   normality diagnostics.
//! - [`harness`]: experiment configuration and the commands behind the CLI.

// `!(x > 0.0)` also rejects NaN, which is the point.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod harness;
pub mod inference;
pub mod kkt;
pub mod linalg;
pub mod problems;
pub mod rng;
pub mod sketch;
pub mod solver;
pub mod stepsize;

pub use error::{Error, Result};
pub use harness::{CommandOutput, ExperimentConfig};
pub use inference::{ConfidenceQuery, CovarianceAccumulator, NormalityReport};
pub use kkt::{HessianAverager, KktSystem};
pub use problems::{KnownSolution, NoiseModel, ProblemSpec, SmoothProblem};
pub use rng::RunStreams;
pub use sketch::{SketchDistribution, SketchKind, SolveReport};
pub use solver::{MeritParams, RunConfig, RunOutcome, RunState, TraceRow};
pub use stepsize::{Envelope, Schedule, StepPolicy};

/// Dense column vector used throughout the crate.
pub type Vector = nalgebra::DVector<f64>;
/// Dense matrix used throughout the crate.
pub type Matrix = nalgebra::DMatrix<f64>;
