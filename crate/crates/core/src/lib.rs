//! Derivative-free nonlinear least squares.
//!
//! The solver minimizes `f(x) = ½‖F(x)‖²` without derivatives. Every outer
//! iteration first searches a low-dimensional manifold through the current
//! point (a random affine subspace or a variable-node linear spline), falls
//! back to a random-direction line search when that fails to give enough
//! decrease, and finally tries a sequential-secant extrapolation built from
//! the recent displacement/residual-difference pairs.
//!
//! The [`sven`] module provides a one-dimensional Saint-Venant channel
//! simulator and turns synthetic observations of it into a Manning
//! coefficient estimation problem.

// Negated float comparisons are used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![cfg_attr(test, allow(clippy::type_complexity))]

pub mod config;
pub mod error;
pub mod experiment;
pub mod framework;
pub mod problem;
pub mod reduction;
pub mod rng;
pub mod secant;
pub mod subsolver;
pub mod sven;

pub use config::{ReductionKind, SolveResult, SolverConfig, StepKind, Termination, TraceEntry};
pub use error::{Error, Result};
pub use framework::solve;
pub use problem::{eta, half_sum_squares, Residual, ResidualProblem};
pub use rng::{Purpose, RngStreams};
pub use subsolver::{Bounds, InnerReport, NelderMead, Subsolver};
