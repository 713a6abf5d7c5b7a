//! Finite-dimensional linear-quadratic optimal control with long horizons:
//! stationary optimality systems, Riccati equations, two independent
//! finite-horizon solvers and the diagnostics that quantify how close optimal
//! trajectories stay to the optimal steady state.

// `!(x > 0.0)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod csv;
pub mod error;
pub mod linalg;
pub mod lq;
pub mod operators;
pub mod riccati;
pub mod scenarios;
pub mod stationary;
pub mod turnpike;
pub mod verify;

pub use error::{Error, Result};
pub use lq::{LqProblem, Method, SolverChoice, Trajectory};
pub use operators::{HypothesisReport, LtiSystem};
pub use riccati::{AreSolution, DreSolution};
pub use scenarios::{ExperimentConfig, Scenario};
pub use stationary::StationaryTriple;
pub use turnpike::TurnpikeReport;
