//! Primal-dual online mirror descent for online convex optimization under
//! stochastic inequality and equality constraints.
//!
//! The crate is organized bottom-up:
//!
//! - [`geometry`]: Bregman geometries, decision sets and proximal mirror steps.
//! - [`engine`]: the online solver (general geometry, and the simplex variant with
//!   probability mixing), dual multiplier dynamics and the parameter schedule.
//! - [`problems`]: problem model, samplers, the synthetic linear test bed and the
//!   data-center budget-pacing scenario with its reactive baseline.
//! - [`oracle`]: offline references (hindsight optimum, Lagrangian dual function,
//!   multiplier estimation, weak error-bound probing).
//! - [`telemetry`]: run records, regret / violation metrics, drift-plus-penalty
//!   audits and CSV/JSON export.
//! - [`cli`]: configuration, price traces, experiment and sweep drivers used by the
//!   `pdomd` binary.

// `!(x > 0.0)` is used on purpose: it rejects NaN along with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod engine;
mod error;
pub mod geometry;
pub mod linalg;
pub mod oracle;
pub mod problems;
pub mod telemetry;

pub use engine::{
    parameter_schedule, run, run_observed, run_policy, AlgorithmParams, DualState, ObservationBatch, Solver,
    StepOutcome, Variant,
};
pub use error::{Error, Result};
pub use geometry::{DecisionSet, Geometry};
pub use problems::{Problem, SlotDraw};
pub use telemetry::{MetricsSummary, RunRecord};
