//! Equality-constrained parameter update laws for adaptive trajectory tracking.
//!
//! The parameter estimate is written as `θ̂ = θ₀ + F z` with `F` an orthonormal
//! basis of `N(A)`, so the prior knowledge `A θ = d` holds for every estimate
//! the gradient or concurrent-learning law produces.
//!
//! Layout:
//! - [`constraint`]: constraint elimination (`θ₀`, `F`, lift/retract).
//! - [`plant`]: regressors, the benchmark plant and desired trajectory.
//! - [`laws`]: controller, gradient and concurrent-learning laws, history stack.
//! - [`sim`]: fixed-step RK4 closed loop and trajectory logs.
//! - [`metrics`]: Lyapunov checks, exponential envelope, full-dimension oracle.
//! - [`scenario`], [`report`], [`sweep`]: configuration files, output, batch runs.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod constraint;
pub mod error;
pub mod integrate;
pub mod laws;
pub mod metrics;
pub mod par;
pub mod plant;
pub mod report;
pub mod scenario;
pub mod sim;
pub mod sweep;

pub use constraint::{build_constraint, ConstraintSpec};
pub use error::{Error, Result};
pub use laws::{
    cl_zdot, control, fe_satisfied, grad_zdot, ControllerConfig, HistoryStack, StackRecord,
    UpdateLawConfig,
};
pub use metrics::{lyapunov_series, oracle_full_dimension, summary, LyapunovReport, RunSummary};
pub use par::Execution;
pub use plant::{
    benchmark_regressor, benchmark_trajectory, plant_rhs, DesiredTrajectory, PlantConfig, Regressor,
};
pub use scenario::{load_scenario, preset, ScenarioConfig};
pub use sim::{rhs, run, ClosedLoopState, LawKind, Scenario, TrajectoryLog};
