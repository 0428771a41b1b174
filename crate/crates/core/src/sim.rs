//! Closed-loop simulation of plant, controller and update law.
//!
//! The integrated state is `(x, z)`. Tracking error and parameter error are
//! derived from it at every evaluation, never stored across RK4 stages.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::constraint::ConstraintSpec;
use crate::error::{Error, Result};
use crate::integrate::rk4_step;
use crate::laws::{
    cl_zdot, control, fe_satisfied, grad_zdot, ControllerConfig, HistoryStack, StackRecord,
    UpdateLawConfig,
};
use crate::metrics::lyapunov_value;
use crate::plant::{DesiredTrajectory, PlantConfig};

pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_HORIZON: f64 = 20.0;
pub const DEFAULT_OVERFLOW_GUARD: f64 = 1e9;
pub const DEFAULT_STACK_CADENCE: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LawKind {
    Gradient,
    ConcurrentLearning,
}

impl LawKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LawKind::Gradient => "gradient",
            LawKind::ConcurrentLearning => "concurrent_learning",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub dt: f64,
    pub horizon: f64,
    pub overflow_guard: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            dt: DEFAULT_DT,
            horizon: DEFAULT_HORIZON,
            overflow_guard: DEFAULT_OVERFLOW_GUARD,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StackSettings {
    pub capacity: usize,
    /// Solver steps between offers.
    pub cadence: usize,
    pub rel_improve_tol: f64,
}

/// Fully resolved, validated simulation inputs.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub plant: PlantConfig,
    pub trajectory: DesiredTrajectory,
    pub constraint: ConstraintSpec,
    pub controller: ControllerConfig,
    pub law: UpdateLawConfig,
    pub law_kind: LawKind,
    pub theta_hat0: DVector<f64>,
    pub solver: SolverSettings,
    pub stack: StackSettings,
    pub feas_tol: f64,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let n = self.plant.regressor.states();
        let p = self.plant.regressor.params();
        let bad = |msg: String| Err(Error::Validation(msg));
        if self.trajectory.states() != n
            || self.plant.x0.len() != n
            || self.controller.gains().len() != n
        {
            return bad(format!("state dimension mismatch: regressor has n = {n}"));
        }
        if self.constraint.params() != p
            || self.plant.theta_true.len() != p
            || self.theta_hat0.len() != p
        {
            return bad(format!(
                "parameter dimension mismatch: regressor has p = {p}"
            ));
        }
        let true_violation = self.constraint.violation(&self.plant.theta_true);
        if !(true_violation <= self.feas_tol) {
            return bad(format!(
                "theta_true violates the constraint by {true_violation:e}"
            ));
        }
        let est_violation = self.constraint.violation(&self.theta_hat0);
        if !(est_violation <= self.feas_tol) {
            return bad(format!(
                "theta_hat0 violates the constraint by {est_violation:e}"
            ));
        }
        self.law.validate()?;
        let SolverSettings {
            dt,
            horizon,
            overflow_guard,
        } = self.solver;
        if !(dt > 0.0) || !dt.is_finite() {
            return bad(format!("dt must be positive, got {dt}"));
        }
        if !(horizon > dt) || !horizon.is_finite() {
            return bad(format!("horizon {horizon} must exceed dt {dt}"));
        }
        if !(overflow_guard > 0.0) {
            return bad("overflow_guard must be positive".into());
        }
        if self.stack.capacity == 0 || self.stack.cadence == 0 {
            return bad("stack capacity and cadence must be positive".into());
        }
        if !(self.stack.rel_improve_tol >= 0.0) {
            return bad("rel_improve_tol must be >= 0".into());
        }
        if self
            .plant
            .x0
            .iter()
            .chain(self.theta_hat0.iter())
            .any(|v| !v.is_finite())
        {
            return bad("initial conditions must be finite".into());
        }
        Ok(())
    }

    /// Number of RK4 steps, `floor(T / dt)`.
    pub fn steps(&self) -> usize {
        // Nudge so that e.g. 20 / 1e-3 lands on 20000 instead of 19999.
        (self.solver.horizon / self.solver.dt * (1.0 + 1e-12)).floor() as usize
    }

    pub fn states(&self) -> usize {
        self.plant.regressor.states()
    }

    pub fn params(&self) -> usize {
        self.plant.regressor.params()
    }
}

/// Integrated state of the closed loop.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopState {
    pub t: f64,
    pub x: DVector<f64>,
    pub z: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateDerivative {
    pub x_dot: DVector<f64>,
    pub z_dot: DVector<f64>,
}

fn guard(values: impl IntoIterator<Item = f64>, limit: f64, t: f64) -> Result<()> {
    for v in values {
        if !v.is_finite() || v.abs() > limit {
            return Err(Error::Diverged {
                t,
                reason: format!("state entry {v:e} exceeds overflow guard {limit:e}"),
            });
        }
    }
    Ok(())
}

/// Closed-loop vector field. Passing a stack switches the update law to
/// concurrent learning; `None` gives the gradient law.
pub fn rhs(
    scenario: &Scenario,
    stack: Option<&HistoryStack>,
    state: &ClosedLoopState,
) -> Result<StateDerivative> {
    guard(
        state.x.iter().chain(state.z.iter()).copied(),
        scenario.solver.overflow_guard,
        state.t,
    )?;
    let theta_hat = scenario.constraint.lift(&state.z)?;
    let (xd, xd_dot) = scenario.trajectory.eval(state.t);
    let e = &state.x - xd;
    let y = scenario.plant.regressor.eval(&state.x)?;
    let u = control(&scenario.controller, &e, &xd_dot, &y, &theta_hat)?;
    let x_dot = &y * &scenario.plant.theta_true + u;
    let z_dot = match stack {
        Some(stack) => cl_zdot(
            &scenario.constraint,
            &scenario.law,
            &y,
            &e,
            stack,
            &theta_hat,
        )?,
        None => grad_zdot(&scenario.constraint, &scenario.law, &y, &e)?,
    };
    Ok(StateDerivative { x_dot, z_dot })
}

/// Point at which finite excitation was first met.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeLatch {
    pub step: usize,
    pub t: f64,
    pub sigma1: f64,
}

/// Per-step record of a run, stored column-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    pub n: usize,
    pub p: usize,
    pub dt: f64,
    pub law_kind: LawKind,
    pub gamma: f64,
    pub k_cl: f64,
    pub min_gain: f64,
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    pub xd: Vec<f64>,
    pub e: Vec<f64>,
    pub u: Vec<f64>,
    pub theta_hat: Vec<f64>,
    pub theta_tilde: Vec<f64>,
    pub violation: Vec<f64>,
    pub v: Vec<f64>,
    pub lambda_min: Vec<f64>,
    pub fe_flag: Vec<bool>,
    pub fe_latch: Option<FeLatch>,
    /// First step at which the stack held `capacity` records.
    pub stack_full_step: Option<usize>,
    /// Largest observed `‖ẋ̂ₖ − ẋₖ‖∞` over offered records.
    pub max_derivative_error: f64,
    pub stack_accepts: usize,
}

impl TrajectoryLog {
    fn with_capacity(scenario: &Scenario, records: usize) -> Self {
        let (n, p) = (scenario.states(), scenario.params());
        Self {
            n,
            p,
            dt: scenario.solver.dt,
            law_kind: scenario.law_kind,
            gamma: scenario.law.gamma,
            k_cl: scenario.law.k_cl,
            min_gain: scenario.controller.min_gain(),
            t: Vec::with_capacity(records),
            x: Vec::with_capacity(records * n),
            xd: Vec::with_capacity(records * n),
            e: Vec::with_capacity(records * n),
            u: Vec::with_capacity(records * n),
            theta_hat: Vec::with_capacity(records * p),
            theta_tilde: Vec::with_capacity(records * p),
            violation: Vec::with_capacity(records),
            v: Vec::with_capacity(records),
            lambda_min: Vec::with_capacity(records),
            fe_flag: Vec::with_capacity(records),
            fe_latch: None,
            stack_full_step: None,
            max_derivative_error: 0.0,
            stack_accepts: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn x(&self, i: usize) -> &[f64] {
        &self.x[i * self.n..(i + 1) * self.n]
    }

    pub fn xd(&self, i: usize) -> &[f64] {
        &self.xd[i * self.n..(i + 1) * self.n]
    }

    pub fn e(&self, i: usize) -> &[f64] {
        &self.e[i * self.n..(i + 1) * self.n]
    }

    pub fn u(&self, i: usize) -> &[f64] {
        &self.u[i * self.n..(i + 1) * self.n]
    }

    pub fn theta_hat(&self, i: usize) -> &[f64] {
        &self.theta_hat[i * self.p..(i + 1) * self.p]
    }

    pub fn theta_tilde(&self, i: usize) -> &[f64] {
        &self.theta_tilde[i * self.p..(i + 1) * self.p]
    }

    pub fn last(&self) -> usize {
        self.len() - 1
    }

    pub fn max_violation(&self) -> f64 {
        self.violation.iter().copied().fold(0.0, f64::max)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Euclidean norm of a logged slice.
pub fn slice_norm(v: &[f64]) -> f64 {
    norm(v)
}

struct Recorder<'a> {
    scenario: &'a Scenario,
    log: TrajectoryLog,
}

impl Recorder<'_> {
    fn push(&mut self, state: &ClosedLoopState, lambda_min: f64, fe: bool) -> Result<()> {
        let sc = self.scenario;
        let theta_hat = sc.constraint.lift(&state.z)?;
        let (xd, xd_dot) = sc.trajectory.eval(state.t);
        let e = &state.x - &xd;
        let y = sc.plant.regressor.eval(&state.x)?;
        let u = control(&sc.controller, &e, &xd_dot, &y, &theta_hat)?;
        let theta_tilde = &sc.plant.theta_true - &theta_hat;
        let log = &mut self.log;
        log.t.push(state.t);
        log.x.extend(state.x.iter());
        log.xd.extend(xd.iter());
        log.e.extend(e.iter());
        log.u.extend(u.iter());
        log.theta_hat.extend(theta_hat.iter());
        log.theta_tilde.extend(theta_tilde.iter());
        log.violation.push(sc.constraint.violation(&theta_hat));
        log.v.push(lyapunov_value(
            e.as_slice(),
            theta_tilde.as_slice(),
            sc.law.gamma,
        ));
        log.lambda_min.push(lambda_min);
        log.fe_flag.push(fe);
        Ok(())
    }
}

fn pack(x: &DVector<f64>, z: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(x.len() + z.len(), x.iter().chain(z.iter()).copied())
}

/// Builds the stack record for grid point `i` from logged data, using a
/// central difference over `x(i − 1)` and `x_next = x(i + 1)` for `ẋ̂`.
fn logged_record(
    scenario: &Scenario,
    log: &TrajectoryLog,
    i: usize,
    x_next: &DVector<f64>,
) -> Result<(StackRecord, f64)> {
    let dt = log.dt;
    let x = DVector::from_column_slice(log.x(i));
    let u = DVector::from_column_slice(log.u(i));
    let xdot_hat = (x_next - DVector::from_column_slice(log.x(i - 1))) / (2.0 * dt);
    let y = scenario.plant.regressor.eval(&x)?;
    let xdot_true = &y * &scenario.plant.theta_true + &u;
    let err = (&xdot_hat - xdot_true).amax();
    Ok((StackRecord { x, u, xdot_hat, y }, err))
}

/// Integrates a scenario with fixed-step RK4 and logs every step.
pub fn run(scenario: &Scenario) -> Result<TrajectoryLog> {
    scenario.validate()?;
    let steps = scenario.steps();
    let dt = scenario.solver.dt;
    let n = scenario.states();
    let z0 = scenario
        .constraint
        .retract(&scenario.theta_hat0, scenario.feas_tol)?;
    let mut state = ClosedLoopState {
        t: 0.0,
        x: scenario.plant.x0.clone(),
        z: z0,
    };
    let use_stack = scenario.law_kind == LawKind::ConcurrentLearning;
    let mut stack = HistoryStack::new(
        scenario.stack.capacity,
        scenario.params(),
        scenario.stack.rel_improve_tol,
    )?;
    let mut latched = false;

    let mut rec = Recorder {
        scenario,
        log: TrajectoryLog::with_capacity(scenario, steps + 1),
    };
    rec.push(&state, 0.0, false)?;

    for i in 0..steps {
        let t = i as f64 * dt;
        let active = (use_stack && latched).then_some(&stack);
        let packed = pack(&state.x, &state.z);
        let next = rk4_step(
            |tt, y| {
                let s = ClosedLoopState {
                    t: tt,
                    x: y.rows(0, n).into_owned(),
                    z: y.rows(n, y.len() - n).into_owned(),
                };
                let d = rhs(scenario, active, &s)?;
                Ok(pack(&d.x_dot, &d.z_dot))
            },
            t,
            &packed,
            dt,
        )?;
        let t_next = (i + 1) as f64 * dt;
        guard(next.iter().copied(), scenario.solver.overflow_guard, t_next)?;
        state = ClosedLoopState {
            t: t_next,
            x: next.rows(0, n).into_owned(),
            z: next.rows(n, next.len() - n).into_owned(),
        };

        // Offers use logged states only: grid point i needs x at i − 1 and i + 1.
        if use_stack && i >= 1 && i % scenario.stack.cadence == 0 {
            let (record, err) = logged_record(scenario, &rec.log, i, &state.x)?;
            rec.log.max_derivative_error = rec.log.max_derivative_error.max(err);
            if stack.offer(record)? {
                rec.log.stack_accepts += 1;
            }
            if rec.log.stack_full_step.is_none() && stack.is_full() {
                rec.log.stack_full_step = Some(i + 1);
            }
            if !latched {
                if let Some(sigma1) = fe_satisfied(&stack, &scenario.law) {
                    latched = true;
                    rec.log.fe_latch = Some(FeLatch {
                        step: i + 1,
                        t: t_next,
                        sigma1,
                    });
                }
            }
        }
        rec.push(
            &state,
            if use_stack { stack.lambda_min() } else { 0.0 },
            latched,
        )?;
    }
    Ok(rec.log)
}
