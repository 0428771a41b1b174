//! Lyapunov diagnostics, convergence envelopes and an independent
//! full-dimension integrator used to cross-check the reduced update laws.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::integrate::rk4_step;
use crate::laws::{control, fe_satisfied, HistoryStack, StackRecord};
use crate::par::{self, Execution};
use crate::sim::{run, slice_norm, LawKind, Scenario, TrajectoryLog};

/// Per-step slack for the non-increase check, relative to `1 + V`.
pub const V_SLACK: f64 = 1e-9;
/// Multiplicative slack on the exponential envelope.
pub const ENVELOPE_SLACK: f64 = 1e-6;

/// `V = ½ eᵀe + (1/2γ) θ̃ᵀθ̃`.
///
/// With `γ = 0` the estimate is frozen, `θ̃` is constant and only the
/// tracking part is kept.
pub fn lyapunov_value(e: &[f64], theta_tilde: &[f64], gamma: f64) -> f64 {
    let ee: f64 = e.iter().map(|v| v * v).sum();
    if gamma == 0.0 {
        return 0.5 * ee;
    }
    let tt: f64 = theta_tilde.iter().map(|v| v * v).sum();
    0.5 * ee + tt / (2.0 * gamma)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovReport {
    pub lambda1: f64,
    pub lambda2: f64,
    pub mu0: f64,
    /// Decay rate `min(2 λ_min(k), 2 k_cl σ₁)`; set for latched CL runs.
    pub mu1: Option<f64>,
    pub sigma1: Option<f64>,
    pub latch_time: Option<f64>,
    pub v_series: Vec<f64>,
    /// Largest per-step increase of `V` in units of `1 + V`.
    pub worst_v_increase: f64,
    pub v_monotone: bool,
    /// Largest `‖y(t)‖ / (μ₀ ‖y(t_f)‖ e^{−μ₁(t − t_f)})` after the latch.
    pub worst_envelope_ratio: Option<f64>,
    pub envelope_ok: bool,
}

fn y_norm(log: &TrajectoryLog, i: usize) -> f64 {
    let e: f64 = log.e(i).iter().map(|v| v * v).sum();
    let t: f64 = log.theta_tilde(i).iter().map(|v| v * v).sum();
    (e + t).sqrt()
}

fn monotone_part(log: &TrajectoryLog) -> (Vec<f64>, f64, bool) {
    let v_series: Vec<f64> = (0..log.len())
        .map(|i| lyapunov_value(log.e(i), log.theta_tilde(i), log.gamma))
        .collect();
    let worst = v_series
        .windows(2)
        .map(|w| (w[1] - w[0]) / (1.0 + w[0]))
        .fold(f64::NEG_INFINITY, f64::max);
    (v_series, worst, worst <= V_SLACK)
}

impl LyapunovReport {
    /// Non-increase check only, for runs without a convergence-rate claim.
    pub fn monotone_only(log: &TrajectoryLog) -> Self {
        let (lambda1, lambda2) = lambda_bounds(log.gamma);
        let (v_series, worst, ok) = monotone_part(log);
        Self {
            lambda1,
            lambda2,
            mu0: (lambda2 / lambda1).sqrt(),
            mu1: None,
            sigma1: None,
            latch_time: None,
            v_series,
            worst_v_increase: worst,
            v_monotone: ok,
            worst_envelope_ratio: None,
            envelope_ok: ok,
        }
    }
}

fn lambda_bounds(gamma: f64) -> (f64, f64) {
    if gamma == 0.0 {
        return (0.5, 0.5);
    }
    let a: f64 = 0.5;
    let b = 1.0 / (2.0 * gamma);
    (a.min(b), a.max(b))
}

/// Rate in the exponential bound, `min(2 λ_min(k), 2 k_cl σ₁)`.
pub fn decay_rate(min_gain: f64, k_cl: f64, sigma1: f64) -> f64 {
    (2.0 * min_gain).min(2.0 * k_cl * sigma1)
}

/// Evaluates `V` along a run and checks the applicable stability claim.
///
/// Gradient runs must have non-increasing `V`. Concurrent-learning runs must
/// additionally stay inside `μ₀ ‖y(t_f)‖ e^{−μ₁(t − t_f)}` after the
/// finite-excitation latch at `t_f`.
pub fn lyapunov_series(log: &TrajectoryLog) -> Result<LyapunovReport> {
    let mut report = LyapunovReport::monotone_only(log);
    if log.law_kind == LawKind::Gradient {
        return Ok(report);
    }
    if log.gamma == 0.0 {
        return Err(Error::Validation("envelope check needs gamma > 0".into()));
    }
    let latch = log.fe_latch.ok_or(Error::MissingFe)?;
    let mu1 = decay_rate(log.min_gain, log.k_cl, latch.sigma1);
    let y_f = y_norm(log, latch.step);
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for i in latch.step..log.len() {
        let bound = report.mu0 * y_f * (-mu1 * (log.t[i] - latch.t)).exp();
        let y = y_norm(log, i);
        if y > bound * (1.0 + ENVELOPE_SLACK) {
            ok = false;
        }
        if bound > 0.0 {
            worst = worst.max(y / bound);
        }
    }
    report.mu1 = Some(mu1);
    report.sigma1 = Some(latch.sigma1);
    report.latch_time = Some(latch.t);
    report.worst_envelope_ratio = Some(worst);
    report.envelope_ok = report.v_monotone && ok;
    Ok(report)
}

/// Estimate trajectory from the full-dimension integration.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleTrajectory {
    pub p: usize,
    pub t: Vec<f64>,
    pub theta_hat: Vec<f64>,
}

impl OracleTrajectory {
    pub fn theta_hat(&self, i: usize) -> &[f64] {
        &self.theta_hat[i * self.p..(i + 1) * self.p]
    }
}

/// Integrates `θ̂̇ = FFᵀ(γ Yᵀe + k_cl Σₖ Yₖᵀ(ẋ̂ₖ − uₖ − Yₖ θ̂))` directly in `ℝᵖ`.
///
/// Uses the same RK4 grid, stack capacity, offer cadence and latch rule as
/// [`run`], but never touches the reduced coordinate.
pub fn oracle_full_dimension(scenario: &Scenario) -> Result<OracleTrajectory> {
    scenario.validate()?;
    let n = scenario.states();
    let p = scenario.params();
    let dt = scenario.solver.dt;
    let steps = scenario.steps();
    let projector = scenario.constraint.projector();
    let gamma = scenario.law.gamma;
    let k_cl = scenario.law.k_cl;
    let use_stack = scenario.law_kind == LawKind::ConcurrentLearning;

    let input = |t: f64,
                 x: &DVector<f64>,
                 theta_hat: &DVector<f64>|
     -> Result<(DMatrix<f64>, DVector<f64>, DVector<f64>)> {
        let (xd, xd_dot) = scenario.trajectory.eval(t);
        let e = x - xd;
        let y = scenario.plant.regressor.eval(x)?;
        let u = control(&scenario.controller, &e, &xd_dot, &y, theta_hat)?;
        Ok((y, e, u))
    };

    let field = |t: f64, s: &DVector<f64>, stack: Option<&HistoryStack>| -> Result<DVector<f64>> {
        let x = s.rows(0, n).into_owned();
        let theta_hat = s.rows(n, p).into_owned();
        let (y, e, u) = input(t, &x, &theta_hat)?;
        let x_dot = &y * &scenario.plant.theta_true + u;
        let mut drive = gamma * y.transpose() * e;
        if let Some(stack) = stack {
            for rec in stack.entries() {
                let resid = &rec.xdot_hat - &rec.u - &rec.y * &theta_hat;
                drive += k_cl * rec.y.transpose() * resid;
            }
        }
        let th_dot = &projector * drive;
        Ok(DVector::from_iterator(
            n + p,
            x_dot.iter().chain(th_dot.iter()).copied(),
        ))
    };

    let mut s = DVector::from_iterator(
        n + p,
        scenario
            .plant
            .x0
            .iter()
            .chain(scenario.theta_hat0.iter())
            .copied(),
    );
    let mut stack = HistoryStack::new(scenario.stack.capacity, p, scenario.stack.rel_improve_tol)?;
    let mut latched = false;
    let mut out = OracleTrajectory {
        p,
        t: Vec::with_capacity(steps + 1),
        theta_hat: Vec::with_capacity((steps + 1) * p),
    };
    // x and u history for the derivative estimates
    let mut xs: Vec<DVector<f64>> = Vec::with_capacity(if use_stack { steps + 1 } else { 0 });
    let mut us: Vec<DVector<f64>> = Vec::with_capacity(xs.capacity());

    let mut record = |t: f64,
                      s: &DVector<f64>,
                      xs: &mut Vec<DVector<f64>>,
                      us: &mut Vec<DVector<f64>>|
     -> Result<()> {
        out.t.push(t);
        out.theta_hat.extend(s.rows(n, p).iter());
        if use_stack {
            let x = s.rows(0, n).into_owned();
            let (_, _, u) = input(t, &x, &s.rows(n, p).into_owned())?;
            xs.push(x);
            us.push(u);
        }
        Ok(())
    };
    record(0.0, &s, &mut xs, &mut us)?;

    for i in 0..steps {
        let t = i as f64 * dt;
        let active = (use_stack && latched).then_some(&stack);
        s = rk4_step(|tt, v| field(tt, v, active), t, &s, dt)?;
        let t_next = (i + 1) as f64 * dt;
        if s.iter()
            .any(|v| !v.is_finite() || v.abs() > scenario.solver.overflow_guard)
        {
            return Err(Error::Diverged {
                t: t_next,
                reason: "oracle state exceeds overflow guard".into(),
            });
        }
        record(t_next, &s, &mut xs, &mut us)?;
        if use_stack && i >= 1 && i % scenario.stack.cadence == 0 {
            let x = xs[i].clone();
            let y = scenario.plant.regressor.eval(&x)?;
            let xdot_hat = (&xs[i + 1] - &xs[i - 1]) / (2.0 * dt);
            stack.offer(StackRecord {
                x,
                u: us[i].clone(),
                xdot_hat,
                y,
            })?;
            if !latched && fe_satisfied(&stack, &scenario.law).is_some() {
                latched = true;
            }
        }
    }
    Ok(out)
}

/// `max_t ‖θ̂_reduced(t) − θ̂_full(t)‖∞` over the shared grid.
pub fn max_oracle_deviation(log: &TrajectoryLog, oracle: &OracleTrajectory) -> Result<f64> {
    if log.len() != oracle.t.len() || log.p != oracle.p {
        return Err(Error::dim("oracle and run use different grids"));
    }
    Ok((0..log.len())
        .flat_map(|i| {
            log.theta_hat(i)
                .iter()
                .zip(oracle.theta_hat(i))
                .map(|(a, b)| (a - b).abs())
        })
        .fold(0.0, f64::max))
}

/// Headline numbers of a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub scenario: String,
    pub law: String,
    pub steps: usize,
    pub dt: f64,
    pub horizon: f64,
    pub initial_error_norm: f64,
    pub final_error_norm: f64,
    pub initial_theta_tilde_norm: f64,
    pub final_theta_tilde_norm: f64,
    pub max_constraint_violation: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fe_latch_time: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu1: Option<f64>,
    pub final_lambda_min_yr: f64,
    pub v_monotone: bool,
    pub worst_v_increase: f64,
    pub envelope_ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub worst_envelope_ratio: Option<f64>,
    pub max_derivative_error: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle_max_deviation: Option<f64>,
}

pub fn summary(name: &str, log: &TrajectoryLog, report: &LyapunovReport) -> RunSummary {
    let last = log.last();
    RunSummary {
        scenario: name.to_string(),
        law: log.law_kind.as_str().to_string(),
        steps: last,
        dt: log.dt,
        horizon: log.t[last],
        initial_error_norm: slice_norm(log.e(0)),
        final_error_norm: slice_norm(log.e(last)),
        initial_theta_tilde_norm: slice_norm(log.theta_tilde(0)),
        final_theta_tilde_norm: slice_norm(log.theta_tilde(last)),
        max_constraint_violation: log.max_violation(),
        fe_latch_time: log.fe_latch.map(|l| l.t),
        sigma1: log.fe_latch.map(|l| l.sigma1),
        mu1: report.mu1,
        final_lambda_min_yr: log.lambda_min[last],
        v_monotone: report.v_monotone,
        worst_v_increase: report.worst_v_increase,
        envelope_ok: report.envelope_ok,
        worst_envelope_ratio: report.worst_envelope_ratio,
        max_derivative_error: log.max_derivative_error,
        oracle_max_deviation: None,
    }
}

/// Horizon long enough that `T − t_f ≥ periods / μ₁`, rounded up to the grid.
///
/// Returns `None` when the run never latched or is already long enough.
pub fn envelope_horizon(log: &TrajectoryLog, periods: f64) -> Option<f64> {
    let latch = log.fe_latch?;
    let mu1 = decay_rate(log.min_gain, log.k_cl, latch.sigma1);
    let needed = latch.t + periods / mu1;
    let current = log.t[log.last()];
    (needed > current).then(|| (needed / log.dt).ceil() * log.dt)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RichardsonEstimate {
    pub dts: [f64; 3],
    pub final_norms: [f64; 3],
    pub order: f64,
}

/// Observed convergence order of `‖x(T)‖` from runs at `dt`, `dt/2`, `dt/4`.
pub fn richardson_order(scenario: &Scenario, exec: Execution) -> Result<RichardsonEstimate> {
    let dt = scenario.solver.dt;
    let dts = [dt, dt / 2.0, dt / 4.0];
    let runs = par::map(&dts, exec, |&h| {
        let mut sc = scenario.clone();
        sc.solver.dt = h;
        run(&sc).map(|log| slice_norm(log.x(log.last())))
    });
    let mut final_norms = [0.0; 3];
    for (slot, r) in final_norms.iter_mut().zip(runs) {
        *slot = r?;
    }
    let coarse = (final_norms[0] - final_norms[1]).abs();
    let fine = (final_norms[1] - final_norms[2]).abs();
    Ok(RichardsonEstimate {
        dts,
        final_norms,
        order: (coarse / fine).log2(),
    })
}
