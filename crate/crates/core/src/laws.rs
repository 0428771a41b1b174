//! Tracking controller and the equality-constrained update laws.
//!
//! Both laws evolve the reduced coordinate `z`; the estimate `θ̂ = θ₀ + F z`
//! therefore never leaves the constraint set.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::constraint::ConstraintSpec;
use crate::error::{Error, Result};

pub const DEFAULT_STACK_CAPACITY: usize = 20;
pub const DEFAULT_REL_IMPROVE_TOL: f64 = 1e-6;

/// Diagonal feedback gain `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerConfig {
    gains: DVector<f64>,
}

impl ControllerConfig {
    pub fn new(gains: DVector<f64>) -> Result<Self> {
        if gains.is_empty() || gains.iter().any(|g| !(*g > 0.0) || !g.is_finite()) {
            return Err(Error::Validation(format!(
                "controller gains must be finite and positive, got {:?}",
                gains.as_slice()
            )));
        }
        Ok(Self { gains })
    }

    pub fn gains(&self) -> &DVector<f64> {
        &self.gains
    }

    /// Smallest diagonal gain, the rate that enters the convergence bounds.
    pub fn min_gain(&self) -> f64 {
        self.gains.min()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateLawConfig {
    /// Adaptation gain. Zero freezes the estimate.
    pub gamma: f64,
    /// Concurrent-learning gain. Zero disables the recorded-data term.
    pub k_cl: f64,
    /// Minimum eigenvalue of `Y_R` that counts as finite excitation.
    pub sigma1_threshold: f64,
}

impl UpdateLawConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(Error::Validation(format!(
                "gamma must be >= 0, got {}",
                self.gamma
            )));
        }
        if !(self.k_cl >= 0.0) || !self.k_cl.is_finite() {
            return Err(Error::Validation(format!(
                "k_cl must be >= 0, got {}",
                self.k_cl
            )));
        }
        if !(self.sigma1_threshold > 0.0) {
            return Err(Error::Validation(format!(
                "sigma1_threshold must be positive, got {}",
                self.sigma1_threshold
            )));
        }
        Ok(())
    }
}

/// `u = ẋ_d − Y θ̂ − k e`.
pub fn control(
    cfg: &ControllerConfig,
    e: &DVector<f64>,
    xd_dot: &DVector<f64>,
    y: &DMatrix<f64>,
    theta_hat: &DVector<f64>,
) -> Result<DVector<f64>> {
    let n = cfg.gains.len();
    if e.len() != n || xd_dot.len() != n || y.nrows() != n || y.ncols() != theta_hat.len() {
        return Err(Error::dim(format!(
            "control: gains {n}, e {}, xd_dot {}, Y {:?}, theta_hat {}",
            e.len(),
            xd_dot.len(),
            y.shape(),
            theta_hat.len()
        )));
    }
    Ok(xd_dot - y * theta_hat - cfg.gains.component_mul(e))
}

fn check_law_dims(spec: &ConstraintSpec, y: &DMatrix<f64>, e: &DVector<f64>) -> Result<()> {
    if y.ncols() != spec.params() || y.nrows() != e.len() {
        return Err(Error::dim(format!(
            "update law: Y {:?}, e {}, p {}",
            y.shape(),
            e.len(),
            spec.params()
        )));
    }
    Ok(())
}

/// Gradient law `ż = γ Fᵀ Yᵀ e`.
pub fn grad_zdot(
    spec: &ConstraintSpec,
    cfg: &UpdateLawConfig,
    y: &DMatrix<f64>,
    e: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_law_dims(spec, y, e)?;
    Ok(cfg.gamma * spec.null_basis().tr_mul(&y.tr_mul(e)))
}

/// Concurrent-learning law
/// `ż = γ Fᵀ Yᵀ e + k_cl Fᵀ Σₖ Yₖᵀ (ẋ̂ₖ − uₖ − Yₖ θ̂)`.
///
/// With an empty stack this is exactly [`grad_zdot`].
pub fn cl_zdot(
    spec: &ConstraintSpec,
    cfg: &UpdateLawConfig,
    y: &DMatrix<f64>,
    e: &DVector<f64>,
    stack: &HistoryStack,
    theta_hat: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_law_dims(spec, y, e)?;
    if theta_hat.len() != spec.params() || stack.params() != spec.params() {
        return Err(Error::dim(
            "cl_zdot: estimate or stack does not match parameter dimension",
        ));
    }
    let grad = y.tr_mul(e) * cfg.gamma;
    if stack.is_empty() {
        return Ok(spec.null_basis().tr_mul(&grad));
    }
    let residual_term = stack.residual_sum(theta_hat);
    Ok(spec.null_basis().tr_mul(&(grad + cfg.k_cl * residual_term)))
}

/// One recorded sample: state, applied input, derivative estimate and `Y(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StackRecord {
    pub x: DVector<f64>,
    pub u: DVector<f64>,
    pub xdot_hat: DVector<f64>,
    pub y: DMatrix<f64>,
}

/// Bounded buffer of recorded samples for concurrent learning.
///
/// Once full, a new sample replaces an old one only if doing so raises the
/// minimum eigenvalue of `Y_R = Σ YₖᵀYₖ`, so that eigenvalue never decreases.
#[derive(Debug, Clone)]
pub struct HistoryStack {
    capacity: usize,
    rel_improve_tol: f64,
    entries: Vec<StackRecord>,
    yr: DMatrix<f64>,
    // Σ Yₖᵀ (ẋ̂ₖ − uₖ)
    measured: DVector<f64>,
    lambda_min: f64,
}

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.min().max(0.0)
}

impl HistoryStack {
    pub fn new(capacity: usize, params: usize, rel_improve_tol: f64) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Validation(
                "history stack capacity must be positive".into(),
            ));
        }
        if !(rel_improve_tol >= 0.0) {
            return Err(Error::Validation("rel_improve_tol must be >= 0".into()));
        }
        Ok(Self {
            capacity,
            rel_improve_tol,
            entries: Vec::with_capacity(capacity),
            yr: DMatrix::zeros(params, params),
            measured: DVector::zeros(params),
            lambda_min: 0.0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn params(&self) -> usize {
        self.yr.nrows()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() == self.capacity
    }

    pub fn entries(&self) -> &[StackRecord] {
        &self.entries
    }

    /// Cached `Y_R`.
    pub fn yr(&self) -> &DMatrix<f64> {
        &self.yr
    }

    /// Cached minimum eigenvalue of `Y_R`, clamped at zero.
    pub fn lambda_min(&self) -> f64 {
        self.lambda_min
    }

    /// `Σₖ Yₖᵀ (ẋ̂ₖ − uₖ − Yₖ θ̂)`, evaluated from the cached sums.
    pub fn residual_sum(&self, theta_hat: &DVector<f64>) -> DVector<f64> {
        &self.measured - &self.yr * theta_hat
    }

    fn rebuild(&mut self) {
        let p = self.params();
        self.yr = DMatrix::zeros(p, p);
        self.measured = DVector::zeros(p);
        for rec in &self.entries {
            self.yr += rec.y.tr_mul(&rec.y);
            self.measured += rec.y.tr_mul(&(&rec.xdot_hat - &rec.u));
        }
        self.lambda_min = min_eigenvalue(&self.yr);
    }

    /// Offers a record; returns whether it was stored.
    pub fn offer(&mut self, candidate: StackRecord) -> Result<bool> {
        let p = self.params();
        let n = candidate.y.nrows();
        if candidate.y.ncols() != p
            || candidate.x.len() != n
            || candidate.u.len() != n
            || candidate.xdot_hat.len() != n
        {
            return Err(Error::dim("stack record dimensions are inconsistent"));
        }
        if !self.is_full() {
            self.entries.push(candidate);
            self.rebuild();
            return Ok(true);
        }

        let gain = candidate.y.tr_mul(&candidate.y);
        let mut best: Option<(usize, f64)> = None;
        for (i, rec) in self.entries.iter().enumerate() {
            let trial = &self.yr - rec.y.tr_mul(&rec.y) + &gain;
            let lam = min_eigenvalue(&trial);
            if best.is_none_or(|(_, b)| lam > b) {
                best = Some((i, lam));
            }
        }
        let (slot, lam) = best.expect("full stack is non-empty");
        // Absolute floor keeps a rank-deficient stack from churning on roundoff.
        let scale = self
            .lambda_min
            .max(1e-12 * self.yr.trace().max(f64::MIN_POSITIVE));
        if lam > self.lambda_min + self.rel_improve_tol * scale {
            self.entries[slot] = candidate;
            self.rebuild();
            Ok(true)
        } else {
            Ok(false)
        }
    }
}

/// Finite-excitation test: `Some(σ₁)` with `σ₁ = λ_min(Y_R)` once it reaches the threshold.
pub fn fe_satisfied(stack: &HistoryStack, cfg: &UpdateLawConfig) -> Option<f64> {
    (!stack.is_empty() && stack.lambda_min() >= cfg.sigma1_threshold).then_some(stack.lambda_min())
}
