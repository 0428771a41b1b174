//! Control-affine plant `ẋ = Y(x) θ + u` and desired trajectories.

use std::fmt;
use std::sync::Arc;

use nalgebra::{dvector, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

type RegressorFn = dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync;
type TrajectoryFn = dyn Fn(f64) -> (DVector<f64>, DVector<f64>) + Send + Sync;

/// State-dependent regressor `x ↦ Y(x)` with fixed shape `n × p`.
#[derive(Clone)]
pub struct Regressor {
    n: usize,
    p: usize,
    f: Arc<RegressorFn>,
}

impl Regressor {
    pub fn new<F>(n: usize, p: usize, f: F) -> Self
    where
        F: Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    {
        Self {
            n,
            p,
            f: Arc::new(f),
        }
    }

    pub fn states(&self) -> usize {
        self.n
    }

    pub fn params(&self) -> usize {
        self.p
    }

    pub fn eval(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        if x.len() != self.n {
            return Err(Error::dim(format!(
                "state has length {}, expected {}",
                x.len(),
                self.n
            )));
        }
        let y = (self.f)(x);
        if y.shape() != (self.n, self.p) {
            return Err(Error::dim(format!(
                "regressor returned {:?}, expected {:?}",
                y.shape(),
                (self.n, self.p)
            )));
        }
        Ok(y)
    }
}

impl fmt::Debug for Regressor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Regressor")
            .field("n", &self.n)
            .field("p", &self.p)
            .finish()
    }
}

/// Desired trajectory `t ↦ (x_d(t), ẋ_d(t))`, with an analytic derivative.
#[derive(Clone)]
pub struct DesiredTrajectory {
    n: usize,
    f: Arc<TrajectoryFn>,
}

impl DesiredTrajectory {
    pub fn new<F>(n: usize, f: F) -> Self
    where
        F: Fn(f64) -> (DVector<f64>, DVector<f64>) + Send + Sync + 'static,
    {
        Self { n, f: Arc::new(f) }
    }

    pub fn states(&self) -> usize {
        self.n
    }

    pub fn eval(&self, t: f64) -> (DVector<f64>, DVector<f64>) {
        (self.f)(t)
    }
}

impl fmt::Debug for DesiredTrajectory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DesiredTrajectory")
            .field("n", &self.n)
            .finish()
    }
}

#[derive(Debug, Clone)]
pub struct PlantConfig {
    pub regressor: Regressor,
    pub theta_true: DVector<f64>,
    pub x0: DVector<f64>,
}

/// `Y(x) θ + u`.
pub fn plant_rhs(plant: &PlantConfig, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
    if u.len() != plant.regressor.states() {
        return Err(Error::dim(format!(
            "input has length {}, expected {}",
            u.len(),
            plant.regressor.states()
        )));
    }
    if plant.theta_true.len() != plant.regressor.params() {
        return Err(Error::dim("true parameter length does not match regressor"));
    }
    Ok(plant.regressor.eval(x)? * &plant.theta_true + u)
}

/// `Y(x) = [[x₁², sin x₂, 0, 0], [0, x₂ sin x₁, x₁, x₁x₂]]`.
pub fn benchmark_regressor() -> Regressor {
    Regressor::new(2, 4, |x| {
        let (x1, x2) = (x[0], x[1]);
        DMatrix::from_row_slice(
            2,
            4,
            &[x1 * x1, x2.sin(), 0.0, 0.0, 0.0, x2 * x1.sin(), x1, x1 * x2],
        )
    })
}

/// `x_d(t) = 10(1 − e^{−0.1t}) [sin 2t, 0.4 cos 3t]`.
pub fn benchmark_trajectory() -> DesiredTrajectory {
    DesiredTrajectory::new(2, |t| {
        let decay = (-0.1 * t).exp();
        let amp = 10.0 * (1.0 - decay);
        let damp = decay; // d/dt of amp
        let shape = dvector![(2.0 * t).sin(), 0.4 * (3.0 * t).cos()];
        let dshape = dvector![2.0 * (2.0 * t).cos(), -1.2 * (3.0 * t).sin()];
        let xd = amp * &shape;
        let xd_dot = damp * shape + amp * dshape;
        (xd, xd_dot)
    })
}

/// One term of an inline regressor entry: `coeff · Π factors`.
#[derive(Debug, Clone, PartialEq)]
struct Monomial {
    coeff: f64,
    factors: Vec<Factor>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Factor {
    Pow(usize, i32),
    Sin(usize),
    Cos(usize),
}

impl Factor {
    fn eval(self, x: &DVector<f64>) -> f64 {
        match self {
            Factor::Pow(i, k) => x[i].powi(k),
            Factor::Sin(i) => x[i].sin(),
            Factor::Cos(i) => x[i].cos(),
        }
    }
}

/// One nonzero entry of an inline regressor, e.g. `{ row = 1, col = 3, expr = "x1*x2" }`.
///
/// `expr` is a sum of products. Factors are numbers, `xI`, `xI^K`, `sin(xI)` and
/// `cos(xI)`, with 1-based state indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressorEntry {
    pub row: usize,
    pub col: usize,
    pub expr: String,
}

/// Regressor assembled from per-entry expressions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InlineRegressor {
    pub states: usize,
    pub params: usize,
    pub entries: Vec<RegressorEntry>,
}

impl InlineRegressor {
    pub fn compile(&self) -> Result<Regressor> {
        let (n, p) = (self.states, self.params);
        if n == 0 || p == 0 {
            return Err(Error::Validation(
                "inline regressor needs positive dimensions".into(),
            ));
        }
        let mut compiled = Vec::with_capacity(self.entries.len());
        for entry in &self.entries {
            if entry.row >= n || entry.col >= p {
                return Err(Error::Validation(format!(
                    "regressor entry ({}, {}) outside {n}x{p}",
                    entry.row, entry.col
                )));
            }
            let terms = parse_expr(&entry.expr, n)?;
            compiled.push((entry.row, entry.col, terms));
        }
        Ok(Regressor::new(n, p, move |x| {
            let mut y = DMatrix::zeros(n, p);
            for (r, c, terms) in &compiled {
                y[(*r, *c)] += terms
                    .iter()
                    .map(|m| m.coeff * m.factors.iter().map(|f| f.eval(x)).product::<f64>())
                    .sum::<f64>();
            }
            y
        }))
    }
}

fn parse_expr(src: &str, n: usize) -> Result<Vec<Monomial>> {
    let bad = |why: &str| Error::Parse(format!("regressor expression {src:?}: {why}"));
    let cleaned: String = src.chars().filter(|c| !c.is_whitespace()).collect();
    if cleaned.is_empty() {
        return Err(bad("empty"));
    }
    // Split on '+' and on binary '-' (a '-' that does not follow '^', '*' or the start).
    let mut terms = Vec::new();
    let mut start = 0;
    let bytes = cleaned.as_bytes();
    for i in 1..bytes.len() {
        let c = bytes[i];
        let prev = bytes[i - 1];
        let exponent =
            prev == b'e' && i >= 2 && (bytes[i - 2].is_ascii_digit() || bytes[i - 2] == b'.');
        if (c == b'+' || c == b'-')
            && !exponent
            && !matches!(prev, b'^' | b'*' | b'+' | b'-' | b'(')
        {
            terms.push(&cleaned[start..i]);
            start = if c == b'+' { i + 1 } else { i };
        }
    }
    terms.push(&cleaned[start..]);

    let state_index = |s: &str| -> Result<usize> {
        let idx: usize = s
            .strip_prefix('x')
            .and_then(|d| d.parse().ok())
            .ok_or_else(|| bad(&format!("expected a state like x1, got {s:?}")))?;
        if idx == 0 || idx > n {
            return Err(bad(&format!("state index {idx} outside 1..={n}")));
        }
        Ok(idx - 1)
    };

    let mut out = Vec::with_capacity(terms.len());
    for term in terms {
        let (mut coeff, body) = match term.strip_prefix('-') {
            Some(rest) => (-1.0, rest),
            None => (1.0, term.strip_prefix('+').unwrap_or(term)),
        };
        if body.is_empty() {
            return Err(bad("dangling sign"));
        }
        let mut factors = Vec::new();
        for factor in body.split('*') {
            if let Ok(v) = factor.parse::<f64>() {
                coeff *= v;
            } else if let Some(inner) = factor
                .strip_prefix("sin(")
                .and_then(|f| f.strip_suffix(')'))
            {
                factors.push(Factor::Sin(state_index(inner)?));
            } else if let Some(inner) = factor
                .strip_prefix("cos(")
                .and_then(|f| f.strip_suffix(')'))
            {
                factors.push(Factor::Cos(state_index(inner)?));
            } else if let Some((base, exp)) = factor.split_once('^') {
                let k: i32 = exp
                    .parse()
                    .map_err(|_| bad(&format!("bad exponent {exp:?}")))?;
                factors.push(Factor::Pow(state_index(base)?, k));
            } else {
                factors.push(Factor::Pow(state_index(factor)?, 1));
            }
        }
        out.push(Monomial { coeff, factors });
    }
    Ok(out)
}

/// Inline description equivalent to [`benchmark_regressor`].
pub fn benchmark_inline() -> InlineRegressor {
    let e = |row, col, expr: &str| RegressorEntry {
        row,
        col,
        expr: expr.to_string(),
    };
    InlineRegressor {
        states: 2,
        params: 4,
        entries: vec![
            e(0, 0, "x1^2"),
            e(0, 1, "sin(x2)"),
            e(1, 1, "x2*sin(x1)"),
            e(1, 2, "x1"),
            e(1, 3, "x1*x2"),
        ],
    }
}
