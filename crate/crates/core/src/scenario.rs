//! Scenario files and the built-in presets.
//!
//! A scenario is a single TOML document. [`ScenarioConfig`] is the raw,
//! serializable form; [`ScenarioConfig::resolve`] validates it and builds the
//! runtime [`Scenario`].

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::constraint::{build_constraint, ConstraintSpec, DEFAULT_FEAS_TOL, DEFAULT_RANK_TOL};
use crate::error::{Error, Result};
use crate::laws::{
    ControllerConfig, UpdateLawConfig, DEFAULT_REL_IMPROVE_TOL, DEFAULT_STACK_CAPACITY,
};
use crate::plant::{benchmark_regressor, benchmark_trajectory, InlineRegressor, PlantConfig};
use crate::sim::{
    LawKind, Scenario, SolverSettings, StackSettings, DEFAULT_DT, DEFAULT_HORIZON,
    DEFAULT_OVERFLOW_GUARD, DEFAULT_STACK_CADENCE,
};

pub const PRESETS: [&str; 2] = ["paper_sim1", "paper_sim2"];

/// Default finite-excitation threshold on `λ_min(Y_R)`.
pub const DEFAULT_SIGMA1_THRESHOLD: f64 = 100.0;

/// Names accepted for the built-in regressor and trajectory.
const BENCHMARK_NAMES: [&str; 3] = ["benchmark", "paper_sim1", "paper_sim2"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub law: LawKind,
    /// Built-in trajectory name.
    pub trajectory: String,
    pub plant: PlantSection,
    pub constraint: ConstraintSection,
    pub gains: GainSection,
    pub initial: InitialSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub stack: StackSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSection {
    /// Built-in regressor name; mutually exclusive with `inline`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inline: Option<InlineRegressor>,
    pub theta_true: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintSection {
    /// Rows of `A`.
    pub a: Vec<Vec<f64>>,
    pub d: Vec<f64>,
    #[serde(default = "default_rank_tol")]
    pub rank_tol: f64,
    #[serde(default = "default_feas_tol")]
    pub feas_tol: f64,
    /// Optional explicit null-space basis, given as the `p` rows of `F`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub null_basis: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainSection {
    /// Diagonal of the feedback gain.
    pub k: Vec<f64>,
    pub gamma: f64,
    #[serde(default)]
    pub k_cl: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub x0: Vec<f64>,
    pub theta_hat0: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub dt: f64,
    pub horizon: f64,
    pub overflow_guard: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            dt: DEFAULT_DT,
            horizon: DEFAULT_HORIZON,
            overflow_guard: DEFAULT_OVERFLOW_GUARD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StackSection {
    pub capacity: usize,
    pub cadence: usize,
    pub sigma1_threshold: f64,
    pub rel_improve_tol: f64,
}

impl Default for StackSection {
    fn default() -> Self {
        Self {
            capacity: DEFAULT_STACK_CAPACITY,
            cadence: DEFAULT_STACK_CADENCE,
            sigma1_threshold: DEFAULT_SIGMA1_THRESHOLD,
            rel_improve_tol: DEFAULT_REL_IMPROVE_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub trajectory_file: String,
    pub summary_file: String,
    pub oracle_file: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            trajectory_file: "trajectory.csv".into(),
            summary_file: "summary.toml".into(),
            oracle_file: "oracle.csv".into(),
        }
    }
}

fn default_rank_tol() -> f64 {
    DEFAULT_RANK_TOL
}

fn default_feas_tol() -> f64 {
    DEFAULT_FEAS_TOL
}

/// Built-in scenario by name.
pub fn preset(name: &str) -> Result<ScenarioConfig> {
    let base =
        |name: &str, law, theta_true: Vec<f64>, a: Vec<f64>, gamma, k_cl, theta_hat0: Vec<f64>| {
            ScenarioConfig {
                name: name.to_string(),
                law,
                trajectory: "benchmark".into(),
                plant: PlantSection {
                    model: Some("benchmark".into()),
                    inline: None,
                    theta_true,
                },
                constraint: ConstraintSection {
                    a: vec![a],
                    d: vec![0.0],
                    rank_tol: DEFAULT_RANK_TOL,
                    feas_tol: DEFAULT_FEAS_TOL,
                    null_basis: None,
                },
                gains: GainSection {
                    k: vec![2.0 * 10.0, 2.0 * 50.0],
                    gamma,
                    k_cl,
                },
                initial: InitialSection {
                    x0: vec![10.0, 5.0],
                    theta_hat0,
                },
                solver: SolverSection::default(),
                stack: StackSection::default(),
                output: OutputSection::default(),
            }
        };
    match name {
        "paper_sim1" => Ok(base(
            name,
            LawKind::Gradient,
            vec![5.0, 5.0, 10.0, 20.0],
            vec![1.0, -1.0, 0.0, 0.0],
            0.4,
            0.0,
            vec![4.5, 4.5, 4.5, 15.0],
        )),
        "paper_sim2" => Ok(base(
            name,
            LawKind::ConcurrentLearning,
            vec![5.0, 20.0, 10.0, 20.0],
            vec![0.0, -1.0, 0.0, 1.0],
            0.05,
            0.0008,
            vec![3.0, 10.0, 5.0, 10.0],
        )),
        other => Err(Error::Validation(format!(
            "unknown preset {other:?}; available: {}",
            PRESETS.join(", ")
        ))),
    }
}

fn matrix_from_rows(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Validation(format!(
            "{what} must be a non-empty rectangular matrix"
        )));
    }
    Ok(DMatrix::from_row_iterator(
        rows.len(),
        ncols,
        rows.iter().flatten().copied(),
    ))
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn constraint_spec(&self) -> Result<ConstraintSpec> {
        let c = &self.constraint;
        let a = matrix_from_rows(&c.a, "constraint.a")?;
        let d = DVector::from_vec(c.d.clone());
        match &c.null_basis {
            None => build_constraint(a, d, c.rank_tol),
            Some(rows) => ConstraintSpec::with_basis(
                a,
                d,
                matrix_from_rows(rows, "constraint.null_basis")?,
                1e-10,
            ),
        }
    }

    /// Validates every field and builds the runtime scenario.
    pub fn resolve(&self) -> Result<Scenario> {
        let regressor = match (&self.plant.model, &self.plant.inline) {
            (Some(name), None) if BENCHMARK_NAMES.contains(&name.as_str()) => benchmark_regressor(),
            (Some(name), None) => {
                return Err(Error::Validation(format!("unknown plant model {name:?}")))
            }
            (None, Some(inline)) => inline.compile()?,
            _ => {
                return Err(Error::Validation(
                    "plant needs exactly one of `model` or `inline`".into(),
                ))
            }
        };
        if !BENCHMARK_NAMES.contains(&self.trajectory.as_str()) {
            return Err(Error::Validation(format!(
                "unknown trajectory {:?}",
                self.trajectory
            )));
        }
        let trajectory = benchmark_trajectory();
        let constraint = self.constraint_spec().map_err(|e| match e {
            Error::Dimension(msg) => Error::Validation(format!("constraint: {msg}")),
            other => other,
        })?;
        let controller = ControllerConfig::new(DVector::from_vec(self.gains.k.clone()))?;
        let law = UpdateLawConfig {
            gamma: self.gains.gamma,
            k_cl: self.gains.k_cl,
            sigma1_threshold: self.stack.sigma1_threshold,
        };
        let scenario = Scenario {
            name: self.name.clone(),
            plant: PlantConfig {
                regressor,
                theta_true: DVector::from_vec(self.plant.theta_true.clone()),
                x0: DVector::from_vec(self.initial.x0.clone()),
            },
            trajectory,
            constraint,
            controller,
            law,
            law_kind: self.law,
            theta_hat0: DVector::from_vec(self.initial.theta_hat0.clone()),
            solver: SolverSettings {
                dt: self.solver.dt,
                horizon: self.solver.horizon,
                overflow_guard: self.solver.overflow_guard,
            },
            stack: StackSettings {
                capacity: self.stack.capacity,
                cadence: self.stack.cadence,
                rel_improve_tol: self.stack.rel_improve_tol,
            },
            feas_tol: self.constraint.feas_tol,
        };
        scenario.validate()?;
        Ok(scenario)
    }
}

/// Loads a preset by name or a scenario file by path, then validates it.
pub fn load_scenario(source: &str) -> Result<(ScenarioConfig, Scenario)> {
    let cfg = if PRESETS.contains(&source) {
        preset(source)?
    } else {
        ScenarioConfig::load(Path::new(source))?
    };
    let scenario = cfg.resolve()?;
    Ok((cfg, scenario))
}
