//! Parameter sweeps over a base scenario.

use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::metrics::{lyapunov_series, summary, LyapunovReport, RunSummary};
use crate::par::{self, Execution};
use crate::report;
use crate::scenario::ScenarioConfig;
use crate::sim::run;

/// Values to try for each sweepable field. Empty axes keep the base value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepGrid {
    pub gamma: Vec<f64>,
    pub k_cl: Vec<f64>,
    pub dt: Vec<f64>,
    pub capacity: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub gamma: f64,
    pub k_cl: f64,
    pub dt: f64,
    pub capacity: usize,
}

impl SweepPoint {
    pub fn label(&self) -> String {
        format!(
            "gamma={}_kcl={}_dt={}_h={}",
            self.gamma, self.k_cl, self.dt, self.capacity
        )
    }

    fn apply(&self, base: &ScenarioConfig) -> ScenarioConfig {
        let mut cfg = base.clone();
        cfg.gains.gamma = self.gamma;
        cfg.gains.k_cl = self.k_cl;
        cfg.solver.dt = self.dt;
        cfg.stack.capacity = self.capacity;
        cfg.name = format!("{}_{}", base.name, self.label());
        cfg
    }
}

impl SweepGrid {
    pub fn is_empty(&self) -> bool {
        self.gamma.is_empty()
            && self.k_cl.is_empty()
            && self.dt.is_empty()
            && self.capacity.is_empty()
    }

    /// Cartesian product of the non-empty axes.
    pub fn points(&self, base: &ScenarioConfig) -> Result<Vec<SweepPoint>> {
        if self.is_empty() {
            return Err(Error::Validation("sweep grid has no values".into()));
        }
        let or = |v: &Vec<f64>, d: f64| if v.is_empty() { vec![d] } else { v.clone() };
        let gammas = or(&self.gamma, base.gains.gamma);
        let kcls = or(&self.k_cl, base.gains.k_cl);
        let dts = or(&self.dt, base.solver.dt);
        let caps = if self.capacity.is_empty() {
            vec![base.stack.capacity]
        } else {
            self.capacity.clone()
        };
        let mut out = Vec::new();
        for &gamma in &gammas {
            for &k_cl in &kcls {
                for &dt in &dts {
                    for &capacity in &caps {
                        out.push(SweepPoint {
                            gamma,
                            k_cl,
                            dt,
                            capacity,
                        });
                    }
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub point: SweepPoint,
    /// Failure message when the run did not complete.
    pub outcome: std::result::Result<RunSummary, String>,
}

/// Runs one grid point; optionally writes its trajectory and summary under `out_dir/<label>/`.
fn run_point(
    base: &ScenarioConfig,
    point: &SweepPoint,
    out_dir: Option<&Path>,
) -> Result<RunSummary> {
    let cfg = point.apply(base);
    let scenario = cfg.resolve()?;
    let log = run(&scenario)?;
    let report = match lyapunov_series(&log) {
        Ok(r) => r,
        Err(Error::MissingFe) => LyapunovReport::monotone_only(&log),
        Err(e) => return Err(e),
    };
    let s = summary(&cfg.name, &log, &report);
    if let Some(dir) = out_dir {
        let dir = dir.join(point.label());
        report::save_trajectory(&log, &dir.join(&cfg.output.trajectory_file))?;
        report::save_summary(&s, &dir.join(&cfg.output.summary_file))?;
    }
    Ok(s)
}

/// Runs every grid point. Failures are recorded per row and never abort the sweep.
pub fn run_sweep(
    base: &ScenarioConfig,
    grid: &SweepGrid,
    out_dir: Option<&Path>,
    exec: Execution,
) -> Result<Vec<SweepRow>> {
    let points = grid.points(base)?;
    Ok(par::map(&points, exec, |point| SweepRow {
        point: *point,
        outcome: run_point(base, point, out_dir).map_err(|e| e.to_string()),
    }))
}

pub const TABLE_HEADER: &str = "gamma,k_cl,dt,capacity,status,final_error_norm,final_theta_tilde_norm,max_constraint_violation,fe_latch_time,sigma1,envelope_ok,error";

pub fn write_table<W: Write>(rows: &[SweepRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{TABLE_HEADER}")?;
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.16e}")).unwrap_or_default();
    for row in rows {
        let p = row.point;
        match &row.outcome {
            Ok(s) => writeln!(
                w,
                "{},{},{},{},ok,{:.16e},{:.16e},{:.16e},{},{},{},",
                p.gamma,
                p.k_cl,
                p.dt,
                p.capacity,
                s.final_error_norm,
                s.final_theta_tilde_norm,
                s.max_constraint_violation,
                opt(s.fe_latch_time),
                opt(s.sigma1),
                s.envelope_ok
            )?,
            Err(msg) => writeln!(
                w,
                "{},{},{},{},failed,,,,,,,\"{}\"",
                p.gamma,
                p.k_cl,
                p.dt,
                p.capacity,
                msg.replace('"', "'")
            )?,
        }
    }
    w.flush()
}

pub fn save_table(rows: &[SweepRow], path: &Path) -> Result<PathBuf> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_table(rows, std::io::BufWriter::new(file)).map_err(|e| Error::io(path, e))?;
    Ok(path.to_path_buf())
}
