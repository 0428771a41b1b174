//! CSV and summary writers.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::{OracleTrajectory, RunSummary};
use crate::sim::TrajectoryLog;

/// 17 significant digits, enough to round-trip any `f64`.
fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn trajectory_header(n: usize, p: usize) -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    for prefix in ["x", "xd", "e", "u"] {
        cols.extend((1..=n).map(|i| format!("{prefix}{i}")));
    }
    for prefix in ["theta_hat", "theta_tilde"] {
        cols.extend((1..=p).map(|i| format!("{prefix}{i}")));
    }
    cols.extend(["constraint_violation", "V", "lambda_min_YR", "fe_flag"].map(String::from));
    cols
}

pub fn write_trajectory_csv<W: Write>(log: &TrajectoryLog, mut w: W) -> std::io::Result<()> {
    writeln!(w, "{}", trajectory_header(log.n, log.p).join(","))?;
    let mut row: Vec<String> = Vec::new();
    for i in 0..log.len() {
        row.clear();
        row.push(num(log.t[i]));
        for block in [
            log.x(i),
            log.xd(i),
            log.e(i),
            log.u(i),
            log.theta_hat(i),
            log.theta_tilde(i),
        ] {
            row.extend(block.iter().map(|&v| num(v)));
        }
        row.push(num(log.violation[i]));
        row.push(num(log.v[i]));
        row.push(num(log.lambda_min[i]));
        row.push(if log.fe_flag[i] { "1" } else { "0" }.to_string());
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()
}

pub fn write_oracle_csv<W: Write>(oracle: &OracleTrajectory, mut w: W) -> std::io::Result<()> {
    let mut header = vec!["t".to_string()];
    header.extend((1..=oracle.p).map(|i| format!("theta_hat_full{i}")));
    writeln!(w, "{}", header.join(","))?;
    for (i, t) in oracle.t.iter().enumerate() {
        let mut row = vec![num(*t)];
        row.extend(oracle.theta_hat(i).iter().map(|&v| num(v)));
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()
}

pub fn summary_to_toml(summary: &RunSummary) -> Result<String> {
    toml::to_string(summary).map_err(|e| Error::Parse(e.to_string()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

pub fn save_trajectory(log: &TrajectoryLog, path: &Path) -> Result<()> {
    write_trajectory_csv(log, create(path)?).map_err(|e| Error::io(path, e))
}

pub fn save_oracle(oracle: &OracleTrajectory, path: &Path) -> Result<()> {
    write_oracle_csv(oracle, create(path)?).map_err(|e| Error::io(path, e))
}

pub fn save_summary(summary: &RunSummary, path: &Path) -> Result<()> {
    let text = summary_to_toml(summary)?;
    create(path)?
        .write_all(text.as_bytes())
        .map_err(|e| Error::io(path, e))
}
