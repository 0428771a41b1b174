use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use eqadapt::metrics::{envelope_horizon, max_oracle_deviation, summary, LyapunovReport};
use eqadapt::scenario::{load_scenario, preset, PRESETS};
use eqadapt::sweep::{run_sweep, save_table, SweepGrid};
use eqadapt::{lyapunov_series, oracle_full_dimension, report, run, Error, Execution};

#[derive(Parser)]
#[command(
    name = "eqadapt",
    version,
    about = "Equality-constrained adaptive control scenarios"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Source {
    /// Scenario file (TOML).
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Built-in scenario name.
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its trajectory CSV and summary.
    Run {
        #[command(flatten)]
        source: Source,
        /// Output directory.
        #[arg(long, env = "EQADAPT_OUT_DIR", default_value = "out")]
        out: PathBuf,
        /// Also integrate the full-dimension oracle and report the deviation.
        #[arg(long)]
        oracle: bool,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        horizon: Option<f64>,
        /// Lengthen the horizon of a latched concurrent-learning run to five decay periods.
        #[arg(long)]
        auto_extend: bool,
    },
    /// Run a grid of scenarios built from a base scenario.
    Sweep {
        #[command(flatten)]
        source: Source,
        #[arg(long, env = "EQADAPT_OUT_DIR", default_value = "out")]
        out: PathBuf,
        #[arg(long, value_delimiter = ',')]
        gamma: Vec<f64>,
        #[arg(long = "k-cl", value_delimiter = ',')]
        k_cl: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        dt: Vec<f64>,
        /// History stack capacities.
        #[arg(long, value_delimiter = ',')]
        capacity: Vec<usize>,
        #[arg(long)]
        horizon: Option<f64>,
        /// Run grid points one after another.
        #[arg(long)]
        sequential: bool,
    },
    /// Load and validate a scenario without running it.
    Validate {
        #[command(flatten)]
        source: Source,
    },
    /// List the built-in scenarios, or print one as TOML.
    Presets {
        #[arg(long)]
        show: Option<String>,
    },
}

fn source_name(source: &Source) -> String {
    match (&source.preset, &source.scenario) {
        (Some(p), _) => p.clone(),
        (None, Some(path)) => path.display().to_string(),
        (None, None) => unreachable!("clap enforces one source"),
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Diverged { .. } => 3,
        Error::Io { .. } => 4,
        _ => 2,
    }
}

fn cmd_run(
    source: &Source,
    out: &Path,
    oracle: bool,
    dt: Option<f64>,
    horizon: Option<f64>,
    auto_extend: bool,
) -> eqadapt::Result<()> {
    let (cfg, mut scenario) = load_scenario(&source_name(source))?;
    if let Some(dt) = dt {
        scenario.solver.dt = dt;
    }
    if let Some(h) = horizon {
        scenario.solver.horizon = h;
    }
    scenario.validate()?;

    let mut log = run(&scenario)?;
    if auto_extend {
        if let Some(h) = envelope_horizon(&log, 5.0) {
            eprintln!("[run] extending horizon to {h} s");
            scenario.solver.horizon = h;
            log = run(&scenario)?;
        }
    }
    let report = match lyapunov_series(&log) {
        Ok(r) => r,
        Err(Error::MissingFe) => {
            eprintln!("[run] warning: finite excitation never reached; envelope not checked");
            LyapunovReport::monotone_only(&log)
        }
        Err(e) => return Err(e),
    };
    let mut s = summary(&cfg.name, &log, &report);

    let dir = out.join(&cfg.name);
    let traj_path = dir.join(&cfg.output.trajectory_file);
    report::save_trajectory(&log, &traj_path)?;
    if oracle {
        let full = oracle_full_dimension(&scenario)?;
        s.oracle_max_deviation = Some(max_oracle_deviation(&log, &full)?);
        report::save_oracle(&full, &dir.join(&cfg.output.oracle_file))?;
    }
    let summary_path = dir.join(&cfg.output.summary_file);
    report::save_summary(&s, &summary_path)?;

    println!(
        "[run] {}: {} rows -> {}",
        cfg.name,
        log.len(),
        traj_path.display()
    );
    print!("{}", report::summary_to_toml(&s)?);
    Ok(())
}

fn cmd_sweep(
    source: &Source,
    out: &Path,
    grid: SweepGrid,
    horizon: Option<f64>,
    sequential: bool,
) -> eqadapt::Result<()> {
    let (mut cfg, _) = load_scenario(&source_name(source))?;
    if let Some(h) = horizon {
        cfg.solver.horizon = h;
    }
    let exec = if sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    let dir = out.join(format!("{}_sweep", cfg.name));
    let rows = run_sweep(&cfg, &grid, Some(&dir), exec)?;
    let table = save_table(&rows, &dir.join("sweep_summary.csv"))?;
    let failed = rows.iter().filter(|r| r.outcome.is_err()).count();
    println!(
        "[sweep] {} runs ({} failed) -> {}",
        rows.len(),
        failed,
        table.display()
    );
    for row in rows.iter().filter(|r| r.outcome.is_err()) {
        eprintln!(
            "[sweep] {}: {}",
            row.point.label(),
            row.outcome.as_ref().unwrap_err()
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            source,
            out,
            oracle,
            dt,
            horizon,
            auto_extend,
        } => cmd_run(&source, &out, oracle, dt, horizon, auto_extend),
        Command::Sweep {
            source,
            out,
            gamma,
            k_cl,
            dt,
            capacity,
            horizon,
            sequential,
        } => cmd_sweep(
            &source,
            &out,
            SweepGrid {
                gamma,
                k_cl,
                dt,
                capacity,
            },
            horizon,
            sequential,
        ),
        Command::Validate { source } => load_scenario(&source_name(&source)).map(|(cfg, sc)| {
            println!(
                "{}: ok ({} law, n = {}, p = {}, m = {})",
                cfg.name,
                sc.law_kind.as_str(),
                sc.states(),
                sc.params(),
                sc.constraint.rows()
            );
        }),
        Command::Presets { show: None } => {
            for name in PRESETS {
                println!("{name}");
            }
            Ok(())
        }
        Command::Presets { show: Some(name) } => preset(&name)
            .and_then(|cfg| cfg.to_toml())
            .map(|text| print!("{text}")),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
