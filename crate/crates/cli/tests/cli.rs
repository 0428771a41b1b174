use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn eqadapt(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eqadapt"))
        .args(args)
        .env("EQADAPT_OUT_DIR", out)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn presets_lists_and_shows() {
    let dir = tempfile::tempdir().unwrap();
    let o = eqadapt(&["presets"], dir.path());
    assert_eq!(code(&o), 0);
    assert_eq!(
        stdout(&o).lines().collect::<Vec<_>>(),
        ["paper_sim1", "paper_sim2"]
    );

    let o = eqadapt(&["presets", "--show", "paper_sim2"], dir.path());
    assert_eq!(code(&o), 0);
    let table: toml::Table = stdout(&o).parse().unwrap();
    assert_eq!(table["gains"]["k_cl"].as_float(), Some(0.0008));

    assert_eq!(
        code(&eqadapt(&["presets", "--show", "nope"], dir.path())),
        2
    );
}

#[test]
fn run_writes_csv_summary_and_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let o = eqadapt(
        &[
            "run",
            "--preset",
            "paper_sim2",
            "--horizon",
            "1",
            "--dt",
            "0.002",
            "--oracle",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let run_dir = dir.path().join("paper_sim2");
    let csv = fs::read_to_string(run_dir.join("trajectory.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert!(header.starts_with("t,x1,x2,xd1,xd2,e1,e2,u1,u2,theta_hat1"));
    assert!(header.ends_with("constraint_violation,V,lambda_min_YR,fe_flag"));
    assert_eq!(csv.lines().count(), 1 + 501);

    let oracle = fs::read_to_string(run_dir.join("oracle.csv")).unwrap();
    assert_eq!(oracle.lines().count(), 1 + 501);

    let summary: toml::Table = fs::read_to_string(run_dir.join("summary.toml"))
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(summary["dt"].as_float(), Some(0.002));
    assert!(summary["oracle_max_deviation"].as_float().unwrap() <= 1e-6);
}

#[test]
fn out_flag_overrides_environment() {
    let env_dir = tempfile::tempdir().unwrap();
    let flag_dir = tempfile::tempdir().unwrap();
    let o = eqadapt(
        &[
            "run",
            "--preset",
            "paper_sim1",
            "--horizon",
            "0.1",
            "--out",
            flag_dir.path().to_str().unwrap(),
        ],
        env_dir.path(),
    );
    assert_eq!(code(&o), 0);
    assert!(flag_dir.path().join("paper_sim1/summary.toml").exists());
    assert!(!env_dir.path().join("paper_sim1").exists());
}

#[test]
fn scenario_file_and_validation() {
    let dir = tempfile::tempdir().unwrap();
    let show = eqadapt(&["presets", "--show", "paper_sim1"], dir.path());
    let path = dir.path().join("s.toml");
    fs::write(&path, stdout(&show)).unwrap();
    let o = eqadapt(
        &["validate", "--scenario", path.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("ok"));

    // θ̂₀ off the constraint set.
    let mut table: toml::Table = stdout(&show).parse().unwrap();
    table["initial"]["theta_hat0"] =
        toml::Value::Array(vec![4.5.into(), 4.0.into(), 4.5.into(), 15.0.into()]);
    fs::write(&path, table.to_string()).unwrap();
    assert_eq!(
        code(&eqadapt(
            &["validate", "--scenario", path.to_str().unwrap()],
            dir.path()
        )),
        2
    );

    fs::write(&path, "name = ").unwrap();
    assert_eq!(
        code(&eqadapt(
            &["run", "--scenario", path.to_str().unwrap()],
            dir.path()
        )),
        2
    );
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.toml");
    assert_eq!(
        code(&eqadapt(
            &["run", "--scenario", missing.to_str().unwrap()],
            dir.path()
        )),
        4
    );
    assert_eq!(
        code(&eqadapt(
            &["run", "--preset", "paper_sim1", "--dt", "0.1"],
            dir.path()
        )),
        3
    );
    assert_eq!(
        code(&eqadapt(
            &["run", "--preset", "paper_sim1", "--dt", "-1"],
            dir.path()
        )),
        2
    );
    // Exactly one scenario source is required.
    assert_eq!(code(&eqadapt(&["run"], dir.path())), 2);

    let blocker = dir.path().join("blocker");
    fs::write(&blocker, "").unwrap();
    let o = eqadapt(
        &[
            "run",
            "--preset",
            "paper_sim1",
            "--horizon",
            "0.01",
            "--out",
            blocker.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 4);
}

#[test]
fn sweep_records_failures_and_rejects_empty_grid() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        code(&eqadapt(&["sweep", "--preset", "paper_sim1"], dir.path())),
        2
    );

    let o = eqadapt(
        &[
            "sweep",
            "--preset",
            "paper_sim2",
            "--horizon",
            "0.5",
            "--gamma",
            "0.05,-1",
            "--capacity",
            "10,20",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(dir.path().join("paper_sim2_sweep/sweep_summary.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 1 + 4);
    assert_eq!(lines[1..].iter().filter(|l| l.contains(",ok,")).count(), 2);
    assert_eq!(
        lines[1..].iter().filter(|l| l.contains(",failed,")).count(),
        2
    );
    assert!(dir
        .path()
        .join("paper_sim2_sweep/gamma=0.05_kcl=0.0008_dt=0.001_h=10/trajectory.csv")
        .exists());
}
