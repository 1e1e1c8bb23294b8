use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_regime-harvest"))
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(format!("{name}.cfg"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Data lines of a CSV, without the `#` header.
fn body(p: &Path) -> Vec<String> {
    fs::read_to_string(p).unwrap().lines().filter(|l| !l.starts_with('#')).map(str::to_owned).collect()
}

#[test]
fn missing_delta_fails_validation_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let src = fs::read_to_string(config("fig1")).unwrap().replace("delta = 0.02\n", "");
    let cfg = dir.path().join("nodelta.cfg");
    fs::write(&cfg, src).unwrap();
    let out = dir.path().join("out");
    let res = run(&["solve", "--config", path(&cfg), "--out", path(&out)]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("delta"));
    assert!(!out.exists());
}

#[test]
fn unknown_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let src = fs::read_to_string(config("fig1")).unwrap().replace("[kernel]\n", "[kernel]\nmesh = 0.1\n");
    let cfg = dir.path().join("typo.cfg");
    fs::write(&cfg, src).unwrap();
    let res = run(&["check", "--config", path(&cfg), "--out", path(dir.path())]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("mesh"));
}

#[test]
fn solve_reports_a_bang_bang_policy() {
    let dir = tempfile::tempdir().unwrap();
    let res = run(&["solve", "--config", path(&config("fig1")), "--out", path(dir.path())]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let report = fs::read_to_string(dir.path().join("fig1_report.csv")).unwrap();
    assert!(report.starts_with("# name=fig1 formulation=baseline config_hash="));
    assert!(report.contains("shape_regime_1,bang_bang"));
    assert!(report.contains("shape_regime_2,bang_bang"));
    assert!(dir.path().join("fig1.csv").exists());
}

#[test]
fn identical_configs_give_identical_files() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [&a, &b] {
        let res = run(&["solve", "--config", path(&config("fig2")), "--out", path(dir.path()), "--threads", "2"]);
        assert!(res.status.success());
    }
    for file in ["fig2.csv", "fig2_report.csv"] {
        assert_eq!(fs::read(a.path().join(file)).unwrap(), fs::read(b.path().join(file)).unwrap(), "{file}");
    }
}

#[test]
fn grid_override_changes_the_hash() {
    let dir = tempfile::tempdir().unwrap();
    let res = run(&["solve", "--config", path(&config("fig1")), "--out", path(dir.path()), "--grid-h", "0.1"]);
    assert!(res.status.success());
    let coarse = fs::read_to_string(dir.path().join("fig1.csv")).unwrap();
    assert_eq!(body(&dir.path().join("fig1.csv")).len(), 1 + 41 * 2);
    let default = tempfile::tempdir().unwrap();
    run(&["solve", "--config", path(&config("fig1")), "--out", path(default.path())]);
    let fine = fs::read_to_string(default.path().join("fig1.csv")).unwrap();
    assert_ne!(coarse.lines().next(), fine.lines().next());
}

#[test]
fn one_value_sweep_matches_solve() {
    let dir = tempfile::tempdir().unwrap();
    let res = run(&[
        "sweep",
        "--config",
        path(&config("fig1")),
        "--out",
        path(dir.path()),
        "--param",
        "dynamics.switching_rate",
        "--values",
        "0.1",
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let solo = tempfile::tempdir().unwrap();
    run(&["solve", "--config", path(&config("fig1")), "--out", path(solo.path())]);
    assert_eq!(body(&dir.path().join("fig1_switching_rate_0.1.csv")), body(&solo.path().join("fig1.csv")));
    assert_eq!(body(&dir.path().join("fig1_sweep.csv")).len(), 2);
}

#[test]
fn unstable_time_step_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let src = fs::read_to_string(config("fig4")).unwrap().replace("h1 = 0.00025", "h1 = 0.0025");
    let cfg = dir.path().join("cfl.cfg");
    fs::write(&cfg, src).unwrap();
    let out = dir.path().join("out");
    let res = run(&["solve", "--config", path(&cfg), "--out", path(&out)]);
    assert_eq!(res.status.code(), Some(2));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("unstable") && err.contains("x="), "{err}");
    assert!(!out.exists());
}

#[test]
fn check_and_dump_kernel_write_their_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("fig5_linear");
    let res = run(&["check", "--config", path(&cfg), "--out", path(dir.path()), "--grid-h", "0.25"]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let check = fs::read_to_string(dir.path().join("fig5_linear_check.csv")).unwrap();
    assert!(check.contains("passed,true"), "{check}");

    let res = run(&["dump-kernel", "--config", path(&cfg), "--out", path(dir.path()), "--grid-h", "0.5"]);
    assert!(res.status.success());
    let dump = body(&dir.path().join("fig5_linear_kernel.csv"));
    assert_eq!(dump[0], "formulation,axis1,x,regime,u,dt,transitions");
    assert!(dump.len() > 1);
}

#[test]
fn simulate_uses_a_saved_policy() {
    let dir = tempfile::tempdir().unwrap();
    let src = fs::read_to_string(config("fig1")).unwrap().replace("paths = 10000", "paths = 8").replace("horizon = 600.0", "horizon = 5.0");
    let cfg = dir.path().join("short.cfg");
    fs::write(&cfg, src).unwrap();
    let res = run(&["solve", "--config", path(&cfg), "--out", path(dir.path())]);
    assert!(res.status.success());
    let res = run(&[
        "simulate",
        "--config",
        path(&cfg),
        "--out",
        path(dir.path()),
        "--policy",
        path(&dir.path().join("fig1.csv")),
        "--seed",
        "3",
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let rows = body(&dir.path().join("fig1_mc.csv"));
    assert_eq!(rows.len(), 1 + 3 * 3);
}
