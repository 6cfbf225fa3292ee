use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn peaceable(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_peaceable")).args(args).output().expect("binary runs")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("peaceable-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn config(dir: &Path, body: &str) -> String {
    let path = dir.join("scenario.cfg");
    fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn params_prints_the_default_set() {
    let o = peaceable(&["params", "--machine-readable"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.lines().any(|l| l == "period=136"));
    assert!(text.lines().any(|l| l == "cycles=8"));
    let keys: Vec<&str> = text.lines().map(|l| l.split('=').next().unwrap()).collect();
    let again = stdout(&peaceable(&["params", "--machine-readable"]));
    assert_eq!(keys, again.lines().map(|l| l.split('=').next().unwrap()).collect::<Vec<_>>());
}

#[test]
fn params_rejects_large_drift() {
    assert_eq!(peaceable(&["params", "--rho", "0.5"]).status.code(), Some(2));
}

#[test]
fn run_writes_artifacts_that_check_accepts() {
    let dir = scratch("run");
    let out = dir.join("out");
    let o = peaceable(&["run", "--seed", "4", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    for f in ["config.txt", "trace.txt", "report.csv"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let report = fs::read_to_string(out.join("report.csv")).unwrap();
    let c = peaceable(&["check", out.join("trace.txt").to_str().unwrap(), "--machine-readable"]);
    assert_eq!(c.status.code(), Some(0));
    assert_eq!(stdout(&c), report);
    let again = scratch("run-again").join("out");
    peaceable(&["run", "--seed", "4", "--out", again.to_str().unwrap()]);
    assert_eq!(fs::read(out.join("trace.txt")).unwrap(), fs::read(again.join("trace.txt")).unwrap());
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = scratch("errors");
    for body in ["horizon = 0\n", "adversary = gremlin\n", "n = 3\n", "colour = blue\n"] {
        let cfg = config(&dir, body);
        assert_eq!(peaceable(&["run", "--config", &cfg]).status.code(), Some(2), "{body}");
    }
    assert_eq!(peaceable(&["check", dir.join("absent.txt").to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn empty_sweep_is_a_bare_header() {
    let o = peaceable(&["sweep", "--seeds", "3..3", "--machine-readable"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().count(), 1);
}

#[test]
fn failing_rows_are_flagged() {
    let dir = scratch("short");
    let cfg = config(&dir, "horizon = 400\nallow_short_horizon = true\n");
    let o = peaceable(&[
        "sweep",
        "--config",
        &cfg,
        "--seeds",
        "0..2",
        "--adversaries",
        "benign,split-world",
        "--machine-readable",
    ]);
    assert_eq!(o.status.code(), Some(1));
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 5);
    assert!(text.lines().skip(1).all(|l| l.ends_with(",false")));
    assert_eq!(peaceable(&["run", "--config", &cfg]).status.code(), Some(1));
}
