use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ns2d(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ns2d"))
        .args(args)
        .env("NS2D_OUTPUT_ROOT", root)
        .output()
        .expect("binary runs")
}

fn summary(dir: &Path) -> String {
    fs::read_to_string(dir.join("summary.txt")).unwrap()
}

#[test]
fn check_forcing_four_mode_passes() {
    let root = tempfile::tempdir().unwrap();
    let out = ns2d(root.path(), &["check-forcing", "--out", "cf"]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("overall                      : pass"));
    assert!(summary(&root.path().join("cf")).contains("status = pass"));
}

#[test]
fn check_forcing_flags_the_failing_condition() {
    let root = tempfile::tempdir().unwrap();
    let out = ns2d(
        root.path(),
        &["check-forcing", "--set", "forcing.preset=\"custom\"", "--set", "forcing.modes=[[2,0,1],[-2,0,1],[0,1,1],[0,-1,1],[2,1,1],[-2,-1,1]]"],
    );
    assert_eq!(out.status.code(), Some(1));
    let s = summary(&root.path().join("ns2d-out"));
    assert!(s.contains("cond_a = true") && s.contains("cond_b = true") && s.contains("cond_c = false"), "{s}");
}

#[test]
fn check_forcing_reports_missing_reflection() {
    let root = tempfile::tempdir().unwrap();
    let out = ns2d(root.path(), &["check-forcing", "--set", "forcing.preset=\"custom\"", "--set", "forcing.modes=[[1,0,1],[1,1,1]]"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(summary(&root.path().join("ns2d-out")).contains("cond_a = false"));
}

#[test]
fn simulate_with_zero_end_time_writes_one_record() {
    let root = tempfile::tempdir().unwrap();
    let out = ns2d(root.path(), &["simulate", "--set", "t_end=0", "--set", "grid.n=16", "--out", "s"]);
    assert_eq!(out.status.code(), Some(0));
    let dir = root.path().join("s");
    let csv = fs::read_to_string(dir.join("observations.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(dir.join("final.vort").exists());
    let cfg = fs::read_to_string(dir.join("effective_config.toml")).unwrap();
    assert!(cfg.starts_with("# ns2d "));
    assert!(summary(&dir).starts_with("version = ns2d "));
}

#[test]
fn balance_on_short_run_is_a_usage_error() {
    let root = tempfile::tempdir().unwrap();
    let out = ns2d(root.path(), &["balance", "--set", "t_end=1", "--set", "grid.n=16"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("burn-in"));
    assert!(summary(&root.path().join("ns2d-out")).contains("status = error"));
}

#[test]
fn unknown_key_is_a_usage_error() {
    let root = tempfile::tempdir().unwrap();
    let cfg = root.path().join("run.toml");
    fs::write(&cfg, "grid.n = 16\nviscocity = 0.1\n").unwrap();
    let out = ns2d(root.path(), &["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`viscocity`"));
}

#[test]
fn override_is_echoed_in_effective_config() {
    let root = tempfile::tempdir().unwrap();
    let out = ns2d(root.path(), &["simulate", "--set", "t_end=0.01", "--set", "grid.n=16", "--set", "dt=0.005", "--set", "output_every=1"]);
    assert_eq!(out.status.code(), Some(0));
    let cfg = fs::read_to_string(root.path().join("ns2d-out/effective_config.toml")).unwrap();
    assert!(cfg.contains("\ndt = 0.005"));
    let csv = fs::read_to_string(root.path().join("ns2d-out/observations.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn effective_config_reruns_identically() {
    let root = tempfile::tempdir().unwrap();
    let out = ns2d(root.path(), &["couple", "--set", "grid.n=16", "--set", "t_end=0.5", "--out", "a"]);
    assert_eq!(out.status.code(), Some(0));
    let eff = root.path().join("a/effective_config.toml");
    let out = ns2d(root.path(), &["couple", "--config", eff.to_str().unwrap(), "--out", "b"]);
    assert_eq!(out.status.code(), Some(0));
    let read = |d: &str| fs::read(root.path().join(d).join("coupling.csv")).unwrap();
    assert_eq!(read("a"), read("b"));
}

#[test]
fn snapshot_restart_is_accepted() {
    let root = tempfile::tempdir().unwrap();
    let out = ns2d(root.path(), &["simulate", "--set", "grid.n=16", "--set", "t_end=0.2", "--out", "first"]);
    assert_eq!(out.status.code(), Some(0));
    let snap = root.path().join("first/final.vort");
    let init = format!("initial={:?}", snap.to_str().unwrap());
    let out = ns2d(root.path(), &["simulate", "--set", "grid.n=16", "--set", "t_end=0.1", "--set", &init, "--out", "second"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let out = ns2d(root.path(), &["simulate", "--set", "grid.n=32", "--set", "t_end=0.1", "--set", &init]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn non_admissible_forcing_only_warns() {
    let root = tempfile::tempdir().unwrap();
    let out = ns2d(
        root.path(),
        &["simulate", "--set", "grid.n=16", "--set", "t_end=0.05", "--set", "forcing.preset=\"custom\"", "--set", "forcing.modes=[[1,0,1],[-1,0,1]]"],
    );
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
    assert!(summary(&root.path().join("ns2d-out")).contains("hormander = fail"));
}

#[test]
fn ensemble_simulation_checks_moments() {
    let root = tempfile::tempdir().unwrap();
    let out = ns2d(
        root.path(),
        &["simulate", "--set", "grid.n=16", "--set", "t_end=1", "--set", "nu=0.1", "--set", "ensemble.members=8"],
    );
    assert_eq!(out.status.code(), Some(0));
    let dir = root.path().join("ns2d-out");
    assert!(summary(&dir).contains("second_moment_bound = pass"));
    let csv = fs::read_to_string(dir.join("moments.csv")).unwrap();
    assert!(csv.starts_with("t,mean_l2_sq,stderr,bound,pass"));
}

#[test]
fn spectrum_and_contraction_write_their_tables() {
    let root = tempfile::tempdir().unwrap();
    let out = ns2d(
        root.path(),
        &[
            "spectrum", "--set", "grid.n=32", "--set", "t_end=1", "--set", "spectrum.burn_in=0.5", "--set",
            "spectrum.fit=[2.0, 9.0]", "--set", "spectrum.check=false", "--out", "sp",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(root.path().join("sp/spectrum.csv")).unwrap();
    assert!(csv.starts_with("kappa,e_kappa\n"));
    let out = ns2d(
        root.path(),
        &[
            "contraction", "--set", "grid.n=16", "--set", "nu=0.5", "--set", "dt=0.005", "--set", "contraction.cutoffs=[2.0, 4.0]",
            "--set", "contraction.samples=2", "--set", "contraction.horizon=0.05", "--out", "ct",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let csv = fs::read_to_string(root.path().join("ct/contraction.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.starts_with("cutoff,T,p,mean,ci_lo,ci_hi,samples\n"));
}

#[test]
fn survey_and_control_run_small() {
    let root = tempfile::tempdir().unwrap();
    let out = ns2d(
        root.path(),
        &[
            "malliavin-survey", "--set", "grid.n=16", "--set", "dt=0.05", "--set", "malliavin.samples=3", "--out", "mv",
        ],
    );
    assert!(out.status.code().is_some_and(|c| c <= 1), "{}", String::from_utf8_lossy(&out.stderr));
    let s = summary(&root.path().join("mv"));
    assert!(s.contains("stokes_degenerate = pass"), "{s}");
    let out = ns2d(
        root.path(),
        &[
            "control", "--set", "grid.n=16", "--set", "dt=0.05", "--set", "nu=0.5", "--set", "control.seeds=2",
            "--set", "control.lambdas=[1.0]", "--set", "control.intervals=4", "--out", "ctl",
        ],
    );
    assert!(out.status.code().is_some_and(|c| c <= 1));
    let s = summary(&root.path().join("ctl"));
    assert!(s.contains("identity = pass"), "{s}");
    assert!(root.path().join("ctl/control/lambda_0_seed_1.csv").exists());
}
