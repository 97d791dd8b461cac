//! End-to-end runs of the `snse` binary.

use std::path::Path;
use std::process::{Command, Output};

fn snse(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_snse")).args(args).current_dir(dir).env("RUST_LOG", "warn").output().unwrap()
}

fn write_config(dir: &Path, json: &str) -> String {
    let p = dir.join("config.json");
    std::fs::write(&p, json).unwrap();
    p.to_string_lossy().into_owned()
}

const SMALL: &str = r#"{"model": {"l_max": 7, "dt": 0.01, "alpha_search": {"n_paths": 2000}},
  "experiment": {"cocycle": {"pairs": 2},
                 "verify": {"t_start": -4.0, "members": 3}}}"#;

#[test]
fn invalid_beta_is_a_config_error_naming_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), r#"{"model": {"beta": 2.5}}"#);
    let out = snse(&["simulate", "--config", &cfg, "--out", "o"], tmp.path());
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("beta"));
}

#[test]
fn unknown_field_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), r#"{"model": {"viscosty": 1.0}}"#);
    let out = snse(&["cocycle", "--config", &cfg], tmp.path());
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn missing_config_file_and_zero_threads_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(snse(&["verify", "--config", "absent.json"], tmp.path()).status.code(), Some(3));
    assert_eq!(snse(&["verify", "--threads", "0"], tmp.path()).status.code(), Some(3));
    assert_eq!(snse(&["no-such-command"], tmp.path()).status.code(), Some(2));
}

#[test]
fn print_config_round_trips_through_a_run() {
    let tmp = tempfile::tempdir().unwrap();
    let out = snse(&["print-config"], tmp.path());
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["model"]["l_max"], 31);
}

#[test]
fn cocycle_run_writes_report_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out = snse(&["cocycle", "--config", &cfg, "--out", "run", "--seed", "9"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("run/report.json")).unwrap()).unwrap();
    assert!(report["max_residual"].as_f64().unwrap() <= 1e-10);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("run/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["exit_code"], 0);
    assert_eq!(manifest["seeds"]["base"], 9);
    assert!(tmp.path().join("run/cocycle.csv").exists());
}

#[test]
fn noise_free_verify_succeeds() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = SMALL.replacen(r#""dt": 0.01,"#, r#""dt": 0.01, "sigma": [0.0, 0.0],"#, 1);
    let cfg = write_config(tmp.path(), &cfg);
    let out = snse(&["verify", "--config", &cfg, "--out", "v"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(tmp.path().join("v/verify_members.csv").exists());
}
