use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn retrofit(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_retrofit")).args(args).arg("--out").arg(out).output().expect("binary runs")
}

fn with_config(cmd: &str, config: &str, out: &Path) -> Output {
    let path = configs().join(config);
    retrofit(&[cmd, "--config", path.to_str().unwrap()], out)
}

/// `quantity,value` table as pairs.
fn key_values(path: &Path) -> Vec<(String, String)> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let (k, v) = l.split_once(',').unwrap();
            (k.to_string(), v.to_string())
        })
        .collect()
}

fn value(table: &[(String, String)], key: &str) -> String {
    table.iter().find(|(k, _)| k == key).map(|(_, v)| v.clone()).unwrap_or_else(|| panic!("no {key}"))
}

fn error_record(out: &Output) -> Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().rev().find(|l| l.starts_with('{')).expect("json record on stderr");
    serde_json::from_str(line).unwrap()
}

#[test]
fn unit_lag_with_static_stabilizer_is_a_retrofit() {
    let dir = tempfile::tempdir().unwrap();
    let out = with_config("check", "check_unit_lag.json", dir.path());
    assert_eq!(out.status.code(), Some(0));
    let t = key_values(&dir.path().join("check.csv"));
    assert_eq!(value(&t, "verdict"), "RETROFIT");
    assert!(value(&t, "residual_norm").parse::<f64>().unwrap() <= 1e-9);
    assert!(dir.path().join("controller.csv").exists());
}

#[test]
fn plain_youla_parameter_is_rejected_with_verdict_exit() {
    let dir = tempfile::tempdir().unwrap();
    let out = with_config("check", "check_plain_youla.json", dir.path());
    assert_eq!(out.status.code(), Some(1));
    let t = key_values(&dir.path().join("check.csv"));
    assert_eq!(value(&t, "verdict"), "NOT-RETROFIT");
    let residual: f64 = value(&t, "residual_norm").parse().unwrap();
    assert!((residual - 1.0).abs() < 1e-6);
}

#[test]
fn destabilizing_stabilizer_reports_not_stabilizing() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(configs().join("check_unit_lag.json")).unwrap().replace("-1.0]]", "2.0]]");
    let path = dir.path().join("bad.json");
    fs::write(&path, text).unwrap();
    let out = retrofit(&["check", "--config", path.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(value(&key_values(&dir.path().join("check.csv")), "verdict"), "NOT-STABILIZING");
}

#[test]
fn missing_config_exits_two_with_record() {
    let dir = tempfile::tempdir().unwrap();
    let out = retrofit(&["check", "--config", "/nonexistent/scenario.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let rec = error_record(&out);
    assert_eq!(rec["command"], "check");
    assert_eq!(rec["error"], "read");
    assert_eq!(rec["exit_code"], 2);
}

#[test]
fn malformed_config_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(&path, r#"{"plant": {"a": [[-1.0]]}}"#).unwrap();
    let out = retrofit(&["check", "--config", path.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_record(&out)["error"], "config");
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = retrofit(&["check", "--frobnicate"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn synthesis_meets_the_requested_gain_bound() {
    let dir = tempfile::tempdir().unwrap();
    let out = with_config("synthesize", "synthesize_unit_lag.json", dir.path());
    assert_eq!(out.status.code(), Some(0));
    let t = key_values(&dir.path().join("synthesize.csv"));
    let beta: f64 = value(&t, "beta_achieved").parse().unwrap();
    let alpha: f64 = value(&t, "alpha").parse().unwrap();
    assert!(beta <= 0.4);
    // For the unit lag both hat maps are the same scalar loop.
    assert!((alpha - beta).abs() <= 1e-6 * beta);
}

#[test]
fn two_lag_network_respects_its_bound() {
    let dir = tempfile::tempdir().unwrap();
    let out = with_config("bound", "bound_two_lags.json", dir.path());
    assert_eq!(out.status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("bound.csv")).unwrap();
    let get = |q: &str| -> f64 {
        csv.lines().find(|l| l.starts_with(&format!("{q},"))).unwrap().rsplit(',').next().unwrap().parse().unwrap()
    };
    assert!(get("measured") <= get("bound") * (1.0 + 1e-9));
}

#[test]
fn outputs_are_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [&a, &b] {
        assert_eq!(with_config("synthesize", "synthesize_unit_lag.json", dir.path()).status.code(), Some(0));
    }
    for name in ["synthesize.csv", "k_hat.csv", "controller.csv"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
}

#[test]
fn nyquist_writes_three_loci() {
    let dir = tempfile::tempdir().unwrap();
    let out = retrofit(&["nyquist"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("nyquist.csv")).unwrap();
    for case in ["load-10%", "nominal", "load+10%"] {
        assert_eq!(csv.lines().filter(|l| l.starts_with(&format!("{case},"))).count(), 400);
    }
    let script = fs::read_to_string(dir.path().join("nyquist.gp")).unwrap();
    assert!(script.contains("'nyquist.csv'"));
}

#[test]
fn short_grid_experiment_covers_every_fault_and_module_count() {
    let dir = tempfile::tempdir().unwrap();
    let out = retrofit(
        &["grid", "--config", configs().join("grid_desk4.json").to_str().unwrap(), "--horizon", "2"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("penetration.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4 * 5);
    assert!(dir.path().join("omega_bus1_modules4.csv").exists());
}
