//! End-to-end tests of the command-line front end: model-file loading, exit
//! codes, report formats, and byte-level determinism.

use std::fs;
use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ecotherm"))
}

fn write_model(dir: &tempfile::TempDir, name: &str, json: &str) -> PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, json).unwrap();
    path
}

const MONOMIAL: &str = r#"{"family":"monomial","n_vars":1,"domain":[["0","inf"]],
    "constants":{"c1":1,"delta":2}}"#;
const PARETO: &str = r#"{"family":"pareto","n_vars":1,"domain":[["1","inf"]],
    "constants":{"c1":2}}"#;

#[test]
fn analyze_writes_expected_grid() {
    let dir = tempfile::tempdir().unwrap();
    let model = write_model(&dir, "monomial.json", MONOMIAL);
    let out = dir.path().join("t.csv");
    let status = bin()
        .args(["analyze", "--model"])
        .arg(&model)
        .args(["--t-min", "0.5", "--t-max", "4", "--steps", "8", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let csv = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 9, "header + 8 rows:\n{csv}");
    assert_eq!(lines[0], "T,Q,f,S,mean_m,C,residual_legendre");
    // first column is the temperature grid
    let t0: f64 = lines[1].split(',').next().unwrap().parse().unwrap();
    let t7: f64 = lines[8].split(',').next().unwrap().parse().unwrap();
    assert_eq!(t0, 0.5);
    assert_eq!(t7, 4.0);
    // mean money column tracks T/delta = T/2
    for line in &lines[1..] {
        let cols: Vec<f64> = line.split(',').map(|v| v.parse().unwrap()).collect();
        assert!((cols[4] - cols[0] / 2.0).abs() < 1e-6 * cols[0].max(1.0));
    }
}

#[test]
fn analyze_past_validity_names_the_condition() {
    let dir = tempfile::tempdir().unwrap();
    let model = write_model(&dir, "pareto.json", PARETO);
    let output = bin()
        .args(["analyze", "--model"])
        .arg(&model)
        .args(["--t-min", "3"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8(output.stderr).unwrap();
    assert!(
        stderr.contains("alpha") || stderr.contains("T < c1"),
        "stderr must name the violated condition, got: {stderr}"
    );
}

#[test]
fn analyze_rejects_malformed_model_with_all_errors() {
    let dir = tempfile::tempdir().unwrap();
    let model = write_model(
        &dir,
        "bad.json",
        r#"{"family":"monomial","n_vars":1,"domain":[["0","inf"]],
            "constants":{},"measure_factor":-1}"#,
    );
    let output = bin()
        .args(["analyze", "--model"])
        .arg(&model)
        .args(["--t-min", "1"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8(output.stderr).unwrap();
    for needle in ["c1", "delta", "measure_factor"] {
        assert!(stderr.contains(needle), "missing `{needle}` in: {stderr}");
    }
}

#[test]
fn missing_domain_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let model = write_model(
        &dir,
        "nodomain.json",
        r#"{"expression":"c1*l1","n_vars":1,"constants":{"c1":1}}"#,
    );
    let output = bin()
        .args(["analyze", "--model"])
        .arg(&model)
        .args(["--t-min", "1"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8(output.stderr).unwrap();
    assert!(stderr.contains("domain"), "got: {stderr}");
}

#[test]
fn identical_runs_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let model = write_model(&dir, "monomial.json", MONOMIAL);
    let run = || {
        bin()
            .args(["analyze", "--model"])
            .arg(&model)
            .args(["--t-min", "0.5", "--t-max", "2", "--steps", "4"])
            .output()
            .unwrap()
            .stdout
    };
    assert_eq!(run(), run());
}

#[test]
fn scan_emits_grid_and_events() {
    let dir = tempfile::tempdir().unwrap();
    let model = write_model(&dir, "pareto.json", PARETO);
    let grid = dir.path().join("grid.csv");
    let events = dir.path().join("events.json");
    let status = bin()
        .args(["scan", "--model"])
        .arg(&model)
        .args(["--t-min", "0.5", "--t-max", "1.9", "--steps", "50", "--out"])
        .arg(&grid)
        .arg("--events")
        .arg(&events)
        .status()
        .unwrap();
    assert!(status.success());
    let csv = fs::read_to_string(&grid).unwrap();
    assert_eq!(csv.lines().count(), 51);
    assert!(csv.lines().next().unwrap().ends_with(",error"));
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(&events).unwrap()).unwrap();
    let kinds: Vec<&str> = doc["events"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["kind"].as_str().unwrap())
        .collect();
    assert!(kinds.contains(&"c-divergence"), "events: {kinds:?}");
}

#[test]
fn simulate_reports_and_seed_override() {
    let dir = tempfile::tempdir().unwrap();
    let hist = dir.path().join("hist.csv");
    let meta = dir.path().join("meta.json");
    let status = bin()
        .args([
            "simulate", "--agents", "2000", "--total", "2000", "--steps", "200000",
            "--seed", "7", "--bins", "40", "--hist",
        ])
        .arg(&hist)
        .arg("--meta")
        .arg(&meta)
        .status()
        .unwrap();
    assert!(status.success());
    let csv = fs::read_to_string(&hist).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "bin_lo,bin_hi,count,density");
    assert_eq!(csv.lines().count(), 41);
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(&meta).unwrap()).unwrap();
    assert_eq!(doc["seed"], 7);
    assert_eq!(doc["rng"], "chacha8");
    assert_eq!(doc["n_agents"], 2000);
    assert_eq!(doc["steps"], 200000);
    assert!(doc["t_hat"].as_f64().unwrap() > 0.9);
    assert!(doc["ks_stat"].as_f64().is_some());

    // the environment variable takes precedence over --seed
    let meta2 = dir.path().join("meta2.json");
    let status = bin()
        .args([
            "simulate", "--agents", "2000", "--total", "2000", "--steps", "1000",
            "--seed", "7", "--hist",
        ])
        .arg(dir.path().join("h2.csv"))
        .arg("--meta")
        .arg(&meta2)
        .env("ECOTHERM_SEED", "123")
        .status()
        .unwrap();
    assert!(status.success());
    let doc: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&meta2).unwrap()).unwrap();
    assert_eq!(doc["seed"], 123);
}

#[test]
fn eval_evaluates_expression() {
    let output = bin()
        .args([
            "eval", "--expr", "c1*l1^2 + ln(l2)", "--at", "3,1", "--constant", "c1=2",
        ])
        .output()
        .unwrap();
    assert!(output.status.success());
    let text = String::from_utf8(output.stdout).unwrap();
    let value: f64 = text.trim().parse().unwrap();
    assert_eq!(value, 18.0);
}

#[test]
fn eval_rejects_bad_expression() {
    let output = bin()
        .args(["eval", "--expr", "c1*(l1", "--at", "1"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
}

#[test]
fn verify_single_family_passes() {
    // restricted to one family to keep this end-to-end test fast; the full
    // suite runs in the acceptance tests
    let output = bin()
        .args(["verify", "--family", "single_linear"])
        .output()
        .unwrap();
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert_eq!(output.status.code(), Some(0), "output: {stdout}");
    assert!(stdout.contains("PASS single_linear_relations"), "{stdout}");
    assert!(!stdout.contains("FAIL"), "{stdout}");
}

#[test]
fn unknown_flag_exits_one() {
    let output = bin().args(["analyze", "--frobnicate"]).output().unwrap();
    assert_eq!(output.status.code(), Some(1));
}

#[test]
fn help_exits_zero() {
    let output = bin().arg("--help").output().unwrap();
    assert_eq!(output.status.code(), Some(0));
    let text = String::from_utf8(output.stdout).unwrap();
    for sub in ["analyze", "scan", "simulate", "verify", "eval"] {
        assert!(text.contains(sub), "help missing `{sub}`");
    }
}
