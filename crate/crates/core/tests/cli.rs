mod common;

use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

use synthdesign::cli::Manifest;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_synthdesign"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn workspace(n: usize, s: usize, t_pre: usize) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let p = common::random_panel(42, n, s, t_pre);
    std::fs::write(dir.path().join("panel.csv"), p.to_csv()).unwrap();
    dir
}

fn manifest(dir: &Path, name: &str) -> Manifest {
    serde_json::from_str(&std::fs::read_to_string(dir.join(name)).unwrap()).unwrap()
}

#[test]
fn design_estimate_infer_pipeline() {
    let dir = workspace(8, 40, 35);
    let d = dir.path();
    let stdout = ok(d, &["design", "--input", "panel.csv", "--t-pre", "35", "--variant", "per-unit", "--k", "3", "--export-mps", "model.mps"]);
    assert!(stdout.contains("treated:"));
    assert!(d.join("design.json").exists() && d.join("model.mps").exists());
    let m = manifest(d, "design.json.manifest.json");
    assert_eq!(m.command, "design");
    assert_eq!(m.outputs.len(), 2);
    assert_eq!(m.inputs[0].path, "panel.csv");

    let stdout = ok(d, &["estimate", "--input", "panel.csv", "--t-pre", "35", "--design", "design.json"]);
    let est: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("estimate.json")).unwrap()).unwrap();
    assert!(stdout.contains(&est["atet"].as_f64().unwrap().to_string()));

    ok(d, &["infer", "--input", "panel.csv", "--t-pre", "35", "--design", "design.json", "--scheme", "moving-block", "--draws", "40"]);
    let test: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("test.json")).unwrap()).unwrap();
    assert_eq!(test["reference"].as_array().unwrap().len(), 40);
    assert_eq!(test["n_draws"], 40);

    // A different estimator on the same design refits weights.
    ok(d, &["estimate", "--input", "panel.csv", "--t-pre", "35", "--design", "design.json", "--method", "one-way", "--out", "one.json"]);
}

#[test]
fn exit_codes() {
    let dir = workspace(6, 8, 6);
    let d = dir.path();
    let out = run(d, &["design", "--input", "panel.csv", "--t-pre", "6", "--k", "6"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("K = 6"));

    let out = run(d, &["design", "--input", "missing.csv", "--t-pre", "6", "--k", "2"]);
    assert_eq!(out.status.code(), Some(3));

    std::fs::write(d.join("bad.csv"), "unit,a,b\nx,1,NA\ny,2,3\n").unwrap();
    let out = run(d, &["design", "--input", "bad.csv", "--t-pre", "1", "--k", "1"]);
    assert_eq!(out.status.code(), Some(3));

    assert_eq!(run(d, &["design", "--k"]).status.code(), Some(2));
    assert_eq!(run(d, &["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(d, &["--help"]).status.code(), Some(0));
    assert_eq!(run(d, &["design", "--input", "panel.csv", "--t-pre", "6", "--k", "2", "--lambda-rule", "fixed"]).status.code(), Some(2));
}

#[test]
fn exact_mode_refuses_large_enumerations() {
    let dir = workspace(20, 6, 5);
    let out = run(dir.path(), &["design", "--input", "panel.csv", "--t-pre", "5", "--k", "10", "--mode", "exact", "--enum-limit", "1000"]);
    assert_eq!(out.status.code(), Some(2));
    // C(20, 10)
    assert!(String::from_utf8_lossy(&out.stderr).contains("184756"));
}

#[test]
fn config_file_is_expanded_and_echoed() {
    let dir = workspace(7, 10, 8);
    let d = dir.path();
    std::fs::write(d.join("run.toml"), "variant = \"one-way\"\nk = 4\nt_pre = 8\nlambda = 0.01\n").unwrap();
    ok(d, &["design", "--config", "run.toml", "--input", "panel.csv", "--k", "2"]);
    let design: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("design.json")).unwrap()).unwrap();
    assert_eq!(design["treated"].as_array().unwrap().len(), 2);
    assert_eq!(design["variant"], "one-way");
    assert_eq!(design["lambda"], 0.01);
    let m = manifest(d, "design.json.manifest.json");
    assert!(m.config.unwrap().contains("one-way"));
    assert!(!m.args.iter().any(|a| a == "--config"));
}

#[test]
fn replay_reproduces_outputs_bitwise() {
    let dir = workspace(8, 16, 12);
    let d = dir.path();
    ok(d, &["design", "--input", "panel.csv", "--t-pre", "12", "--k", "3", "--mode", "local", "--seed", "7", "--export-mps", "m.mps"]);
    ok(d, &["infer", "--input", "panel.csv", "--t-pre", "12", "--design", "design.json", "--scheme", "iid", "--draws", "15", "--seed", "3"]);
    ok(d, &["simulate", "--sims", "4", "--out", "report.csv", "--json", "report.json"]);
    for name in ["design.json.manifest.json", "test.json.manifest.json", "report.csv.manifest.json"] {
        let m = manifest(d, name);
        let before: Vec<Vec<u8>> = m.outputs.iter().map(|o| std::fs::read(d.join(&o.path)).unwrap()).collect();
        for o in &m.outputs {
            std::fs::remove_file(d.join(&o.path)).unwrap();
        }
        ok(d, &["replay", "--manifest", name]);
        for (o, b) in m.outputs.iter().zip(before) {
            assert_eq!(std::fs::read(d.join(&o.path)).unwrap(), b, "{}", o.path);
        }
        assert_eq!(manifest(d, name), m);
    }

    // A changed input is refused.
    let mut text = std::fs::read_to_string(d.join("panel.csv")).unwrap();
    text = text.replacen(",", ",1", 2);
    std::fs::write(d.join("panel.csv"), text).unwrap();
    assert_eq!(run(d, &["replay", "--manifest", "design.json.manifest.json"]).status.code(), Some(3));
}

#[test]
fn thread_count_does_not_change_outputs() {
    let dir = workspace(9, 12, 9);
    let d = dir.path();
    ok(d, &["design", "--input", "panel.csv", "--t-pre", "9", "--k", "4", "--out", "a.json", "--threads", "1"]);
    ok(d, &["design", "--input", "panel.csv", "--t-pre", "9", "--k", "4", "--out", "b.json", "--threads", "3"]);
    assert_eq!(std::fs::read(d.join("a.json")).unwrap(), std::fs::read(d.join("b.json")).unwrap());
}

#[test]
fn simulate_smoke_run_is_quick() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let start = Instant::now();
    let stdout = ok(d, &["simulate", "--sims", "10"]);
    assert!(start.elapsed().as_secs() < 60);
    assert!(stdout.contains("per-unit"));
    let csv = std::fs::read_to_string(d.join("report.csv")).unwrap();
    assert!(csv.starts_with("method,metric,value\n"));

    ok(d, &["simulate", "--experiment", "power", "--sims", "3", "--taus", "0,0.05", "--draws", "8", "--methods", "two-way", "--out", "power.csv", "--power-csv", "curve.csv", "--svg", "curve.svg"]);
    assert!(std::fs::read_to_string(d.join("curve.svg")).unwrap().starts_with("<svg"));
    assert_eq!(std::fs::read_to_string(d.join("curve.csv")).unwrap().lines().count(), 1 + 2 * 2);
}
