use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn orbital(spec: &Value, dir: &Path, extra: &[&str]) -> Output {
    let path = dir.join("spec.json");
    std::fs::write(&path, serde_json::to_vec(spec).unwrap()).unwrap();
    Command::new(env!("CARGO_BIN_EXE_orbital"))
        .arg("--spec")
        .arg(&path)
        .arg("--out")
        .arg(dir.join("out"))
        .args(extra)
        .output()
        .unwrap()
}

fn report(dir: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(dir.join("out/report.json")).unwrap()).unwrap()
}

fn layout() -> Value {
    json!({ "sizes": [1, 1], "cutoff": 2.5 })
}

fn pressure(h: &str) -> Value {
    json!({
        "seed": 3,
        "experiment": {
            "command": "pressure",
            "layout": layout(),
            "h": h,
            "marginals": ["bernoulli:1", "semicircle:2"],
            "dims": [2, 4],
            "settings": { "sweeps": 50, "burn_in": 10 }
        }
    })
}

#[test]
fn zero_pressure_is_zero_at_every_size() {
    let dir = tempfile::tempdir().unwrap();
    let out = orbital(&pressure("0"), dir.path(), &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(dir.path());
    let points = r["result"]["points"].as_array().unwrap();
    assert_eq!(points.len(), 2);
    assert!(points.iter().all(|p| p["normalized"] == json!(0.0)));
    assert_eq!(r["config_hash"].as_str().unwrap().len(), 64);
    for f in ["manifest.json", "pressure.csv"] {
        assert!(dir.path().join("out").join(f).is_file(), "{f}");
    }
}

#[test]
fn eta_with_empty_basis_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let spec = json!({
        "experiment": {
            "command": "eta",
            "layout": layout(),
            "marginals": ["bernoulli:1", "semicircle:2"],
            "dim": 4,
            "basis_degree": 0,
            "samples_per_family": 3
        }
    });
    let out = orbital(&spec, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(report(dir.path())["result"]["value"], json!(0.0));
}

#[test]
fn malformed_polynomial_exits_with_position() {
    let dir = tempfile::tempdir().unwrap();
    let out = orbital(&pressure("x[1,1] * * x[2,1]"), dir.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("position"));
    assert!(!dir.path().join("out/report.json").exists());
}

#[test]
fn verify_reports_without_running() {
    let dir = tempfile::tempdir().unwrap();
    let out = orbital(&pressure("0.5*x[1,1]*x[2,1] + 0.5*x[2,1]*x[1,1]"), dir.path(), &["--verify"]);
    assert_eq!(out.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["ok"], json!(true));
    assert!(!dir.path().join("out").exists());

    let out = orbital(&pressure("x[1,1]*x[2,1]"), dir.path(), &["--verify"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stdout).contains("x[2,1]*x[1,1]"));

    let out = orbital(&pressure("x[3,1]"), dir.path(), &["--verify"]);
    assert_eq!(out.status.code(), Some(2));

    let mut unrealizable = pressure("0");
    unrealizable["experiment"]["marginals"] = json!(["bernoulli:1", "semicircle:3"]);
    assert_eq!(orbital(&unrealizable, dir.path(), &["--verify"]).status.code(), Some(2));
}

#[test]
fn non_convergence_exits_three_with_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let spec = json!({
        "experiment": {
            "command": "sd",
            "layout": layout(),
            "h": "0.3*x[1,1]*x[2,1] + 0.3*x[2,1]*x[1,1]",
            "tau0": ["bernoulli:1", "semicircle:2"],
            "max_iter": 2,
            "closure_depth": 0,
            "pushforward_degree": 2
        }
    });
    let out = orbital(&spec, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(dir.path());
    assert_eq!(r["status"], json!("non-converged"));
    let csv = std::fs::read_to_string(dir.path().join("out/convergence.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn missing_spec_file_is_invalid() {
    let out = Command::new(env!("CARGO_BIN_EXE_orbital")).args(["--spec", "/nonexistent/spec.json"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn runs_are_reproducible_and_seeded() {
    let spec = json!({
        "seed": 11,
        "experiment": {
            "command": "freeness",
            "layout": layout(),
            "marginals": ["bernoulli:1", "semicircle:2"],
            "dim": 12,
            "conjugations": 4
        }
    });
    let bytes = |extra: &[&str]| {
        let dir = tempfile::tempdir().unwrap();
        let out = orbital(&spec, dir.path(), extra);
        assert_eq!(out.status.code(), Some(0));
        std::fs::read(dir.path().join("out/report.json")).unwrap()
    };
    let a = bytes(&["--threads", "2"]);
    assert_eq!(a, bytes(&["--threads", "2"]));
    assert_eq!(a, bytes(&["--threads", "1"]));
    assert_ne!(a, bytes(&["--threads", "2", "--seed", "12"]));
}
