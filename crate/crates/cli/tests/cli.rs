use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_wiener-gobf"));
    c.env_remove("WIENER_GOBF_OUT_DIR");
    c
}

fn run(out: &Path, args: &[&str]) -> Output {
    bin().arg("--out-dir").arg(out).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.display().to_string()
}

fn values(path: &Path) -> Vec<f64> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect()
}

const MULTISINE: &str = r#"{"kind":"multisine","n_samples":600,"n_freqs":100,"seed":11}"#;

#[test]
fn missing_config_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["generate", "--config", "does-not-exist.json"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn malformed_config_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.json", r#"{"kind":"multisine","n_freqs":"many"}"#);
    let o = run(dir.path(), &["generate", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn seed_override_changes_signal_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "ms.json", MULTISINE);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let c = dir.path().join("c");
    assert!(run(&a, &["generate", "--config", &cfg, "--seed", "7"]).status.success());
    assert!(run(&b, &["generate", "--config", &cfg, "--seed", "7"]).status.success());
    assert!(run(&c, &["generate", "--config", &cfg]).status.success());
    let va = values(&a.join("signal.csv"));
    assert_eq!(va.len(), 600);
    assert_eq!(va, values(&b.join("signal.csv")));
    assert_ne!(va, values(&c.join("signal.csv")));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.join("generate.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seeds"]["signal"], 7);
    assert_eq!(manifest["command"], "generate");
}

#[test]
fn identity_system_reproduces_input() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "ms.json", MULTISINE);
    let sys = write(
        dir.path(),
        "sys.json",
        r#"{"g":{"b":[1],"a":[1]},"f":{"kind":"polynomial","coefficients":[0,1]}}"#,
    );
    let out = dir.path();
    assert!(run(out, &["generate", "--config", &cfg]).status.success());
    let u = out.join("signal.csv").display().to_string();
    let o = run(out, &["simulate", "--config", &sys, "--input", &u, "--oracle"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let uv = values(&out.join("signal.csv"));
    let yv = values(&out.join("y.csv"));
    let xv = values(&out.join("x.csv"));
    for ((a, b), c) in uv.iter().zip(&yv).zip(&xv) {
        assert!((a - b).abs() < 1e-12 && (a - c).abs() < 1e-12);
    }
}

#[test]
fn identify_then_predict_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let cfg = write(out, "ms.json", MULTISINE);
    let sys = write(
        out,
        "sys.json",
        r#"{"g":{"b":[1,0.5],"a":[1,-0.6]},"f":{"kind":"polynomial","coefficients":[0,1,0.05]}}"#,
    );
    let id = write(out, "id.json", r#"{"n_a":1,"n_b":1,"n_rep":1,"degree":2}"#);
    assert!(run(out, &["generate", "--config", &cfg]).status.success());
    let u = out.join("signal.csv").display().to_string();
    assert!(run(out, &["simulate", "--config", &sys, "--input", &u]).status.success());
    let y = out.join("y.csv").display().to_string();
    let o = run(
        out,
        &["identify", "--config", &id, "--input", &u, "--output", &y, "--val-input", &u, "--val-output", &y],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let val = report["validation_nrmse"].as_f64().unwrap();
    assert!(val < 0.05, "{val}");
    assert_eq!(val, report["estimation_nrmse"].as_f64().unwrap());
    let model = out.join("model.json").display().to_string();
    assert!(run(out, &["predict", "--model", &model, "--input", &u]).status.success());
    let yh = values(&out.join("y_hat.csv"));
    let yv = values(&out.join("y.csv"));
    let num: f64 = yh.iter().zip(&yv).map(|(a, b)| (a - b).powi(2)).sum();
    let den: f64 = yv.iter().map(|b| b * b).sum();
    assert!(((num / den).sqrt() - val).abs() < 1e-9);
    assert!(run(out, &["scatter", "--model", &model, "--input", &u, "--output", &y]).status.success());
    assert!(fs::read_to_string(out.join("scatter.csv")).unwrap().starts_with("x_hat,y\n"));
}

#[test]
fn mismatched_lengths_are_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let u = write(out, "u.csv", "index,value\n0,1\n1,0.5\n2,-1\n3,0.2\n");
    let y = write(out, "y.csv", "index,value\n0,1\n1,0.5\n");
    let id = write(out, "id.json", r#"{"n_a":0,"n_b":0,"n_rep":0,"degree":1}"#);
    let o = run(out, &["identify", "--config", &id, "--input", &u, "--output", &y]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn study_single_trial_and_resume() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let o = run(out, &["study", "--preset", "example2-saturation", "--trials", "1", "--seed", "4"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let first = fs::read_to_string(out.join("records.csv")).unwrap();
    assert_eq!(first.lines().count(), 1 + 2);
    assert!(out.join("aggregates.json").exists());
    assert!(out.join("study.manifest.json").exists());

    let o = run(out, &["study", "--preset", "example2-saturation", "--trials", "2", "--seed", "4", "--resume"]);
    assert!(o.status.success());
    let resumed = fs::read_to_string(out.join("records.csv")).unwrap();
    assert_eq!(resumed.lines().count(), 1 + 4);
    let fresh_dir = out.join("fresh");
    assert!(run(&fresh_dir, &["study", "--preset", "example2-saturation", "--trials", "2", "--seed", "4"])
        .status
        .success());
    assert_eq!(resumed, fs::read_to_string(fresh_dir.join("records.csv")).unwrap());
    assert!(resumed.starts_with(&first[..first.find('\n').unwrap()]));
}

#[test]
fn study_requires_config_or_preset() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["study"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn out_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "ms.json", MULTISINE);
    let target = dir.path().join("env-out");
    let o = bin()
        .env("WIENER_GOBF_OUT_DIR", &target)
        .args(["generate", "--config", &cfg])
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(target.join("signal.csv").exists());
}
