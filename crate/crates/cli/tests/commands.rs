use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data")
}

fn fee(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fee"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json_out(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

fn german() -> String {
    data_dir().join("german.data").display().to_string()
}

fn trained(dir: &Path, name: &str) -> (String, Value) {
    let model = dir.join(name).display().to_string();
    let summary = json_out(&fee(&["train", "--data", &german(), "--out", &model]));
    (model, summary)
}

#[test]
fn train_reports_held_out_size_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, summary) = trained(dir.path(), "a.json");
    assert_eq!(summary["test_size"], 200);
    assert_eq!(summary["train_size"], 800);
    let acc = summary["performance"]["overall_accuracy"].as_f64().unwrap();
    assert!((0.70..=0.80).contains(&acc), "{acc}");
    let (b, _) = trained(dir.path(), "b.json");
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
}

#[test]
fn train_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.json").display().to_string();
    let one_fold = fee(&["train", "--data", &german(), "--out", &out, "--folds", "1"]);
    assert_eq!(one_fold.status.code(), Some(1));
    assert!(!dir.path().join("m.json").exists());
    let missing = fee(&["train", "--data", "/nonexistent/german.data", "--out", &out]);
    assert_eq!(missing.status.code(), Some(2));
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"learning_rate": -1}"#).unwrap();
    let bad_cfg = fee(&["train", "--data", &german(), "--out", &out, "--config", cfg.to_str().unwrap()]);
    assert_eq!(bad_cfg.status.code(), Some(1));
    assert_eq!(fee(&["train"]).status.code(), Some(1));
}

#[test]
fn audit_covers_all_metrics_and_is_stable() {
    let dir = tempfile::tempdir().unwrap();
    let (model, _) = trained(dir.path(), "m.json");
    let before = std::fs::read(german()).unwrap();
    let args = ["audit", "--data", &german(), "--model", &model];
    let first = fee(&args);
    let report = json_out(&first);
    let results = report["results"].as_array().unwrap();
    let skipped = report["skipped"].as_array().unwrap();
    let count = |scope: &str| {
        results.iter().chain(skipped).filter(|r| r["scope"] == scope).count()
    };
    assert_eq!(count("group"), 18);
    assert_eq!(count("subgroup"), 24);
    assert_eq!(count("individual"), 4);
    assert_eq!(fee(&args).stdout, first.stdout);
    assert_eq!(std::fs::read(german()).unwrap(), before);

    let out = dir.path().join("report.json");
    let strict = fee(&[
        "audit", "--data", &german(), "--model", &model, "--thresholds", "0,0,100", "--out",
        out.to_str().unwrap(),
    ]);
    json_out(&strict);
    let report: Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    for r in report["results"].as_array().unwrap() {
        let v = r["value_pct"].as_f64().unwrap();
        let perfect = if r["scope"] == "individual" { v == 100.0 } else { v == 0.0 };
        if !perfect {
            assert_eq!(r["verdict"], "unfair", "{r}");
        }
    }
}

#[test]
fn audit_rejects_unknown_feature() {
    let dir = tempfile::tempdir().unwrap();
    let (model, _) = trained(dir.path(), "m.json");
    let out = fee(&["audit", "--data", &german(), "--model", &model, "--features", "age,height"]);
    assert_eq!(out.status.code(), Some(1));
    let bad = fee(&["audit", "--data", &german(), "--model", &model, "--thresholds", "10,10"]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn aggregate_reference_records() {
    let records = data_dir().join("preferences.json").display().to_string();
    let out = json_out(&fee(&["aggregate", "--records", &records]));
    assert_eq!(out["participants"], 18);
    assert_eq!(out["weighted"]["ranked"][0]["metric_id"], "CSP");
    assert_eq!(out["weighted"]["ranked"][0]["score"], 36);
    assert!(out["borda"]["ranking"].is_array());
    assert_eq!(out["top1_categories"]["individual"], 9);
}

#[test]
fn aggregate_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.json");
    std::fs::write(&empty, "[]").unwrap();
    assert_eq!(fee(&["aggregate", "--records", empty.to_str().unwrap()]).status.code(), Some(1));
    let garbage = dir.path().join("garbage.json");
    std::fs::write(&garbage, "not json").unwrap();
    assert_eq!(fee(&["aggregate", "--records", garbage.to_str().unwrap()]).status.code(), Some(1));
    let missing = dir.path().join("missing.json");
    assert_eq!(fee(&["aggregate", "--records", missing.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn serve_reports_missing_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("store").display().to_string();
    let out = fee(&["serve", "--data", &german(), "--model", "/nonexistent/m.json", "--store", &store]);
    assert_eq!(out.status.code(), Some(2));
}
