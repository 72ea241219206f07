use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn c17() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../benchmarks/c17.bench")
}

fn splitlock(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_splitlock")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = splitlock(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn pipeline(mode: &str, seeds: &str, dir: &Path) -> Value {
    let input = c17();
    ok(&[
        "pipeline",
        "--input",
        input.to_str().unwrap(),
        "--k",
        "4",
        "--mode",
        mode,
        "--seeds",
        seeds,
        "--samples",
        "1000",
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
    json(&dir.join("report.json"))
}

#[test]
fn secure_pipeline_reports_output_errors_for_every_imperfect_key() {
    let dir = tempfile::tempdir().unwrap();
    let report = pipeline("secure", "20", dir.path());
    let runs = report["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 20);
    for r in runs {
        let m = &r["metrics"];
        let logical = m["ccr_key_logical"].as_f64().unwrap();
        let oer = m["oer"].as_f64().unwrap();
        assert_eq!(oer == 100.0, logical < 100.0, "seed {}: logical {logical}, oer {oer}", r["seed"]);
    }
    let csv = fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 21);
}

#[test]
fn naive_pipeline_leaves_key_nets_exposed() {
    let dir = tempfile::tempdir().unwrap();
    let report = pipeline("naive", "5", dir.path());
    let physical = report["aggregates"][0]["ccr_key_physical"].as_f64().unwrap();
    assert!(physical >= 80.0, "{physical}");
}

#[test]
fn stage_commands_chain() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let p = |name: &str| d.join(name).to_str().unwrap().to_owned();
    let input = c17();
    ok(&["lock", "--input", input.to_str().unwrap(), "--k", "4", "--seed", "3", "--out-dir", &p("")]);
    ok(&["layout", "--locked", &p("locked.bench"), "--split", "4", "--seed", "3", "--out", &p("layout.json")]);
    ok(&["split", "--locked", &p("locked.bench"), "--layout", &p("layout.json"), "--out-dir", &p("")]);
    ok(&["attack", "--feol", &p("feol.json"), "--seed", "3", "--out", &p("inferred.json")]);
    ok(&[
        "eval",
        "--locked",
        &p("locked.bench"),
        "--key",
        &p("key.json"),
        "--feol",
        &p("feol.json"),
        "--beol",
        &p("beol.json"),
        "--inferred",
        &p("inferred.json"),
        "--samples",
        "1000",
        "--out",
        &p("metrics.json"),
        "--csv",
        &p("metrics.csv"),
    ]);
    let metrics = json(&d.join("metrics.json"));
    let physical = metrics["metrics"]["ccr_key_physical"].as_f64().unwrap();
    assert!((0.0..=100.0).contains(&physical));
    assert_eq!(fs::read_to_string(d.join("metrics.csv")).unwrap().lines().count(), 2);

    // the attacker's view carries no key material
    let feol = fs::read_to_string(d.join("feol.json")).unwrap();
    for word in ["key_bits", "assignments", "\"edges\""] {
        assert!(!feol.contains(word), "{word}");
    }
}

#[test]
fn split_without_layout_fails() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let input = c17();
    ok(&["lock", "--input", input.to_str().unwrap(), "--k", "4", "--out-dir", d.to_str().unwrap()]);
    let out = splitlock(&[
        "split",
        "--locked",
        d.join("locked.bench").to_str().unwrap(),
        "--layout",
        d.join("missing.json").to_str().unwrap(),
        "--out-dir",
        d.to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert!(!d.join("feol.json").exists());
}

#[test]
fn infeasible_key_size_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let input = c17();
    let out = splitlock(&["lock", "--input", input.to_str().unwrap(), "--k", "128", "--out-dir", dir.path().to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
}
