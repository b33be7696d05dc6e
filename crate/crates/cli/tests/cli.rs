use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_photon-detect")).args(args).output().expect("binary runs")
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("stdout is not JSON ({e}): {}", String::from_utf8_lossy(&o.stdout)))
}

fn stderr_error(o: &Output) -> Value {
    let v: Value = serde_json::from_slice(&o.stderr)
        .unwrap_or_else(|e| panic!("stderr is not JSON ({e}): {}", String::from_utf8_lossy(&o.stderr)));
    v["error"].clone()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

const SMALL_SWEEP: &str = r#"{
  "stimulus": {"kind": "harmonic", "freq": 1},
  "camera": {"sensorWidth": 16, "sensorHeight": 16, "opticsMode": "bypass"},
  "contrastGrid": [0.01, 0.03, 0.1],
  "trialsPerClass": 100,
  "trainCount": 100,
  "replicates": 1,
  "baseSeed": 3,
  "workers": 2
}"#;

#[test]
fn sweep_writes_a_result_directory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "sweep.json", SMALL_SWEEP);
    let out = dir.path().join("out");
    let o = bin(&["sweep", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout_json(&o)["command"], "sweep");
    for f in ["config.resolved.json", "run.json", "summary.json", "curves.csv"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let resolved: Value = serde_json::from_slice(&fs::read(out.join("config.resolved.json")).unwrap()).unwrap();
    assert_eq!(resolved["baseSeed"], 3);
    assert_eq!(resolved["svm"]["maxIter"], 1000);
}

#[test]
fn invalid_configs_fail_with_json_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let bad = write(dir.path(), "bad.json", r#"{"stimulus": {"kind": "harmonic", "freq": 1}, "replicates": 0}"#);
    let o = bin(&["sweep", "--config", &bad, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stderr_error(&o)["kind"], "config");

    let cnn = SMALL_SWEEP.replace(r#""workers": 2"#, r#""workers": 2, "detectors": ["io", "cnn"]"#);
    let cnn = write(dir.path(), "cnn.json", &cnn);
    let o = bin(&["sweep", "--config", &cnn, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stderr_error(&o)["kind"], "unsupportedDetector");

    let o = bin(&["sweep", "--config", dir.path().join("missing.json").to_str().unwrap(), "--out", "x"]);
    assert_eq!(stderr_error(&o)["kind"], "io");

    let aliased = write(dir.path(), "alias.json", &SMALL_SWEEP.replace(r#""freq": 1"#, r#""freq": 9"#));
    let o = bin(&["sweep", "--config", &aliased, "--out", out.to_str().unwrap()]);
    let err = stderr_error(&o);
    assert_eq!(err["kind"], "stimulus");
    assert!(err["message"].as_str().unwrap().contains("aliased frequency"));
}

#[test]
fn usage_errors_are_json_too() {
    let o = bin(&["sweep", "--config"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_error(&o)["kind"], "usage");
    assert!(bin(&["--help"]).status.success());
}

#[test]
fn export_then_score_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "data.json",
        r#"{
          "stimulus": {"kind": "harmonic", "freq": 1},
          "camera": {"sensorWidth": 12, "sensorHeight": 12},
          "contrast": 0.5,
          "trainCount": 20,
          "testCount": 10,
          "baseSeed": 8
        }"#,
    );
    let data = dir.path().join("data");
    let o = bin(&["export-dataset", "--config", &cfg, "--out", data.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::metadata(data.join("test_images.u16")).unwrap().len(), 10 * 144 * 2);

    let truth: String = fs::read(data.join("test_labels.u8")).unwrap().iter().map(|l| format!("{l}\n")).collect();
    let preds = write(dir.path(), "preds.txt", &truth);
    let manifest = data.join("manifest.json");
    let o = bin(&["score", "--manifest", manifest.to_str().unwrap(), "--predictions", &preds]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = stdout_json(&o)["result"].clone();
    assert_eq!(r["counts"]["hits"], 5);
    assert_eq!(r["counts"]["falseAlarms"], 0);
    assert!(r["dprime"].as_f64().unwrap() > 2.0);

    let short = write(dir.path(), "short.txt", "0\n1\n");
    let o = bin(&["score", "--manifest", data.to_str().unwrap(), "--predictions", &short]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stderr_error(&o)["kind"], "predictions");

    let junk = write(dir.path(), "junk.txt", &truth.replacen('0', "2", 1));
    let o = bin(&["score", "--manifest", data.to_str().unwrap(), "--predictions", &junk]);
    assert_eq!(stderr_error(&o)["kind"], "predictions");
}

#[test]
fn pattern_renders_pgm() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(dir.path(), "p.json", r#"{"stimulus": {"kind": "disk", "radius": 4}, "width": 16, "height": 16}"#);
    let out = dir.path().join("disk.pgm");
    let o = bin(&["pattern", "--spec", &spec, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let bytes = fs::read(&out).unwrap();
    assert!(bytes.starts_with(b"P5"));
    assert_eq!(stdout_json(&o)["width"], 16);
}

#[test]
fn multiloc_reports_ratios() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "ml.json",
        r#"{
          "experiment": {
            "stimulus": {"kind": "gabor", "freq": 2, "sigma": 2},
            "camera": {"sensorWidth": 32, "sensorHeight": 32, "opticsMode": "bypass"},
            "contrastGrid": [0.05, 0.1, 0.2, 0.4],
            "trialsPerClass": 100,
            "detectors": ["io"],
            "replicates": 1
          },
          "patchWidth": 8,
          "patchHeight": 8,
          "locationCounts": [1, 4]
        }"#,
    );
    let out = dir.path().join("ml");
    let o = bin(&["multiloc", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("curves.csv")).unwrap();
    assert!(csv.lines().next().unwrap().ends_with("seedReplicate,locations"));
    assert_eq!(stdout_json(&o)["ratios"].as_array().unwrap().len(), 2);
}
