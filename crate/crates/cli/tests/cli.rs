use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn dvrl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dvrl")).args(args).output().unwrap()
}

fn ok(args: &[&str]) {
    let out = dvrl(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

/// Noisy 1000-row blobs fixture under `dir/data`.
fn fixture(dir: &Path) -> PathBuf {
    let data = dir.join("data");
    ok(&["synth", "--noise", "0.2", "--seed", "8", "--out", data.to_str().unwrap()]);
    data
}

fn curve(path: &Path) -> Vec<(f64, f64)> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("fraction,value"));
    lines
        .map(|l| {
            let (f, v) = l.split_once(',').unwrap();
            (f.parse().unwrap(), v.parse().unwrap())
        })
        .collect()
}

#[test]
fn random_discovery_is_near_the_diagonal() {
    let dir = tempfile::tempdir().unwrap();
    let data = fixture(dir.path());
    let out = path(dir.path(), "out");
    ok(&["discover", "--method", "random", "--train", &path(&data, "train.csv"), "--seed", "1", "--out", &out]);
    let points = curve(&Path::new(&out).join("discovery.csv"));
    assert_eq!(points.len(), 10);
    for (f, v) in points {
        assert!((v - f).abs() < 0.1, "f={f}: found {v}");
    }
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(Path::new(&out).join("report.json")).unwrap()).unwrap();
    assert_eq!(report["method"], "discover:random");
    assert_eq!(report["inputs_digest"].as_str().unwrap().len(), 64);
}

#[test]
fn corrupt_flags_exactly_the_requested_share() {
    let dir = tempfile::tempdir().unwrap();
    let data = fixture(dir.path());
    let clean = path(&data, "test.csv");
    let out = path(dir.path(), "corrupt");
    ok(&["corrupt", "--ratio", "0.2", "--train", &clean, "--seed", "4", "--out", &out]);
    let text = fs::read_to_string(Path::new(&out).join("values.csv")).unwrap();
    let flagged = text.lines().skip(1).filter(|l| l.ends_with(",1")).count();
    assert_eq!(text.lines().count(), 1001);
    assert_eq!(flagged, 200);
    // the corrupted file feeds straight back into discovery
    let corrupted = path(Path::new(&out), "corrupted.csv");
    ok(&["discover", "--method", "random", "--train", &corrupted, "--out", &path(dir.path(), "again")]);
}

#[test]
fn runs_repeat_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let data = fixture(dir.path());
    let (train, val) = (path(&data, "train.csv"), path(&data, "validation.csv"));
    let run = |name: &str| {
        let out = path(dir.path(), name);
        ok(&[
            "value", "--train", &train, "--validation", &val, "--outer-iterations", "15", "--inner-iterations", "5",
            "--valuation-batch", "128", "--predictor-batch", "32", "--pretrain-iterations", "50", "--seed", "2",
            "--out", &out,
        ]);
        fs::read(Path::new(&out).join("values.csv")).unwrap()
    };
    assert_eq!(run("a"), run("b"));
}

fn config_error(args: &[&str], field: &str) {
    let out = dvrl(args);
    assert_eq!(out.status.code(), Some(2), "{args:?}");
    let record: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(record["error"], "config");
    assert_eq!(record["field"], field, "{record}");
}

#[test]
fn configuration_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let data = fixture(dir.path());
    let train = path(&data, "train.csv");
    let out = path(dir.path(), "out");
    config_error(&["value", "--bogus"], "argv");
    config_error(&["value", "--out", &out], "train");
    config_error(&["value", "--train", &path(&data, "missing.csv"), "--out", &out], "train");
    config_error(&["value", "--train", &train], "output");
    config_error(&["corrupt", "--ratio", "1.5", "--train", &train, "--out", &out], "ratio");
    config_error(&["value", "--train", &train, "--out", &out, "--window", "0"], "dvrl.window");
    config_error(&["robust", "--method", "random", "--train", &train, "--out", &out], "method");
    let cfg = path(dir.path(), "cfg.json");
    fs::write(&cfg, r#"{"sed": 3}"#).unwrap();
    config_error(&["value", "--config", &cfg, "--train", &train, "--out", &out], "config");
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let data = fixture(dir.path());
    let cfg = path(dir.path(), "cfg.json");
    fs::write(&cfg, format!(r#"{{"train": "{}", "method": "random", "seed": 3}}"#, path(&data, "train.csv"))).unwrap();
    let (a, b) = (path(dir.path(), "a"), path(dir.path(), "b"));
    ok(&["value", "--config", &cfg, "--out", &a]);
    ok(&["value", "--config", &cfg, "--seed", "4", "--out", &b]);
    let read = |d: &str| fs::read_to_string(Path::new(d).join("values.csv")).unwrap();
    assert_ne!(read(&a), read(&b));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(Path::new(&b).join("report.json")).unwrap()).unwrap();
    assert_eq!(report["seed"], 4);
}

#[test]
fn runtime_failures_exit_with_code_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "x,label\n1.0,a\noops,b\n").unwrap();
    let out = dvrl(&["value", "--method", "random", "--train", bad.to_str().unwrap(), "--out", &path(dir.path(), "o")]);
    assert_eq!(out.status.code(), Some(1));
    let record: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(record["error"], "runtime");
    let cause = record["trace"].as_array().unwrap().last().unwrap().as_str().unwrap();
    assert!(cause.contains("row 1") && cause.contains("`x`"), "{record}");
}
