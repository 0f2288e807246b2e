//! End-to-end runs of the `geognn` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn geognn(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_geognn")).args(args).current_dir(dir).output().expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("cfg.toml");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn manifest(out: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap()
}

fn files_under(dir: &Path) -> Vec<String> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            out.extend(files_under(&path));
        } else {
            out.push(path.to_string_lossy().into_owned());
        }
    }
    out.sort();
    out
}

#[test]
fn dry_run_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = geognn(&["spectrum", "--dry-run", "--out", "res"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("config valid"));
    assert!(files_under(dir.path()).is_empty());
}

#[test]
fn missing_field_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "manifold = \"circle\"\nseed = 1\n");
    let out = geognn(&["spectrum", "--config", &cfg, "--out", "res"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing field `n`"));
    assert!(!dir.path().join("res").exists());
}

#[test]
fn spectrum_writes_its_outputs_inside_out() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "manifold = \"circle\"\nn = 80\nseed = 2\n");
    let out = geognn(&["spectrum", "--config", &cfg, "--out", "res"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let res = dir.path().join("res");
    for f in ["config.json", "spectrum.csv", "alignment.csv", "spectrum.svg", "summary.json", "manifest.json"] {
        assert!(res.join(f).is_file(), "{f} missing");
    }
    let files = files_under(dir.path());
    assert!(files.iter().all(|f| f.ends_with("cfg.toml") || Path::new(f).starts_with(&res)), "{files:?}");

    let csv = fs::read_to_string(res.join("spectrum.csv")).unwrap();
    assert_eq!(csv.lines().count(), 81);
    let m = manifest(&res);
    assert_eq!(m["command"], "spectrum");
    assert_eq!(m["seeds"], serde_json::json!([2]));
    let listed: Vec<&str> = m["outputs"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert!(listed.contains(&"spectrum.csv") && listed.contains(&"manifest.json"));
}

#[test]
fn seed_flag_overrides_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "manifold = \"sphere\"\nn = 40\nseed = 2\n");
    let out = geognn(&["spectrum", "--config", &cfg, "--out", "res", "--seed", "9"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(manifest(&dir.path().join("res"))["seeds"], serde_json::json!([9]));
}

#[test]
fn oversized_k_is_clamped_with_a_warning() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "manifold = \"circle\"\nn = 50\nseed = 0\nk = 80\n");
    let out = geognn(&["spectrum", "--config", &cfg, "--out", "res"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let res = dir.path().join("res");
    assert_eq!(fs::read_to_string(res.join("spectrum.csv")).unwrap().lines().count(), 51);
    let warnings = manifest(&res)["warnings"].to_string();
    assert!(warnings.contains("k = 80 exceeds n = 50"), "{warnings}");
}

#[test]
fn failed_hard_check_exits_two() {
    // Regenerating asserts the median trends, which tiny graphs break.
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "manifold = \"circle\"\nn = [20, 24, 28]\nseeds = [0, 1, 2]\nquadrature = 128\n\n[[kernels]]\nkind = \"dense_gaussian\"\n\n[[kernels]]\nkind = \"sparse_compact\"\n",
    );
    let out = geognn(&["converge", "--config", &cfg, "--out", "res", "--jobs", "1", "--regen-oracle"], dir.path());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(2), "{stdout}");
    assert!(stdout.contains("[FAIL]"));
    let checks = manifest(&dir.path().join("res"))["checks"].to_string();
    assert!(checks.contains("false"));
}
