#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

pub fn snspd(args: &[&dyn AsRef<std::ffi::OsStr>]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_snspd")).args(args.iter().map(|a| a.as_ref())).output().expect("spawn snspd")
}

/// Runs and requires success.
pub fn ok(args: &[&dyn AsRef<std::ffi::OsStr>]) -> Output {
    let out = snspd(args);
    assert!(out.status.success(), "snspd failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

pub fn error_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().unwrap_or_default();
    serde_json::from_str(line).unwrap_or_else(|e| panic!("stderr is not JSON ({e}): {text}"))
}

pub fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

pub fn write_config(dir: &Path, name: &str, cfg: &Value) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    p
}

pub fn repo_file(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

/// One fully coupled wire under CW light.
pub fn single_wire(rate: f64, duration_ns: f64, seed: u64) -> Value {
    serde_json::json!({
        "geometry": { "n_wires": 1 },
        "optical_efficiency": 1.0,
        "mode": { "mode_field_diameter": 0.2, "offset": 0.0 },
        "source": { "kind": "cw", "cw_rate": rate },
        "seed": seed,
        "duration_ns": duration_ns,
    })
}

pub fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(path).unwrap();
    assert!(!text.contains('\r'), "{}: CR in line endings", path.display());
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (header, rows)
}
