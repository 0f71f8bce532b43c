mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use common::*;
use serde_json::json;
use snspd_core::io::tagfile::{read_tags, write_tags};
use snspd_core::sim::TagRecord;

/// Column names per `### file.csv` section of the schema document.
fn documented_columns() -> BTreeMap<String, Vec<String>> {
    let text = fs::read_to_string(repo_file("docs/csv_schema.md")).unwrap();
    let mut out = BTreeMap::new();
    let mut current: Option<String> = None;
    for line in text.lines() {
        if let Some(name) = line.strip_prefix("### ") {
            current = name.ends_with(".csv").then(|| name.trim().to_string());
            if let Some(n) = &current {
                out.insert(n.clone(), Vec::new());
            }
        } else if let (Some(n), Some(rest)) = (&current, line.strip_prefix("| `")) {
            let col = rest.split('`').next().unwrap();
            out.get_mut(n).unwrap().push(col.to_string());
        }
    }
    out
}

fn four_tags() -> Vec<TagRecord> {
    vec![
        TagRecord { channel: 1, flags: 0, time: 1000 },
        TagRecord { channel: 0, flags: 1, time: 2000 },
        TagRecord { channel: 3, flags: 2, time: 2000 },
        TagRecord { channel: 1, flags: 0, time: 1_000_001_000 },
    ]
}

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

#[test]
fn tag_file_bytes_match_golden() {
    let d = tempfile::tempdir().unwrap();
    let path = d.path().join("t.pqtg");
    write_tags(&path, &four_tags()).unwrap();
    let hex: String = fs::read(&path).unwrap().chunks(16).map(|c| {
        let line: Vec<String> = c.iter().map(|b| format!("{b:02x}")).collect();
        line.join(" ") + "\n"
    }).collect();
    assert_eq!(hex, fs::read_to_string(golden("four_tags.hex")).unwrap());
    assert_eq!(read_tags(&path, false).unwrap(), four_tags());
}

#[test]
fn report_matches_golden() {
    let d = tempfile::tempdir().unwrap();
    let path = d.path().join("t.pqtg");
    write_tags(&path, &four_tags()).unwrap();
    let out = d.path().join("r");
    ok(&[&"report", &path, &"--out", &out]);
    assert_eq!(fs::read_to_string(out.join("report.csv")).unwrap(), fs::read_to_string(golden("four_tags_report.csv")).unwrap());
    let m = manifest(&out);
    assert_eq!(m["command"], "report");
    assert!(m["seed"].is_null() && m["config_sha256"].is_null());
    assert_eq!(m["summary"], json!({
        "tags": 4, "channels": 3, "dark_tags": 1, "crosstalk_tags": 1, "first_ps": 1000, "last_ps": 1_000_001_000u64,
    }));
    assert_eq!(m["inputs"][0]["bytes"], 16 + 4 * 16);
    assert_eq!(m["outputs"][0]["file"], "report.csv");
}

/// Runs every CSV-producing command once and returns the output directories.
fn run_all(root: &Path) -> Vec<PathBuf> {
    let mut cfg = single_wire(1.5e7, 4e6, 5);
    cfg["sweep"] = json!({ "parameter": "l_kinetic", "values": [430.0, 680.0] });
    let cfg = write_config(root, "c.json", &cfg);
    let dir = |n: &str| root.join(n);
    let tags = dir("sim").join("tags.pqtg");
    let truth = dir("sim").join("truth.csv");
    ok(&[&"simulate", &"--config", &cfg, &"--out", &dir("sim")]);
    ok(&[&"analyze-pcr", &"--config", &cfg, &"--out", &dir("pcr")]);
    ok(&[&"analyze-deadtime", &tags, &"--config", &cfg, &"--out", &dir("dead")]);
    ok(&[&"analyze-jitter", &tags, &truth, &"--config", &cfg, &"--out", &dir("jit")]);
    let irf = format!("1.2e7={}", dir("jit").join("jitter.csv").display());
    ok(&[&"compose-array-jitter", &irf, &"--config", &cfg, &"--out", &dir("comp")]);
    ok(&[&"analyze-mcr", &"--config", &cfg, &"--out", &dir("mcr")]);
    ok(&[&"sweep", &"--config", &cfg, &"--out", &dir("sweep")]);
    ok(&[&"report", &tags, &"--out", &dir("rep")]);
    ["sim", "pcr", "dead", "jit", "comp", "mcr", "sweep", "rep"].iter().map(|n| dir(n)).collect()
}

#[test]
fn every_csv_matches_the_schema() {
    let d = tempfile::tempdir().unwrap();
    let documented = documented_columns();
    let mut produced = BTreeMap::new();
    for dir in run_all(d.path()) {
        for e in fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.extension().is_some_and(|x| x == "csv") {
                produced.insert(p.file_name().unwrap().to_string_lossy().into_owned(), p);
            }
        }
        let m = manifest(&dir);
        for k in ["command", "config_sha256", "seed", "versions", "options", "inputs", "outputs", "summary"] {
            assert!(m.get(k).is_some(), "{}: manifest lacks {k}", dir.display());
        }
    }
    assert_eq!(produced.keys().collect::<Vec<_>>(), documented.keys().collect::<Vec<_>>());

    for (name, path) in &produced {
        let (header, rows) = read_csv(path);
        assert_eq!(&header, &documented[name], "{name} header");
        assert!(!rows.is_empty(), "{name} has no rows");
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), header.len(), "{name} row {i}");
            for (col, v) in header.iter().zip(row) {
                let allowed_empty = name == "sweep.csv" && v.is_empty();
                assert!(allowed_empty || v.parse::<f64>().is_ok_and(|x| !x.is_nan()), "{name} row {i} {col} = {v:?}");
            }
        }
    }
}

fn schema_keys(node: &serde_json::Value, defs: &serde_json::Value, prefix: &str, out: &mut Vec<String>) {
    let node = match node.get("$ref").and_then(|r| r.as_str()) {
        Some(r) => &defs[r.trim_start_matches("#/$defs/")],
        None => node,
    };
    if let Some(props) = node.get("properties").and_then(|p| p.as_object()) {
        for (k, v) in props {
            let path = format!("{prefix}{k}");
            out.push(path.clone());
            schema_keys(v, defs, &format!("{path}."), out);
        }
    }
}

#[test]
fn config_schema_covers_every_key() {
    use snspd_core::io::config::RunConfig;
    let schema: serde_json::Value = serde_json::from_str(&fs::read_to_string(repo_file("docs/config.schema.json")).unwrap()).unwrap();
    let mut keys = Vec::new();
    schema_keys(&schema, &schema["$defs"], "", &mut keys);

    // A config naming every documented key (overrides and items aside) must load.
    let full = json!({
        "device": { "shared": { "tau_rise": 0.2 } },
        "optical_efficiency": 0.5,
        "source": { "kind": "pulsed", "rep_rate": 1e7, "mean_photons_per_pulse": 0.1 },
        "seed": 1, "duration_ns": 1e3,
        "sweep": { "parameter": "l_kinetic", "values": [1.0] },
    });
    let cfg = RunConfig::from_value(full).unwrap();
    let mut seen = Vec::new();
    fn walk(v: &serde_json::Value, prefix: &str, out: &mut Vec<String>) {
        if let Some(o) = v.as_object() {
            for (k, v) in o {
                out.push(format!("{prefix}{k}"));
                walk(v, &format!("{prefix}{k}."), out);
            }
        }
    }
    walk(&serde_json::to_value(&cfg).unwrap(), "", &mut seen);
    for k in &seen {
        assert!(keys.contains(k), "{k} missing from the schema");
    }
    for k in keys.iter().filter(|k| !k.starts_with("device.overrides") && *k != "target_sde") {
        assert!(seen.contains(k), "schema key {k} is not a config key");
    }
    for (k, def) in [("discriminator.threshold_fraction", 0.25), ("geometry.n_wires", 32.0), ("device.shared.l_kinetic", 680.0)] {
        let mut node = &schema;
        for part in k.split('.') {
            node = &node["properties"][part];
            if let Some(r) = node.get("$ref").and_then(|r| r.as_str()) {
                node = &schema["$defs"][r.trim_start_matches("#/$defs/")];
            }
        }
        assert_eq!(node["default"].as_f64(), Some(def), "{k}");
    }
}
