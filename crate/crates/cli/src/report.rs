//! JSON forms of the diagnostics report and the run manifest.

use std::collections::BTreeMap;
use std::path::Path;

use lbsoft::diagnostics::DiagnosticsReport;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// JSON has no infinities or NaN; those become strings.
pub fn num(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else if x.is_nan() {
        json!("nan")
    } else if x > 0.0 {
        json!("inf")
    } else {
        json!("-inf")
    }
}

fn nums(xs: &[f64]) -> Value {
    Value::Array(xs.iter().map(|&x| num(x)).collect())
}

pub fn report_json(rep: &DiagnosticsReport, inputs_digest: &str) -> Value {
    let fits: Vec<Value> = rep
        .exponent_fits
        .iter()
        .map(|f| {
            json!({
                "name": f.name,
                "value": num(f.value),
                "ci": nums(&[f.ci.0, f.ci.1]),
                "range": nums(&[f.range.0, f.range.1]),
                "intercept": num(f.intercept),
                "residual": num(f.residual),
            })
        })
        .collect();
    let constants: Vec<Value> = rep
        .constants
        .iter()
        .map(|c| json!({"name": c.name, "value": num(c.value), "detail": c.detail}))
        .collect();
    let checks: Vec<Value> = rep
        .checks
        .iter()
        .map(|c| json!({"name": c.name, "pass": c.pass, "detail": c.detail}))
        .collect();
    let curves: Vec<Value> = rep
        .curves
        .iter()
        .map(|c| json!({"name": c.name, "x": nums(&c.x), "y": nums(&c.y)}))
        .collect();
    json!({
        "exponent_fits": fits,
        "constants": constants,
        "checks": checks,
        "curves": curves,
        "inputs_digest": inputs_digest,
        "all_pass": rep.all_pass(),
    })
}

/// Pretty JSON with sorted keys and a trailing newline.
pub fn to_text(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values serialize");
    s.push('\n');
    s
}

/// Manifest over every regular file in `dir` except the manifest itself.
pub fn manifest_json(dir: &Path, mode: &str, inputs: BTreeMap<&str, Value>) -> std::io::Result<Value> {
    let mut files = BTreeMap::new();
    let mut names: Vec<String> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().map(|t| t.is_file()).unwrap_or(false))
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n != "manifest.json")
        .collect();
    names.sort();
    for n in names {
        let bytes = std::fs::read(dir.join(&n))?;
        files.insert(n, json!(sha256_hex(&bytes)));
    }
    Ok(json!({
        "mode": mode,
        "files": files,
        "inputs": inputs,
        "versions": {
            "lbsoft": lbsoft::VERSION,
            "lbsoft-cli": env!("CARGO_PKG_VERSION"),
        },
    }))
}

