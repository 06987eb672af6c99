//! Run manifests, the assembled JSON report and its structural schema.

use super::PipelineError;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use std::path::Path;

/// Identity of one run: hash of the canonical config, the global seed and
/// the code version. Rerunning with an identical manifest reproduces every
/// numeric output bit-exactly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
}

impl RunManifest {
    pub fn new(canonical_config: &str, seed: u64) -> Self {
        let digest = Sha256::digest(canonical_config.as_bytes());
        RunManifest {
            config_hash: digest.iter().map(|b| format!("{b:02x}")).collect(),
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LeakageCheck {
    pub test_size: usize,
    pub train_size: usize,
    pub synthetic_in_test: usize,
    pub shared_keys: usize,
    pub passed: bool,
}

/// Structural validation against the shipped JSON schema subset:
/// `type`, `properties`, `required`, `items`, `enum`.
pub fn validate_against_schema(value: &Value, schema: &Value) -> Result<(), String> {
    validate_at(value, schema, "$")
}

fn type_name(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(n) => {
            if n.is_i64() || n.is_u64() {
                "integer"
            } else {
                "number"
            }
        }
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

fn validate_at(value: &Value, schema: &Value, path: &str) -> Result<(), String> {
    if let Some(expected) = schema.get("type").and_then(Value::as_str) {
        let actual = type_name(value);
        let ok = expected == actual || (expected == "number" && actual == "integer");
        if !ok {
            return Err(format!("{path}: expected {expected}, found {actual}"));
        }
    }
    if let Some(options) = schema.get("enum").and_then(Value::as_array) {
        if !options.contains(value) {
            return Err(format!("{path}: {value} not in {options:?}"));
        }
    }
    if let Some(required) = schema.get("required").and_then(Value::as_array) {
        for key in required.iter().filter_map(Value::as_str) {
            if value.get(key).is_none() {
                return Err(format!("{path}: missing required field `{key}`"));
            }
        }
    }
    if let Some(props) = schema.get("properties").and_then(Value::as_object) {
        for (key, sub) in props {
            if let Some(v) = value.get(key) {
                validate_at(v, sub, &format!("{path}.{key}"))?;
            }
        }
    }
    if let Some(items) = schema.get("items") {
        if let Some(arr) = value.as_array() {
            for (i, v) in arr.iter().enumerate() {
                validate_at(v, items, &format!("{path}[{i}]"))?;
            }
        }
    }
    Ok(())
}

/// The schema shipped with the crate; `report.json` validates against it.
pub const REPORT_SCHEMA: &str = include_str!("../../schemas/report.schema.json");

pub fn validate_report(report: &Value) -> Result<(), PipelineError> {
    let schema: Value = serde_json::from_str(REPORT_SCHEMA).expect("schema parses");
    validate_against_schema(report, &schema).map_err(PipelineError::SchemaViolation)
}

pub fn write_json(path: &Path, value: &Value) -> Result<(), PipelineError> {
    std::fs::write(path, serde_json::to_string_pretty(value).expect("serializes"))?;
    Ok(())
}

/// ROC points to CSV: fpr, tpr, threshold.
pub fn write_roc_csv(path: &Path, roc: &crate::eval::RocCurve) -> Result<(), PipelineError> {
    let mut out = String::from("fpr,tpr,threshold\n");
    for p in &roc.points {
        out.push_str(&format!("{},{},{}\n", p.fpr, p.tpr, p.threshold));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Embedding coordinates to CSV: x, y, z, origin, label.
pub fn write_embedding_csv(
    path: &Path,
    coords: &[[f64; 3]],
    origins: &[crate::spectrogram::Origin],
    labels: &[crate::eeg::Label],
) -> Result<(), PipelineError> {
    let mut out = String::from("x,y,z,origin,label\n");
    for ((c, o), l) in coords.iter().zip(origins).zip(labels) {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            c[0],
            c[1],
            c[2],
            o.as_str(),
            l.as_str()
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}
