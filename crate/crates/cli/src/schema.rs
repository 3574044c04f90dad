//! Validation of report files against the shipped schema.

use serde_json::Value;

pub const REPORT_SCHEMA: &str = include_str!("../schema/report.schema.json");

/// One schema violation: JSON pointer into the instance and a message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

/// Validates report text. Unparseable or empty input yields a single
/// violation at the root.
pub fn validate_text(text: &str) -> Vec<Violation> {
    if text.trim().is_empty() {
        return vec![Violation { path: "/".into(), message: "empty file".into() }];
    }
    let instance: Value = match serde_json::from_str(text) {
        Ok(v) => v,
        Err(e) => {
            return vec![Violation {
                path: "/".into(),
                message: format!("not JSON (line {} column {}): {e}", e.line(), e.column()),
            }]
        }
    };
    validate_value(&instance)
}

pub fn validate_value(instance: &Value) -> Vec<Violation> {
    let schema: Value = serde_json::from_str(REPORT_SCHEMA).expect("shipped schema is valid JSON");
    let validator = jsonschema::validator_for(&schema).expect("shipped schema compiles");
    validator
        .iter_errors(instance)
        .map(|e| {
            let path = e.instance_path().to_string();
            Violation { path: if path.is_empty() { "/".into() } else { path }, message: e.to_string() }
        })
        .collect()
}
