//! Run configuration: JSON files with `//` comments, merged with flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct QuadratureConfig {
    pub samples: Option<usize>,
    pub seed: Option<u64>,
}

/// Everything a config file may set. Flags override file values.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
pub struct RunConfig {
    pub preset: Option<String>,
    pub model: Option<PathBuf>,
    pub n: Option<usize>,
    pub ideal: Vec<String>,
    pub bundle: Option<String>,
    pub quotient: Option<String>,
    pub e: Option<String>,
    pub f: Option<String>,
    pub m: Option<String>,
    pub tolerances: BTreeMap<String, f64>,
    pub quadrature: QuadratureConfig,
    pub points: Option<usize>,
    pub grid: Option<usize>,
    pub check: Option<String>,
    pub symbol: Option<String>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
}

/// Removes `//` comments outside string literals, keeping line breaks so
/// parse errors point at the original line and column.
pub fn strip_comments(src: &str) -> String {
    let mut out = String::with_capacity(src.len());
    let mut chars = src.chars().peekable();
    let (mut in_string, mut escaped) = (false, false);
    while let Some(ch) = chars.next() {
        if in_string {
            out.push(ch);
            if escaped {
                escaped = false;
            } else if ch == '\\' {
                escaped = true;
            } else if ch == '"' {
                in_string = false;
            }
            continue;
        }
        if ch == '"' {
            in_string = true;
            out.push(ch);
        } else if ch == '/' && chars.peek() == Some(&'/') {
            for rest in chars.by_ref() {
                if rest == '\n' {
                    out.push('\n');
                    break;
                }
            }
        } else {
            out.push(ch);
        }
    }
    out
}

pub fn parse_config(src: &str) -> Result<RunConfig> {
    serde_json::from_str(&strip_comments(src))
        .map_err(|e| anyhow!("config parse error at line {} column {}: {e}", e.line(), e.column()))
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    parse_config(&text).with_context(|| format!("in {}", path.display()))
}

/// `A..B` (inclusive) or a single level `A`.
pub fn parse_range(s: &str) -> Result<(usize, usize)> {
    let s = s.trim();
    let (a, b) = match s.split_once("..") {
        Some((a, b)) => (a, b.trim_start_matches('=')),
        None => (s, s),
    };
    let a: usize = a.trim().parse().map_err(|_| anyhow!("bad level range '{s}'"))?;
    let b: usize = b.trim().parse().map_err(|_| anyhow!("bad level range '{s}'"))?;
    if b < a {
        bail!("empty level range '{s}'");
    }
    Ok((a, b))
}

/// Named thresholds. A tolerance tightens the verdict of the report it names:
/// the report passes only if its largest per-level residual stays below it.
pub fn default_tolerances() -> BTreeMap<String, f64> {
    [
        ("orbit", 1e-9),
        ("calculus", 1e-10),
        ("balance", 1e-9),
        ("veIsometry", 1e-8),
        ("commutator", 1e-9),
        ("coinvariance", 1e-9),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

/// Tolerance key gating each report check.
pub fn tolerance_key(check: &str) -> Option<&'static str> {
    match check {
        "orbit_certificate" => Some("orbit"),
        "toeplitz_calculus" => Some("calculus"),
        "balance" => Some("balance"),
        "ve_isometry" => Some("veIsometry"),
        "commutator_trace" => Some("commutator"),
        "coinvariance" => Some("coinvariance"),
        _ => None,
    }
}

pub fn parse_tolerance(s: &str) -> Result<(String, f64)> {
    let (k, v) = s.split_once('=').ok_or_else(|| anyhow!("tolerance '{s}' is not NAME=VALUE"))?;
    let v: f64 = v.trim().parse().map_err(|_| anyhow!("tolerance '{s}' has a non-numeric value"))?;
    if !(v > 0.0 && v.is_finite()) {
        bail!("tolerance '{s}' must be positive");
    }
    Ok((k.trim().to_string(), v))
}
