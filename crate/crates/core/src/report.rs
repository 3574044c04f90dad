//! Serialized numeric evidence.
//!
//! Reports serialize deterministically: maps are ordered, and floats are
//! written with 17 significant digits (non-finite values become `null`).

use std::collections::BTreeMap;
use std::io;

use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    #[serde(rename = "PASS")]
    Pass,
    #[serde(rename = "FAIL")]
    Fail,
}

impl Verdict {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn passed(self) -> bool {
        self == Verdict::Pass
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelEntry {
    pub m: usize,
    pub residual: f64,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub check: String,
    #[serde(rename = "perLevel")]
    pub per_level: Vec<LevelEntry>,
    pub verdict: Verdict,
    pub fit: BTreeMap<String, Value>,
    #[serde(default)]
    pub params: BTreeMap<String, Value>,
}

impl Report {
    pub fn new(check: &str) -> Self {
        Report {
            check: check.to_string(),
            per_level: Vec::new(),
            verdict: Verdict::Pass,
            fit: BTreeMap::new(),
            params: BTreeMap::new(),
        }
    }

    pub fn level(&mut self, m: usize, residual: f64) -> &mut LevelEntry {
        self.per_level.push(LevelEntry { m, residual, extra: BTreeMap::new() });
        self.per_level.last_mut().unwrap()
    }

    pub fn fit(&mut self, key: &str, value: impl Into<Value>) -> &mut Self {
        self.fit.insert(key.to_string(), value.into());
        self
    }

    pub fn param(&mut self, key: &str, value: impl Into<Value>) -> &mut Self {
        self.params.insert(key.to_string(), value.into());
        self
    }

    pub fn set_verdict(&mut self, ok: bool) {
        self.verdict = Verdict::from_bool(ok);
    }

    pub fn passed(&self) -> bool {
        self.verdict.passed()
    }

    pub fn max_residual(&self) -> f64 {
        self.per_level.iter().map(|e| e.residual).fold(0.0, f64::max)
    }

    pub fn fit_f64(&self, key: &str) -> Option<f64> {
        self.fit.get(key).and_then(Value::as_f64)
    }

    pub fn to_json(&self) -> String {
        to_json_string(self)
    }
}

impl LevelEntry {
    pub fn with(&mut self, key: &str, value: impl Into<Value>) -> &mut Self {
        self.extra.insert(key.to_string(), value.into());
        self
    }
}

/// Pretty JSON with fixed float formatting.
pub fn to_json_string<T: Serialize>(value: &T) -> String {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, FixedFloat(PrettyFormatter::with_indent(b"  ")));
    value.serialize(&mut ser).expect("in-memory serialization");
    out.push(b'\n');
    String::from_utf8(out).expect("serde_json emits UTF-8")
}

/// Converts an `f64` to a JSON value, mapping non-finite numbers to `null`.
pub fn num(x: f64) -> Value {
    serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
}

pub fn nums(xs: &[f64]) -> Value {
    Value::Array(xs.iter().map(|&x| num(x)).collect())
}

struct FixedFloat<F>(F);

impl<F: Formatter> Formatter for FixedFloat<F> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        if value.is_finite() {
            write!(writer, "{value:.16e}")
        } else {
            writer.write_all(b"null")
        }
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_use_seventeen_digits() {
        let mut r = Report::new("demo");
        r.level(1, 0.1).with("ratio", num(1.0 / 3.0));
        r.fit("slope", num(f64::NAN));
        let s = r.to_json();
        assert!(s.contains("1.0000000000000001e-1"), "{s}");
        assert!(s.contains("3.3333333333333331e-1"), "{s}");
        assert!(s.contains("\"slope\": null"), "{s}");
    }

    #[test]
    fn round_trip() {
        let mut r = Report::new("demo");
        r.level(2, 1e-12).with("dim", 3);
        r.set_verdict(false);
        let back: Report = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
    }
}
