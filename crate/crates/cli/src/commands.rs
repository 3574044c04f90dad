//! Subcommand implementations. Each produces a combined report whose
//! `reports` array holds the individual checks.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use graded_quant::balance::{self, Quadrature};
use graded_quant::bundles::{hilbert_poly, BundleSpec};
use graded_quant::cowen_douglas;
use graded_quant::fit;
use graded_quant::poly::{BiPolynomial, Polynomial};
use graded_quant::quotient::{self, GradedQuotient};
use graded_quant::report::{num, nums, Report};
use graded_quant::shifts;
use graded_quant::space::{ModelFile, Preset, SpaceModel};
use graded_quant::stability;
use graded_quant::symbols::{self, Symbol};
use graded_quant::szego;

use crate::config::{self, Format, RunConfig};

/// Fully resolved settings, echoed into every report (output location
/// excluded so that reruns to different files stay identical).
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Settings {
    pub command: String,
    pub model: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bundle: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quotient: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub e: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub check: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub symbol: Option<String>,
    pub m0: usize,
    pub m1: usize,
    pub samples: usize,
    pub seed: u64,
    pub points: usize,
    pub grid: usize,
    pub tolerances: BTreeMap<String, f64>,
    #[serde(skip)]
    pub out: Option<PathBuf>,
    #[serde(skip)]
    pub format: Format,
    #[serde(skip)]
    model_source: ModelSource,
}

#[derive(Debug, Clone)]
enum ModelSource {
    Preset(String),
    File(PathBuf),
    Inline { n: usize, ideal: Vec<String> },
}

impl Settings {
    pub fn resolve(command: &str, cfg: RunConfig, default_range: (usize, usize)) -> Result<Self> {
        let (m0, m1) = match &cfg.m {
            Some(s) => config::parse_range(s)?,
            None => default_range,
        };
        let mut tolerances = config::default_tolerances();
        for (k, v) in &cfg.tolerances {
            if !(*v > 0.0 && v.is_finite()) {
                bail!("tolerance '{k}' must be positive");
            }
            tolerances.insert(k.clone(), *v);
        }
        let model_source = match (&cfg.model, &cfg.preset, cfg.n) {
            (Some(path), _, _) => ModelSource::File(path.clone()),
            (None, _, Some(n)) if !cfg.ideal.is_empty() || cfg.preset.is_none() => {
                ModelSource::Inline { n, ideal: cfg.ideal.clone() }
            }
            (None, Some(p), _) => ModelSource::Preset(p.clone()),
            (None, None, None) => ModelSource::Preset("cp1".into()),
            (None, None, Some(_)) => unreachable!("handled by the inline arm"),
        };
        let model = match &model_source {
            ModelSource::Preset(p) => p.clone(),
            ModelSource::File(p) => format!("file:{}", p.display()),
            ModelSource::Inline { n, ideal } => format!("n={n};ideal=[{}]", ideal.join(", ")),
        };
        Ok(Settings {
            command: command.to_string(),
            model,
            bundle: cfg.bundle,
            quotient: cfg.quotient,
            e: cfg.e,
            f: cfg.f,
            check: cfg.check,
            symbol: cfg.symbol,
            m0,
            m1,
            samples: cfg.quadrature.samples.unwrap_or(20000),
            seed: cfg.quadrature.seed.unwrap_or(42),
            points: cfg.points.unwrap_or(20),
            grid: cfg.grid.unwrap_or(100),
            tolerances,
            out: cfg.out,
            format: cfg.format.unwrap_or(Format::Json),
            model_source,
        })
    }

    pub fn load_model(&self) -> Result<Arc<SpaceModel>> {
        match &self.model_source {
            ModelSource::Preset(name) => {
                SpaceModel::from_preset_name(name).ok_or_else(|| anyhow!("unknown preset '{name}'"))
            }
            ModelSource::File(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading model {}", path.display()))?;
                let spec: ModelFile = serde_json::from_str(&config::strip_comments(&text))
                    .map_err(|e| anyhow!("model file parse error at line {} column {}: {e}", e.line(), e.column()))?;
                Ok(SpaceModel::from_file(&spec)?)
            }
            ModelSource::Inline { n, ideal } => {
                let spec = ModelFile { n: *n, ideal: ideal.clone(), preset: None, dim: None };
                Ok(SpaceModel::from_file(&spec)?)
            }
        }
    }

    fn quadrature(&self) -> Quadrature {
        Quadrature { samples: self.samples, seed: self.seed }
    }
}

/// A CSV table.
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

pub struct Outcome {
    pub value: Value,
    pub passed: bool,
    pub table: Option<Table>,
}

fn gate(rep: &mut Report, tolerances: &BTreeMap<String, f64>) {
    if let Some(tol) = config::tolerance_key(&rep.check).and_then(|k| tolerances.get(k)) {
        if !(rep.max_residual() < *tol) {
            rep.set_verdict(false);
        }
    }
}

fn combine(settings: &Settings, mut reports: Vec<Report>, notes: Vec<String>) -> Result<Outcome> {
    for r in &mut reports {
        gate(r, &settings.tolerances);
    }
    let passed = reports.iter().all(Report::passed);
    let mut rows = Vec::new();
    for r in &reports {
        for lv in &r.per_level {
            let base = vec![r.check.clone(), lv.m.to_string(), float_cell(lv.residual)];
            if lv.extra.is_empty() {
                rows.push([base.clone(), vec![String::new(), String::new()]].concat());
            }
            for (k, v) in &lv.extra {
                rows.push([base.clone(), vec![k.clone(), cell(v)]].concat());
            }
        }
    }
    let table = Table { headers: ["check", "m", "residual", "field", "value"].map(String::from).to_vec(), rows };
    let mut value = json!({
        "check": settings.command,
        "perLevel": [],
        "verdict": if passed { "PASS" } else { "FAIL" },
        "fit": {
            "passed": reports.iter().filter(|r| r.passed()).count(),
            "total": reports.len(),
        },
        "params": serde_json::to_value(settings)?,
        "reports": reports.iter().map(serde_json::to_value).collect::<std::result::Result<Vec<_>, _>>()?,
    });
    if !notes.is_empty() {
        value["notes"] = json!(notes);
    }
    Ok(Outcome { value, passed, table: Some(table) })
}

fn float_cell(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        String::new()
    }
}

fn cell(v: &Value) -> String {
    match v {
        Value::Number(n) => n.as_f64().map_or_else(|| n.to_string(), |x| if n.is_f64() { float_cell(x) } else { n.to_string() }),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct QuotientFile {
    bundle: Option<String>,
    n: Option<usize>,
    #[serde(default)]
    generators: Vec<Vec<String>>,
}

/// A bundle name (`line:1`, `tangent`, `trivial`, `sum:...`, `point`) or a
/// JSON quotient file `{"bundle": ...}` / `{"n": N, "generators": [[...]]}`.
fn resolve_spec(arg: &str, model: &SpaceModel) -> Result<BundleSpec> {
    let path = std::path::Path::new(arg);
    if path.is_file() {
        let text = std::fs::read_to_string(path)?;
        let file: QuotientFile = serde_json::from_str(&config::strip_comments(&text))
            .map_err(|e| anyhow!("quotient file parse error at line {} column {}: {e}", e.line(), e.column()))?;
        if let Some(b) = file.bundle {
            return Ok(BundleSpec::parse(&b)?);
        }
        let n = file.n.ok_or_else(|| anyhow!("quotient file needs 'bundle' or 'n' with 'generators'"))?;
        let generators = file
            .generators
            .iter()
            .map(|g| {
                if g.len() != n {
                    bail!("generator has {} components, expected {n}", g.len());
                }
                g.iter().map(|p| Ok(Polynomial::parse(p, model.n())?)).collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        return Ok(BundleSpec::CustomQuotient { n, generators });
    }
    if arg == "point" {
        let generators = (2..=model.n())
            .map(|i| Ok(vec![Polynomial::parse(&format!("z{i}"), model.n())?]))
            .collect::<Result<Vec<_>>>()?;
        return Ok(BundleSpec::CustomQuotient { n: 1, generators });
    }
    Ok(BundleSpec::parse(arg)?)
}

fn default_bundle(model: &SpaceModel) -> &'static str {
    if model.preset() == Preset::ProjectiveSpace {
        "line:1"
    } else {
        "trivial"
    }
}

pub fn space(s: &Settings) -> Result<Outcome> {
    let model = s.load_model()?;
    combine(s, vec![space_report(&model, s)?], vec![])
}

fn space_report(model: &Arc<SpaceModel>, s: &Settings) -> Result<Report> {
    let mut rep = Report::new("space");
    let top = s.m1.max(model.dimension() + 3);
    let h = model.hilbert_function(top);
    for m in s.m0..=s.m1 {
        rep.level(m, 0.0).with("dim", h[m]);
    }
    let hi: Vec<i64> = h.iter().map(|&x| x as i64).collect();
    let degree = fit::tail_polynomial_degree(&hi);
    let d = model.dimension();
    let poly = hilbert_poly(d, 0, &hi)?;
    rep.fit("hilbertFunction", h.clone())
        .fit("dimension", d)
        .fit("tailDegree", degree.map_or(Value::Null, Value::from))
        .fit("hilbertPoly", Value::Array(poly.poly.coeffs.iter().map(|c| format!("{}/{}", c.numer(), c.denom()).into()).collect()))
        .fit("regularityOnset", poly.onset)
        .fit("hasSampler", model.has_sampler());
    rep.param("n", model.n()).param("idealGenerators", model.ideal().len());
    rep.set_verdict(degree == Some(d));
    Ok(rep)
}

pub fn shifts(s: &Settings) -> Result<Outcome> {
    let model = s.load_model()?;
    let check = s.check.as_deref().unwrap_or("all");
    let mut reports = Vec::new();
    if matches!(check, "all" | "orbit") {
        reports.push(shifts::orbit_certificate(&model, s.m1));
    }
    if matches!(check, "all" | "q-isometry") {
        reports.push(shifts::q_isometry_scan(&model, s.m1));
    }
    if matches!(check, "all" | "schatten") {
        reports.push(shifts::schatten_report(&model, s.m1));
    }
    if reports.is_empty() {
        bail!("unknown shift check '{check}' (orbit, q-isometry, schatten, all)");
    }
    combine(s, reports, vec![])
}

pub fn toeplitz(s: &Settings) -> Result<Outcome> {
    let model = s.load_model()?;
    let mut reports = vec![symbols::calculus_report(&model, s.m0, s.m1, 10, s.seed)];
    if let Some(src) = &s.symbol {
        let sym = Symbol::from_polynomial(&model, &BiPolynomial::parse(src, model.n())?)?;
        let mut rep = Report::new("toeplitz");
        rep.param("symbol", src.as_str());
        let hermitian = sym.is_hermitian();
        for m in s.m0..=s.m1 {
            let t = sym.toeplitz(m);
            let herm = graded_quant::linalg::max_abs(&(&t - t.adjoint()));
            let re: Vec<Value> = t.row_iter().map(|r| nums(&r.iter().map(|x| x.re).collect::<Vec<_>>())).collect();
            let im: Vec<Value> = t.row_iter().map(|r| nums(&r.iter().map(|x| x.im).collect::<Vec<_>>())).collect();
            let entry = rep.level(m, if hermitian { herm } else { 0.0 });
            entry.with("re", re).with("im", im);
            if hermitian {
                entry.with("eigenvalues", nums(&graded_quant::linalg::eigvals_desc(&graded_quant::linalg::hermitian_part(&t))));
            }
        }
        rep.fit("hermitianSymbol", hermitian);
        let ok = rep.max_residual() < 1e-10;
        rep.set_verdict(ok);
        reports.push(rep);
    }
    combine(s, reports, vec![])
}

fn quotient_reports(model: &Arc<SpaceModel>, spec: &BundleSpec, q: &GradedQuotient, s: &Settings) -> Result<Vec<Report>> {
    let mut dims = Report::new("quotient_dims");
    dims.param("bundle", spec.label());
    for m in s.m0..=s.m1 {
        let d = q.level(m)?.dim();
        let expected = spec.euler_characteristic(model, m);
        let residual = expected.map_or(0.0, |e| (d as i64 - e).abs() as f64);
        let entry = dims.level(m, residual);
        entry.with("dim", d).with("gapRatio", num(q.level(m)?.gap_ratio));
        if let Some(e) = expected {
            entry.with("expected", e);
        }
    }
    let ok = dims.max_residual() == 0.0;
    dims.set_verdict(ok);
    let mut out = vec![dims, quotient::arveson_rank(q, s.m1)?, quotient::coinvariance_certificate(q)];
    if let Some(metric) = q.metric() {
        let mut idem = Report::new("idempotency");
        let r = quotient::idempotency_residual(metric, 12, s.seed)?;
        idem.level(0, r);
        idem.set_verdict(r < 1e-10);
        out.push(idem);
    }
    Ok(out)
}

pub fn quotient(s: &Settings) -> Result<Outcome> {
    let model = s.load_model()?;
    let arg = s.quotient.clone().or(s.bundle.clone()).unwrap_or_else(|| default_bundle(&model).into());
    let spec = resolve_spec(&arg, &model)?;
    let q = spec.quotient(&model, s.m1 + 1)?;
    combine(s, quotient_reports(&model, &spec, &q, s)?, vec![])
}

fn balance_reports(model: &Arc<SpaceModel>, spec: &BundleSpec, s: &Settings) -> Result<Vec<Report>> {
    let exact = balance::balance_report(model, spec, s.m0, s.m1)?;
    let q = spec.quotient(model, s.m1)?;
    let tmap = balance::tmap_report(&q, s.m0.max(1), s.m1, s.quadrature(), 1, 50)?;
    let m_lo = s.m0.max(1);
    let mut out = vec![exact, tmap];
    if s.m1 > m_lo {
        out.push(balance::ym_limit_probe(model, spec, m_lo, s.m1, s.points, s.seed)?);
    }
    Ok(out)
}

pub fn balance(s: &Settings) -> Result<Outcome> {
    let model = s.load_model()?;
    let spec = resolve_spec(s.bundle.as_deref().unwrap_or(default_bundle(&model)), &model)?;
    combine(s, balance_reports(&model, &spec, s)?, vec![])
}

fn scan_report(q: &GradedQuotient, m: usize, s: &Settings) -> Result<(Report, Table)> {
    let rows = cowen_douglas::cd_scan(q, m, s.grid, s.seed)?;
    let mut rep = Report::new("cd_scan");
    rep.param("m", m).param("grid", s.grid).param("seed", s.seed);
    let ranks: Vec<usize> = rows.iter().map(|r| r.rank).collect();
    let cd: Vec<usize> = rows.iter().map(|r| r.cd_rank).collect();
    let constant = ranks.windows(2).all(|w| w[0] == w[1]) && cd.windows(2).all(|w| w[0] == w[1]);
    let agree = ranks.iter().zip(&cd).all(|(a, b)| a == b);
    let min_gap = rows.iter().map(|r| r.gap_ratio).fold(f64::INFINITY, f64::min);
    rep.level(m, 0.0)
        .with("rank", ranks.first().copied().unwrap_or(0))
        .with("cdRank", cd.first().copied().unwrap_or(0))
        .with("minGapRatio", num(min_gap));
    rep.fit("constantRank", constant).fit("spectralMatchesFiber", agree);
    rep.set_verdict(constant && agree);
    let table = Table {
        headers: ["point", "m", "rank", "minRetained", "gapRatio", "cdRank"].map(String::from).to_vec(),
        rows: rows
            .iter()
            .map(|r| {
                vec![
                    r.point.to_string(),
                    r.m.to_string(),
                    r.rank.to_string(),
                    float_cell(r.min_retained),
                    float_cell(r.gap_ratio),
                    r.cd_rank.to_string(),
                ]
            })
            .collect(),
    };
    Ok((rep, table))
}

pub fn cd_scan(s: &Settings) -> Result<Outcome> {
    let model = s.load_model()?;
    let arg = s.quotient.clone().or(s.bundle.clone()).unwrap_or_else(|| default_bundle(&model).into());
    let spec = resolve_spec(&arg, &model)?;
    let q = spec.quotient(&model, s.m1)?;
    let (rep, table) = scan_report(&q, s.m1, s)?;
    let mut out = combine(s, vec![rep], vec![])?;
    out.table = Some(table);
    Ok(out)
}

fn stability_reports(model: &Arc<SpaceModel>, e: &str, f: &str, s: &Settings) -> Result<(Vec<Report>, Vec<String>)> {
    let qe = resolve_spec(e, model)?.quotient(model, s.m1)?;
    let qf = resolve_spec(f, model)?.quotient(model, s.m1)?;
    let mut reports = vec![stability::guo_check(&qe, &qf, s.m0, s.m1)?];
    let mut notes = Vec::new();
    match stability::gieseker_table(&qe, &qf, s.m0, s.m1) {
        Ok(r) => reports.push(r),
        Err(graded_quant::Error::RankZero) => notes.push("gieseker_table skipped: the quotient has rank zero".to_string()),
        Err(err) => return Err(err.into()),
    }
    Ok((reports, notes))
}

pub fn stability(s: &Settings) -> Result<Outcome> {
    let model = s.load_model()?;
    let e = s.e.as_deref().unwrap_or("trivial");
    let f = s.f.as_deref().unwrap_or("point");
    let (reports, notes) = stability_reports(&model, e, f, s)?;
    combine(s, reports, notes)
}

fn szego_reports(model: &Arc<SpaceModel>, spec: &BundleSpec, s: &Settings) -> Result<Vec<Report>> {
    let q = spec.quotient(model, s.m1 + 1)?;
    let mut out = vec![szego::ve_isometry_check(&q, s.m1)?];
    let lo = s.m0.max(1);
    if s.m1 > lo {
        out.push(szego::hidden_szego(&q, lo, s.m1, s.points, s.seed)?);
    }
    out.push(szego::commutator_report(&q, lo, s.m1)?);
    Ok(out)
}

pub fn szego(s: &Settings) -> Result<Outcome> {
    let model = s.load_model()?;
    let spec = resolve_spec(s.bundle.as_deref().unwrap_or(default_bundle(&model)), &model)?;
    combine(s, szego_reports(&model, &spec, s)?, vec![])
}

/// The full battery on one model.
pub fn suite(s: &Settings) -> Result<Outcome> {
    let model = s.load_model()?;
    let mut reports = Vec::new();
    reports.push(space_report(&model, s)?);
    reports.push(shifts::orbit_certificate(&model, s.m1));
    reports.push(shifts::q_isometry_scan(&model, s.m1));
    reports.push(symbols::calculus_report(&model, s.m0, s.m1, 10, s.seed));

    let spec = BundleSpec::parse(default_bundle(&model))?;
    let q = spec.quotient(&model, s.m1 + 1)?;
    reports.extend(quotient_reports(&model, &spec, &q, s)?);
    if model.preset() == Preset::ProjectiveSpace {
        reports.push(balance::balance_report(&model, &spec, s.m0, s.m1)?);
        let lo = s.m0.max(2).min(s.m1);
        reports.push(balance::tmap_report(&q, lo, s.m1.min(lo + 2), s.quadrature(), 1, 50)?);
        if s.m1 > s.m0.max(1) {
            reports.push(balance::ym_limit_probe(&model, &spec, s.m0.max(1), s.m1, s.points, s.seed)?);
        }
    }
    let (scan, _) = scan_report(&q, s.m1.max(2), s)?;
    reports.push(scan);
    let (stab, notes) = stability_reports(&model, "trivial", "point", s)?;
    reports.extend(stab);
    reports.extend(szego_reports(&model, &spec, s)?);
    // Rename duplicates so each entry is addressable.
    let mut seen = BTreeMap::new();
    for r in &mut reports {
        let count = seen.entry(r.check.clone()).or_insert(0usize);
        *count += 1;
        if *count > 1 {
            r.check = format!("{}#{}", r.check, count);
        }
    }
    combine(s, reports, notes)
}
