//! Shift operators between consecutive levels, the completely positive map
//! `Φ_*(X) = Σ S_α^* X S_α`, its unital rescaling `Ψ`, defect operators
//! `B_p(S) = (id - Φ_*)^p(1)` and the diagnostics built from them.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fit;
use crate::linalg::{self, CMat, C64};
use crate::poly::monomial_index;
use crate::report::{num, nums, Report};
use crate::space::SpaceModel;

/// Multiplication by `z_alpha` from level `m` to level `m + 1`.
#[derive(Debug, Clone)]
pub struct ShiftBlock {
    /// 1-based variable index.
    pub alpha: usize,
    pub m: usize,
    pub matrix: CMat,
}

/// `B_p(S) p_m` in orthonormal coordinates.
#[derive(Debug, Clone)]
pub struct DefectOperator {
    pub p: usize,
    pub m: usize,
    pub matrix: CMat,
}

pub(crate) fn build_shift_matrices(model: &SpaceModel, m: usize) -> Vec<CMat> {
    let (lo, hi) = (model.level(m), model.level(m + 1));
    let idx_hi = monomial_index(&hi.monomials);
    let denom = (m + 1) as f64;
    (0..model.n())
        .map(|alpha| {
            // In normalized coordinates z_α e_β = sqrt((β_α + 1)/(m + 1)) e_{β + e_α}.
            let mut amb = CMat::zeros(hi.ambient_dim(), lo.ambient_dim());
            for (j, beta) in lo.monomials.iter().enumerate() {
                let mut e = beta.exponents().to_vec();
                e[alpha] += 1;
                let coef = (e[alpha] as f64 / denom).sqrt();
                let i = idx_hi[&crate::poly::MultiIndex::new(e)];
                amb[(i, j)] = C64::new(coef, 0.0);
            }
            match (hi.full, lo.full) {
                (true, true) => amb,
                (true, false) => amb * &lo.basis,
                (false, true) => hi.basis.adjoint() * amb,
                (false, false) => hi.basis.adjoint() * amb * &lo.basis,
            }
        })
        .collect()
}

pub fn shift_blocks(model: &SpaceModel, m: usize) -> Vec<ShiftBlock> {
    model
        .shift_matrices(m)
        .iter()
        .enumerate()
        .map(|(a, s)| ShiftBlock { alpha: a + 1, m, matrix: s.clone() })
        .collect()
}

/// `Σ_α S_α^* X S_α` for `X` at the target level.
pub fn phi_star(blocks: &[CMat], x: &CMat) -> CMat {
    let n = blocks.first().map_or(0, |b| b.ncols());
    let mut out = CMat::zeros(n, n);
    for s in blocks {
        out += s.adjoint() * x * s;
    }
    out
}

/// `Σ_α S_α^* S_α` on the source level.
pub fn phi_star_identity(blocks: &[CMat]) -> CMat {
    let n = blocks.first().map_or(0, |b| b.ncols());
    let mut out = CMat::zeros(n, n);
    for s in blocks {
        out += s.adjoint() * s;
    }
    out
}

/// `Σ_α S_α S_α^*` on the target level.
pub fn row_sum(blocks: &[CMat]) -> CMat {
    let n = blocks.first().map_or(0, |b| b.nrows());
    let mut out = CMat::zeros(n, n);
    for s in blocks {
        out += s * s.adjoint();
    }
    out
}

/// `Φ_*^r(1) p_m` for `r = 0..=p`, given block families per level.
pub fn phi_star_powers(blocks: &dyn Fn(usize) -> Arc<Vec<CMat>>, dim: &dyn Fn(usize) -> usize, m: usize, p: usize) -> Vec<CMat> {
    // cur[k] holds Φ_*^r(1) p_{m+k} for the current r.
    let mut cur: Vec<CMat> = (0..=p).map(|k| linalg::identity(dim(m + k))).collect();
    let mut out = vec![cur[0].clone()];
    for r in 1..=p {
        let next: Vec<CMat> = (0..=p - r).map(|k| phi_star(&blocks(m + k), &cur[k + 1])).collect();
        out.push(next[0].clone());
        cur = next;
    }
    out
}

/// `Σ_r (-1)^r C(p, r) X_r`.
pub fn alternating_sum(powers: &[CMat], p: usize) -> CMat {
    let n = powers[0].nrows();
    let mut out = CMat::zeros(n, n);
    for (r, x) in powers.iter().enumerate().take(p + 1) {
        let sign = if r % 2 == 0 { 1.0 } else { -1.0 };
        out += x.scale(sign * linalg::binomial(p as i64, r as i64) as f64);
    }
    out
}

/// `Σ_r (-1)^r C(p, r) dims[r]` with `dims[r] = dim(m + r)`.
pub fn alternating_dim_sum(dims: &[usize], p: usize) -> i64 {
    (0..=p)
        .map(|r| {
            let sign = if r % 2 == 0 { 1 } else { -1 };
            sign * linalg::binomial(p as i64, r as i64) * dims[r] as i64
        })
        .sum()
}

pub fn defect_operator(model: &Arc<SpaceModel>, p: usize, m: usize) -> DefectOperator {
    let blocks = |k: usize| model.shift_matrices(k);
    let dim = |k: usize| model.level_dim(k);
    let powers = phi_star_powers(&blocks, &dim, m, p);
    DefectOperator { p, m, matrix: alternating_sum(&powers, p) }
}

/// `B_p(S) p_m` for every `p <= p_max` from one set of powers.
pub fn defect_operators_upto(model: &Arc<SpaceModel>, p_max: usize, m: usize) -> Vec<CMat> {
    let blocks = |k: usize| model.shift_matrices(k);
    let dim = |k: usize| model.level_dim(k);
    let powers = phi_star_powers(&blocks, &dim, m, p_max);
    (0..=p_max).map(|p| alternating_sum(&powers, p)).collect()
}

/// Per level `m <= m_max`: the deviation of `Σ S_α^* S_α` on `GH_m` from
/// `n_{m+1}/n_m`, and of `Σ S_α S_α^*` on `GH_{m+1}` from the identity.
pub fn orbit_certificate(model: &Arc<SpaceModel>, m_max: usize) -> Report {
    let mut rep = Report::new("orbit_certificate");
    rep.param("n", model.n()).param("mMax", m_max);
    let mut ok = true;
    let mut worst_row: f64 = 0.0;
    for m in 0..=m_max {
        let blocks = model.shift_matrices(m);
        let (nm, nm1) = (model.level_dim(m), model.level_dim(m + 1));
        let ratio = nm1 as f64 / nm as f64;
        let col = phi_star_identity(&blocks) - linalg::identity(nm).scale(ratio);
        let row = row_sum(&blocks) - linalg::identity(nm1);
        let res = linalg::op_norm_hermitian(&col);
        let row_res = linalg::op_norm_hermitian(&row);
        worst_row = worst_row.max(row_res);
        ok &= res < 1e-9 && row_res < 1e-10;
        rep.level(m, res).with("rowResidual", num(row_res)).with("ratio", num(ratio)).with("dim", nm);
    }
    rep.fit("maxResidual", num(rep.max_residual())).fit("maxRowResidual", num(worst_row));
    rep.set_verdict(ok);
    rep
}

/// Smallest `q` with `max_m ||B_q(S) p_m|| < 1e-9`, together with the
/// trace identity `Tr(B_p p_m) = Σ_r (-1)^r C(p,r) n_{m+r}`.
pub fn q_isometry_scan(model: &Arc<SpaceModel>, m_max: usize) -> Report {
    let mut rep = Report::new("q_isometry");
    let d = model.dimension();
    let q_cap = d + 2;
    rep.param("n", model.n()).param("mMax", m_max).param("d", d);
    let mut norms = vec![vec![0.0; m_max + 1]; q_cap + 1];
    let mut trace_err: f64 = 0.0;
    for m in 0..=m_max {
        let ops = defect_operators_upto(model, q_cap, m);
        let dims: Vec<usize> = (0..=q_cap).map(|r| model.level_dim(m + r)).collect();
        for (p, b) in ops.iter().enumerate() {
            norms[p][m] = linalg::op_norm_hermitian(b);
            let expect = alternating_dim_sum(&dims, p) as f64;
            trace_err = trace_err.max((linalg::trace(b).re - expect).abs());
        }
    }
    let q = (1..=q_cap).find(|&p| norms[p].iter().all(|&x| x < 1e-9));
    let prev_ok = q.is_some_and(|q| norms[q - 1].iter().any(|&x| x > 1e-3));
    for m in 0..=m_max {
        let entry = rep.level(m, q.map_or(f64::NAN, |q| norms[q][m]));
        entry.with("normsByOrder", nums(&norms.iter().map(|v| v[m]).collect::<Vec<_>>()));
    }
    rep.fit("q", q.map_or(serde_json::Value::Null, |q| q.into()))
        .fit("expectedQ", d + 1)
        .fit("maxTraceError", num(trace_err));
    rep.set_verdict(q == Some(d + 1) && prev_ok && trace_err < 1e-8);
    rep
}

/// Eigenvalues of `[S^*, S] p_m`, partial sums `Σ_{m<=M} n_m λ_m^p` and the
/// fitted decay exponent of the summands for each `p` in the grid.
pub fn schatten_report(model: &Arc<SpaceModel>, m_max: usize) -> Report {
    let mut rep = Report::new("schatten");
    let d = model.dimension();
    rep.param("n", model.n()).param("mMax", m_max).param("d", d);
    let grid: Vec<f64> = (2..=2 * (d + 3)).map(|k| k as f64 / 2.0).collect();
    let mut lambdas = Vec::new();
    let mut psd = true;
    let mut scalar = true;
    for m in 1..=m_max {
        let blocks = model.shift_matrices(m);
        let nm = model.level_dim(m);
        let comm = phi_star_identity(&blocks) - linalg::identity(nm);
        let vals = linalg::eigvals_desc(&comm);
        let (hi, lo) = (vals[0], *vals.last().unwrap());
        psd &= lo >= -1e-9;
        scalar &= hi - lo < 1e-9;
        let phi_m = linalg::trace(&comm).re / nm as f64;
        let expect = model.level_dim(m + 1) as f64 / nm as f64 - 1.0;
        lambdas.push((m, nm, phi_m));
        rep.level(m, (phi_m - expect).abs())
            .with("lambda", num(phi_m))
            .with("minEigenvalue", num(lo))
            .with("maxEigenvalue", num(hi));
    }
    let mut classes_ok = true;
    let mut table = serde_json::Map::new();
    let tail_start = (m_max / 2).max(1);
    for &p in &grid {
        let terms: Vec<(f64, f64)> = lambdas
            .iter()
            .map(|&(m, nm, l)| (m as f64, nm as f64 * l.powf(p)))
            .collect();
        let partial: Vec<f64> = terms
            .iter()
            .scan(0.0, |acc, &(_, t)| {
                *acc += t;
                Some(*acc)
            })
            .collect();
        let tail: Vec<&(f64, f64)> = terms.iter().filter(|(m, _)| *m as usize >= tail_start).collect();
        let xs: Vec<f64> = tail.iter().map(|(m, _)| m.ln()).collect();
        let ys: Vec<f64> = tail.iter().map(|(_, t)| t.ln()).collect();
        let (slope, _) = fit::linear_fit(&xs, &ys);
        let plateau = slope < -1.25;
        let expected = p > (d + 1) as f64;
        classes_ok &= plateau == expected;
        table.insert(
            format!("p={p}"),
            serde_json::json!({
                "exponent": num(slope),
                "plateau": plateau,
                "expectedPlateau": expected,
                "partialSums": nums(&partial),
            }),
        );
    }
    rep.fit("byP", serde_json::Value::Object(table)).fit("commutatorPsd", psd).fit("commutatorScalar", scalar);
    rep.set_verdict(classes_ok && psd && rep.max_residual() < 1e-9);
    rep
}

/// The unital map `Ψ(X) p_m = (n_m / n_{m+1}) Σ S_α^* X S_α p_m`, only
/// available once the orbit certificate has passed up to the requested
/// level or an explicit override is given.
pub struct PsiMap {
    model: Arc<SpaceModel>,
    m_max: usize,
}

impl PsiMap {
    pub fn new(model: &Arc<SpaceModel>, m_max: usize, allow_non_orbit: bool) -> Result<Self> {
        if !allow_non_orbit {
            let rep = orbit_certificate(model, m_max);
            if let Some(bad) = rep.per_level.iter().find(|e| e.residual >= 1e-9) {
                return Err(Error::NotAnOrbit { m: bad.m, residual: bad.residual });
            }
        }
        Ok(PsiMap { model: model.clone(), m_max })
    }

    /// Applies `Ψ` to an operator at level `m + 1`, returning level `m`.
    pub fn apply(&self, x: &CMat, m: usize) -> Result<CMat> {
        if m > self.m_max {
            return Err(Error::MissingLevel(m));
        }
        let blocks = self.model.shift_matrices(m);
        let w = self.model.level_dim(m) as f64 / self.model.level_dim(m + 1) as f64;
        Ok(phi_star(&blocks, x).scale(w))
    }
}
