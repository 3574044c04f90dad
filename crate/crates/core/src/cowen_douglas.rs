//! Cowen–Douglas fibers, spectral fiber projections, Abel limits of level
//! symbols and truncated reproducing kernels.

use crate::bundles;
use crate::error::{Error, Result};
use crate::linalg::{self, CMat, CVec, C64};
use crate::poly::{monomials, MultiIndex};
use crate::quotient::{GradedQuotient, Provenance};
use crate::space::{BoundaryPoint, Preset, SpaceModel};

/// Orthonormal basis of `E_m(v) = {ξ : p_m k_v ⊗ ξ ∈ GE_m}`.
#[derive(Debug, Clone)]
pub struct FiberSolve {
    pub v: Vec<C64>,
    pub m: usize,
    pub basis: CMat,
    /// Largest `||(1 - P_{E,m})(p_m k_v ⊗ ξ)||` over the basis, with `p_m k_v`
    /// scaled to unit norm.
    pub residual: f64,
}

impl FiberSolve {
    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }
}

fn check_interior(model: &SpaceModel, v: &[C64]) -> Result<f64> {
    if v.len() != model.n() {
        return Err(Error::VariableCount { expected: model.n(), found: v.len() });
    }
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::InvalidPoint("the origin is excluded".into()));
    }
    if norm >= 1.0 {
        return Err(Error::InvalidPoint(format!("|v| = {norm} is not below 1")));
    }
    if model.generator_residual(v) > 1e-10 * norm.powi(2).max(1e-300) + 1e-14 {
        return Err(Error::InvalidPoint("v is not on the variety".into()));
    }
    Ok(norm)
}

/// Nullspace of `ξ -> (1 - P_{E,m})(p_m k_v ⊗ ξ)`.
pub fn fiber(q: &GradedQuotient, m: usize, v: &[C64]) -> Result<FiberSolve> {
    let model = q.model();
    check_interior(model, v)?;
    let n = q.size();
    let p = q.projection(m)?;
    let k = model.level(m).kernel_vector(v);
    let k = k.unscale(k.norm());
    let mut map = CMat::zeros(p.nrows(), n);
    for i in 0..n {
        let mut col = CVec::zeros(p.nrows());
        for (a, ka) in k.iter().enumerate() {
            col[a * n + i] = *ka;
        }
        let resid = &col - p * &col;
        map.set_column(i, &resid);
    }
    let svd = map.clone().svd(false, true);
    let vt = svd.v_t.expect("right singular vectors");
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let cut = 1e-9 * smax.max(1.0);
    let null: Vec<CVec> = (0..n)
        .filter(|&r| r >= svd.singular_values.len() || svd.singular_values[r] < cut)
        .map(|r| vt.row(r).adjoint())
        .collect();
    let basis = if null.is_empty() { CMat::zeros(n, 0) } else { CMat::from_columns(&null) };
    let residual = if basis.ncols() == 0 { 0.0 } else { linalg::op_norm(&(&map * &basis)) };
    Ok(FiberSolve { v: v.to_vec(), m, basis, residual })
}

/// `P^E_m(x)`: the limit of powers of `ς^{(m)}(P_{E,m})(x)`.
#[derive(Debug, Clone)]
pub struct SpectralFiber {
    pub projection: CMat,
    pub rank: usize,
    pub min_retained: f64,
    /// Smallest retained over largest dropped eigenvalue.
    pub gap_ratio: f64,
}

/// Eigenvalues within `1e-8` of 1 are retained; a dropped eigenvalue within
/// `1e-6` of 1 means the limit cannot be resolved.
pub fn spectral_fiber_projection(q: &GradedQuotient, m: usize, x: &BoundaryPoint) -> Result<SpectralFiber> {
    let value = q.symbol_value(m, x.coords())?;
    spectral_limit(&linalg::hermitian_part(&value))
}

fn spectral_limit(value: &CMat) -> Result<SpectralFiber> {
    let (vals, vecs) = linalg::eigh_desc(value);
    let rank = vals.iter().filter(|&&l| l >= 1.0 - 1e-8).count();
    let dropped = vals.get(rank).copied().unwrap_or(0.0).max(0.0);
    let min_retained = if rank > 0 { vals[rank - 1] } else { f64::NAN };
    let gap_ratio = if rank == 0 {
        f64::NAN
    } else if dropped <= 0.0 {
        f64::INFINITY
    } else {
        min_retained / dropped
    };
    if dropped > 1.0 - 1e-6 {
        return Err(Error::NoSpectralGap { ratio: 1.0 / dropped, required: 1.0 / (1.0 - 1e-6) });
    }
    let v = vecs.columns(0, rank).into_owned();
    Ok(SpectralFiber { projection: &v * v.adjoint(), rank, min_retained, gap_ratio })
}

/// Level symbols `ς^{(m)}(P_{E,m})(ζ)` for arbitrarily large `m`: computed
/// from the quotient where it has data, and beyond that from closed forms
/// for equivariant line bundles on projective space and for quotients by
/// monomial submodules.
pub struct LevelSymbols<'a> {
    q: &'a GradedQuotient,
    z: Vec<C64>,
    closed: Option<ClosedForm>,
}

enum ClosedForm {
    /// `Σ_j C(m+j, j)/C(m+k, k) Π_j` with `Π_j` fixed spectral projections.
    Line { k: usize, projections: Vec<CMat> },
    /// Per component, the monomials that are not multiples of a generator.
    Monomial { excluded: Vec<Vec<MultiIndex>> },
}

fn ln_binomial(a: usize, b: usize) -> f64 {
    ln_gamma_int(a) - ln_gamma_int(b) - ln_gamma_int(a - b)
}

fn ln_gamma_int(a: usize) -> f64 {
    (1..=a).map(|i| (i as f64).ln()).sum()
}

impl<'a> LevelSymbols<'a> {
    pub fn new(q: &'a GradedQuotient, z: &[C64]) -> Result<Self> {
        let closed = match q.provenance() {
            Provenance::ToeplitzRange { metric } => line_closed_form(q, metric, z)?,
            Provenance::Submodule { generators } => monomial_closed_form(q.model(), generators),
            Provenance::Explicit => None,
        };
        Ok(LevelSymbols { q, z: z.to_vec(), closed })
    }

    pub fn has_closed_form(&self) -> bool {
        self.closed.is_some()
    }

    pub fn value(&self, m: usize) -> Result<CMat> {
        if m <= self.q.m_max() && self.closed.is_none() {
            return self.q.symbol_value(m, &self.z);
        }
        match &self.closed {
            Some(ClosedForm::Line { k, projections }) => {
                let n = self.q.size();
                let mut out = CMat::zeros(n, n);
                for (j, p) in projections.iter().enumerate() {
                    let lambda = (ln_binomial(m + j, j) - ln_binomial(m + k, *k)).exp();
                    out += p.scale(lambda);
                }
                Ok(out)
            }
            Some(ClosedForm::Monomial { excluded }) => {
                let n = self.q.size();
                let lf = linalg::ln_factorials(m);
                let ln_abs: Vec<f64> = self.z.iter().map(|x| x.norm_sqr().ln()).collect();
                let mut out = CMat::zeros(n, n);
                for alpha in monomials(self.z.len(), m) {
                    let mut ln = lf[m] - alpha.ln_factorial(&lf);
                    for (e, l) in alpha.exponents().iter().zip(&ln_abs) {
                        if *e > 0 {
                            ln += *e as f64 * l;
                        }
                    }
                    let w = ln.exp();
                    for (i, ex) in excluded.iter().enumerate() {
                        if !ex.iter().any(|g| alpha.checked_sub(g).is_some()) {
                            out[(i, i)] += C64::new(w, 0.0);
                        }
                    }
                }
                Ok(out)
            }
            None => Err(Error::MissingLevel(m)),
        }
    }
}

fn line_closed_form(q: &GradedQuotient, metric: &crate::symbols::Symbol, z: &[C64]) -> Result<Option<ClosedForm>> {
    let model = q.model();
    if model.preset() != Preset::ProjectiveSpace {
        return Ok(None);
    }
    let k = metric.level();
    if k == 0 {
        let is_one = metric.size() == 1 && (metric.matrix()[(0, 0)] - C64::new(1.0, 0.0)).norm() < 1e-14;
        return Ok(is_one.then(|| ClosedForm::Line { k: 0, projections: vec![linalg::identity(1)] }));
    }
    let reference = bundles::line_metric(model, k)?;
    if reference.size() != metric.size() || linalg::max_abs(&(reference.matrix() - metric.matrix())) > 1e-14 {
        return Ok(None);
    }
    let m_ref = q.m_max();
    if m_ref == 0 {
        return Ok(None);
    }
    let (vals, vecs) = linalg::eigh_desc(&linalg::hermitian_part(&q.symbol_value(m_ref, z)?));
    let lambdas: Vec<f64> = (0..=k).map(|j| (ln_binomial(m_ref + j, j) - ln_binomial(m_ref + k, k)).exp()).collect();
    let n = q.size();
    let mut projections = vec![CMat::zeros(n, n); k + 1];
    for (idx, val) in vals.iter().enumerate() {
        let j = (0..=k)
            .min_by(|&a, &b| (lambdas[a] - val).abs().total_cmp(&(lambdas[b] - val).abs()))
            .expect("k+1 clusters");
        let v = vecs.column(idx);
        projections[j] += v * v.adjoint();
    }
    Ok(Some(ClosedForm::Line { k, projections }))
}

fn monomial_closed_form(model: &SpaceModel, generators: &[Vec<crate::poly::Polynomial>]) -> Option<ClosedForm> {
    if !model.ideal().is_empty() {
        return None;
    }
    let n = generators.first()?.len();
    let mut excluded = vec![Vec::new(); n];
    for g in generators {
        let nonzero: Vec<usize> = (0..n).filter(|&i| !g[i].is_zero()).collect();
        if nonzero.len() != 1 {
            return None;
        }
        let terms: Vec<_> = g[nonzero[0]].terms().collect();
        if terms.len() != 1 {
            return None;
        }
        excluded[nonzero[0]].push(terms[0].0.clone());
    }
    Some(ClosedForm::Monomial { excluded })
}

/// `r^{2(M+1)}`: the weight left out by truncating `(1-r^2) Σ_m r^{2m}` at `M`.
pub fn abel_tail(r: f64, m_trunc: usize) -> f64 {
    r.powf(2.0 * (m_trunc + 1) as f64)
}

/// Smallest truncation whose Abel tail is below `tol`.
pub fn abel_truncation(r: f64, tol: f64) -> usize {
    let m = (tol.ln() / (2.0 * r.ln())).ceil() as usize;
    m.saturating_sub(1).max(0)
}

/// `(1 - r^2) Σ_{m <= M} r^{2m} ς^{(m)}(P_{E,m})(ζ)` for each `r`.
pub fn abel_symbol(q: &GradedQuotient, zeta: &BoundaryPoint, r_list: &[f64], m_trunc: usize) -> Result<Vec<CMat>> {
    for &r in r_list {
        if !(r > 0.0 && r < 1.0) {
            return Err(Error::Invalid(format!("Abel radius {r} is outside (0, 1)")));
        }
        let tail = abel_tail(r, m_trunc);
        if tail >= 1e-8 {
            return Err(Error::InsufficientTruncation { r, m_trunc, tail });
        }
    }
    let levels = LevelSymbols::new(q, zeta.coords())?;
    let n = q.size();
    let mut sums = vec![CMat::zeros(n, n); r_list.len()];
    for m in 0..=m_trunc {
        let s = levels.value(m)?;
        for (acc, &r) in sums.iter_mut().zip(r_list) {
            *acc += s.scale(r.powf(2.0 * m as f64));
        }
    }
    Ok(sums.into_iter().zip(r_list).map(|(s, &r)| s.scale(1.0 - r * r)).collect())
}

/// Linear extrapolation to `s = 1 - r^2 = 0` through the two largest radii.
pub fn abel_extrapolant(r_list: &[f64], values: &[CMat]) -> Result<CMat> {
    if r_list.len() < 2 || r_list.len() != values.len() {
        return Err(Error::Invalid("extrapolation needs two Abel values".into()));
    }
    let mut idx: Vec<usize> = (0..r_list.len()).collect();
    idx.sort_by(|&a, &b| r_list[b].total_cmp(&r_list[a]));
    let (i2, i1) = (idx[0], idx[1]);
    let (s2, s1) = (1.0 - r_list[i2].powi(2), 1.0 - r_list[i1].powi(2));
    let slope = (&values[i1] - &values[i2]).unscale(s1 - s2);
    Ok(&values[i2] - slope.scale(s2))
}

/// `Σ_{m <= M} K_m(z, w)` with `K_m(z, w) = Σ_a ψ_a(z) conj(ψ_a(w))`.
pub fn kernel_eval(model: &SpaceModel, z: &[C64], w: &[C64], m_trunc: usize) -> Result<C64> {
    for p in [z, w] {
        if p.len() != model.n() {
            return Err(Error::VariableCount { expected: model.n(), found: p.len() });
        }
        if p.iter().map(|x| x.norm_sqr()).sum::<f64>() >= 1.0 {
            return Err(Error::InvalidPoint("kernel points must lie in the open ball".into()));
        }
    }
    let mut acc = C64::new(0.0, 0.0);
    for m in 0..=m_trunc {
        let lv = model.level(m);
        acc += lv.eval_basis(z).dot(&lv.kernel_vector(w));
    }
    Ok(acc)
}

/// `|t|^{M+1} / (1 - |t|)` with `t = <z, w>`.
pub fn kernel_truncation_bound(z: &[C64], w: &[C64], m_trunc: usize) -> f64 {
    let t: C64 = z.iter().zip(w).map(|(a, b)| a * b.conj()).sum();
    t.norm().powi(m_trunc as i32 + 1) / (1.0 - t.norm())
}

/// One row of a fiber scan.
#[derive(Debug, Clone, serde::Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CdScanRow {
    pub point: usize,
    pub m: usize,
    pub rank: usize,
    pub min_retained: f64,
    pub gap_ratio: f64,
    /// Rank of the Cowen–Douglas fiber at the point scaled by `1/2`.
    pub cd_rank: usize,
}

/// Spectral fiber ranks at sampled boundary points and Cowen–Douglas fiber
/// ranks at the corresponding interior points.
pub fn cd_scan(q: &GradedQuotient, m: usize, points: usize, seed: u64) -> Result<Vec<CdScanRow>> {
    let pts = q.model().sample_boundary(points, seed)?;
    let mut rows = Vec::with_capacity(pts.len());
    for (i, pt) in pts.iter().enumerate() {
        let sf = spectral_fiber_projection(q, m, pt)?;
        let cd = fiber(q, m, &pt.scaled(0.5))?;
        rows.push(CdScanRow { point: i, m, rank: sf.rank, min_retained: sf.min_retained, gap_ratio: sf.gap_ratio, cd_rank: cd.rank() });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundles::BundleSpec;
    use crate::poly::Polynomial;

    fn point_quotient(m_max: usize) -> GradedQuotient {
        let cp1 = SpaceModel::projective(2);
        let gens = vec![vec![Polynomial::parse("z2", 2).unwrap()]];
        GradedQuotient::from_submodule_generators(&cp1, 1, gens, m_max).unwrap()
    }

    #[test]
    fn trivial_fiber_rank_one() {
        let cp2 = SpaceModel::projective(3);
        let q = BundleSpec::Line(0).quotient(&cp2, 4).unwrap();
        let v = cp2.sample_boundary(1, 2).unwrap()[0].scaled(0.4);
        for m in 0..=4 {
            assert_eq!(fiber(&q, m, &v).unwrap().rank(), 1);
        }
    }

    #[test]
    fn line_one_fiber_at_axis_point() {
        let cp1 = SpaceModel::projective(2);
        let q = BundleSpec::Line(1).quotient(&cp1, 3).unwrap();
        let v = [C64::new(0.5, 0.0), C64::new(0.0, 0.0)];
        let f = fiber(&q, 3, &v).unwrap();
        assert_eq!(f.rank(), 1);
        assert!((f.basis[(0, 0)].norm() - 1.0).abs() < 1e-10);
        assert!(f.residual < 1e-9);
    }

    #[test]
    fn point_quotient_fiber_vanishes_off_axis() {
        let q = point_quotient(6);
        let v = [C64::new(0.3, 0.1), C64::new(0.2, -0.4)];
        assert_eq!(fiber(&q, 6, &v).unwrap().rank(), 0);
        assert!(fiber(&q, 3, &[C64::new(0.0, 0.0); 2]).is_err());
    }

    #[test]
    fn spectral_projection_matches_metric() {
        let cp1 = SpaceModel::projective(2);
        let metric = BundleSpec::Line(1).metric_symbol(&cp1).unwrap();
        let q = GradedQuotient::from_toeplitz_range(&metric, 4).unwrap();
        for pt in cp1.sample_boundary(5, 8).unwrap() {
            for m in 1..=4 {
                let sf = spectral_fiber_projection(&q, m, &pt).unwrap();
                let target = metric.evaluate(&pt).unwrap();
                assert!(linalg::max_abs(&(sf.projection - target)) < 1e-8);
                assert!((sf.gap_ratio - (m + 1) as f64).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn line_closed_form_matches_quotient_levels() {
        let cp2 = SpaceModel::projective(3);
        for k in 1..=2 {
            let q = BundleSpec::Line(k).quotient(&cp2, 5).unwrap();
            let pt = cp2.sample_boundary(1, 11).unwrap().remove(0);
            let levels = LevelSymbols::new(&q, pt.coords()).unwrap();
            assert!(levels.has_closed_form());
            for m in 0..=5 {
                let direct = q.symbol_value(m, pt.coords()).unwrap();
                assert!(linalg::max_abs(&(levels.value(m).unwrap() - direct)) < 1e-10, "k={k} m={m}");
            }
        }
    }

    #[test]
    fn monomial_closed_form_matches_quotient_levels() {
        let q = point_quotient(5);
        let pt = q.model().sample_boundary(1, 4).unwrap().remove(0);
        let levels = LevelSymbols::new(&q, pt.coords()).unwrap();
        for m in 0..=5 {
            let direct = q.symbol_value(m, pt.coords()).unwrap();
            assert!(linalg::max_abs(&(levels.value(m).unwrap() - direct)) < 1e-12);
        }
    }

    #[test]
    fn abel_trivial_and_point_quotient() {
        let cp1 = SpaceModel::projective(2);
        let q = BundleSpec::Line(0).quotient(&cp1, 2).unwrap();
        let pt = cp1.sample_boundary(1, 1).unwrap().remove(0);
        let m = abel_truncation(0.9, 1e-9);
        let vals = abel_symbol(&q, &pt, &[0.5, 0.9], m).unwrap();
        for v in vals {
            assert!((v[(0, 0)].re - 1.0).abs() < 1e-8);
        }
        assert!(matches!(abel_symbol(&q, &pt, &[0.99], 20), Err(Error::InsufficientTruncation { .. })));

        let pq = point_quotient(2);
        let rs = [0.9, 0.99];
        let vals = abel_symbol(&pq, &pt, &rs, abel_truncation(0.99, 1e-9)).unwrap();
        assert!(vals[1][(0, 0)].re < vals[0][(0, 0)].re);
        let a = pt.coords()[0].norm_sqr();
        let closed = (1.0 - 0.99f64.powi(2)) / (1.0 - 0.99f64.powi(2) * a);
        assert!((vals[1][(0, 0)].re - closed).abs() < 1e-7);
    }

    #[test]
    fn abel_line_one_approaches_metric() {
        let cp1 = SpaceModel::projective(2);
        let metric = BundleSpec::Line(1).metric_symbol(&cp1).unwrap();
        let q = GradedQuotient::from_toeplitz_range(&metric, 3).unwrap();
        let pt = cp1.sample_boundary(1, 5).unwrap().remove(0);
        let target = metric.evaluate(&pt).unwrap();
        let rs = [0.5, 0.9, 0.99];
        let vals = abel_symbol(&q, &pt, &rs, abel_truncation(0.99, 1e-9)).unwrap();
        let dist: Vec<f64> = vals.iter().map(|v| linalg::op_norm(&(v - &target))).collect();
        assert!(dist[0] > dist[1] && dist[1] > dist[2], "{dist:?}");
        let ex = abel_extrapolant(&rs[1..], &vals[1..]).unwrap();
        assert!(linalg::op_norm(&(&vals[2] - ex)) < 0.05);
    }

    #[test]
    fn kernel_closed_form() {
        let cp1 = SpaceModel::projective(2);
        let z = [C64::new(0.5, 0.0), C64::new(0.0, 0.0)];
        let k = kernel_eval(&cp1, &z, &z, 40).unwrap();
        assert!((k - C64::new(4.0 / 3.0, 0.0)).norm() < 1e-9);
        let zero = [C64::new(0.0, 0.0); 2];
        assert!((kernel_eval(&cp1, &zero, &zero, 5).unwrap() - C64::new(1.0, 0.0)).norm() < 1e-15);
    }
}
