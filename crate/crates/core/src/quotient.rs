//! Graded quotient modules `GE_m ⊂ GH_m ⊗ C^N`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fit;
use crate::linalg::{self, CMat, CVec, C64};
use crate::poly::{monomials, Polynomial};
use crate::report::{num, nums, Report};
use crate::shifts;
use crate::space::SpaceModel;
use crate::symbols::{self, Symbol};

/// How a quotient was constructed.
#[derive(Debug, Clone)]
pub enum Provenance {
    /// Fock-orthogonal complement of the submodule generated by `generators`
    /// (each an `N`-vector of homogeneous polynomials of a common degree).
    Submodule { generators: Vec<Vec<Polynomial>> },
    /// Spectral range projections of the Toeplitz operators of `metric`.
    ToeplitzRange { metric: Symbol },
    /// Projections supplied directly.
    Explicit,
}

#[derive(Debug, Clone)]
pub struct QuotientLevel {
    pub m: usize,
    pub projection: CMat,
    /// Orthonormal basis of the range (columns), canonical phase.
    pub basis: CMat,
    /// Retained Toeplitz eigenvalues (toeplitz-range quotients only).
    pub retained: Vec<f64>,
    /// Gap ratio at the spectral cut (infinite when the rest is zero).
    pub gap_ratio: f64,
}

impl QuotientLevel {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    fn from_projection(m: usize, projection: CMat) -> Self {
        let rank = linalg::trace(&projection).re.round().max(0.0) as usize;
        let basis = linalg::canonical_basis(&projection, rank);
        QuotientLevel { m, projection, basis, retained: Vec::new(), gap_ratio: f64::INFINITY }
    }
}

#[derive(Debug, Clone)]
pub struct GradedQuotient {
    model: Arc<SpaceModel>,
    n: usize,
    levels: Vec<QuotientLevel>,
    provenance: Provenance,
}

/// Compressed shift blocks `S_{E,α}: GE_m -> GE_{m+1}` in basis coordinates.
#[derive(Debug, Clone)]
pub struct CompressedShift {
    pub m: usize,
    pub blocks: Vec<CMat>,
}

impl CompressedShift {
    /// `Σ_α S_{E,α}^* S_{E,α}` on `GE_m`.
    pub fn square(&self) -> CMat {
        shifts::phi_star_identity(&self.blocks)
    }

    /// `Σ_α S_{E,α} S_{E,α}^*` on `GE_{m+1}`.
    pub fn row_sum(&self) -> CMat {
        shifts::row_sum(&self.blocks)
    }
}

impl GradedQuotient {
    pub fn from_submodule_generators(
        model: &Arc<SpaceModel>,
        n: usize,
        generators: Vec<Vec<Polynomial>>,
        m_max: usize,
    ) -> Result<Self> {
        let mut degrees = Vec::with_capacity(generators.len());
        for (idx, g) in generators.iter().enumerate() {
            if g.len() != n {
                return Err(Error::Shape(format!("generator {idx} has {} components, expected N={n}", g.len())));
            }
            let mut deg = None;
            for p in g {
                if p.nvars() != model.n() {
                    return Err(Error::VariableCount { expected: model.n(), found: p.nvars() });
                }
                if p.is_zero() {
                    continue;
                }
                let d = p.homogeneous_degree().ok_or(Error::NonHomogeneous { index: idx })?;
                if deg.is_some_and(|e| e != d) {
                    return Err(Error::NonHomogeneous { index: idx });
                }
                deg = Some(d);
            }
            degrees.push(deg);
        }
        let mut levels = Vec::with_capacity(m_max + 1);
        for m in 0..=m_max {
            let level = model.level(m);
            let size = level.dim() * n;
            let mut cols: Vec<CVec> = Vec::new();
            for (g, deg) in generators.iter().zip(&degrees) {
                let Some(e) = *deg else { continue };
                if e > m {
                    continue;
                }
                for beta in monomials(model.n(), m - e) {
                    let mut v = CVec::zeros(size);
                    for (i, p) in g.iter().enumerate() {
                        let coords = polynomial_coords(model, &p.mul_monomial(&beta), m);
                        for a in 0..level.dim() {
                            v[a * n + i] = coords[a];
                        }
                    }
                    cols.push(v);
                }
            }
            let projection = if cols.is_empty() {
                linalg::identity(size)
            } else {
                let (range, _) = linalg::range_and_complement(&CMat::from_columns(&cols), 1e-10);
                linalg::identity(size) - &range * range.adjoint()
            };
            levels.push(QuotientLevel::from_projection(m, projection));
        }
        Ok(GradedQuotient { model: model.clone(), n, levels, provenance: Provenance::Submodule { generators } })
    }

    /// Range projections of `toeplitz(metric, m)` cut at the largest ratio
    /// gap of the descending spectrum (gap ratio must be at least 10).
    pub fn from_toeplitz_range(metric: &Symbol, m_max: usize) -> Result<Self> {
        let model = metric.model().clone();
        if model.has_sampler() {
            let res = idempotency_residual(metric, 12, 0x5eed)?;
            if res > 1e-8 {
                return Err(Error::NotIdempotent { residual: res });
            }
        }
        let n = metric.size();
        let mut levels = Vec::with_capacity(m_max + 1);
        for m in 0..=m_max {
            let t = metric.toeplitz(m);
            let (vals, vecs) = linalg::eigh_desc(&t);
            let (keep, ratio) = linalg::largest_ratio_gap(&vals, 1e-10);
            if ratio < 10.0 {
                return Err(Error::NoSpectralGap { ratio, required: 10.0 });
            }
            let v = vecs.columns(0, keep).into_owned();
            let projection = linalg::hermitian_part(&(&v * v.adjoint()));
            let basis = linalg::canonical_basis(&projection, keep);
            levels.push(QuotientLevel { m, projection, basis, retained: vals[..keep].to_vec(), gap_ratio: ratio });
        }
        Ok(GradedQuotient { model, n, levels, provenance: Provenance::ToeplitzRange { metric: metric.clone() } })
    }

    /// Quotient from given projections (one per level starting at 0).
    pub fn explicit(model: &Arc<SpaceModel>, n: usize, projections: Vec<CMat>) -> Result<Self> {
        let mut levels = Vec::with_capacity(projections.len());
        for (m, p) in projections.into_iter().enumerate() {
            let size = model.level_dim(m) * n;
            if p.nrows() != size || p.ncols() != size {
                return Err(Error::Shape(format!("projection at level {m} must be {size}x{size}")));
            }
            let res = linalg::projection_residual(&p);
            if res > 1e-10 {
                return Err(Error::NotIdempotent { residual: res });
            }
            levels.push(QuotientLevel::from_projection(m, p));
        }
        Ok(GradedQuotient { model: model.clone(), n, levels, provenance: Provenance::Explicit })
    }

    pub fn model(&self) -> &Arc<SpaceModel> {
        &self.model
    }

    /// Fiber size `N`.
    pub fn size(&self) -> usize {
        self.n
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn metric(&self) -> Option<&Symbol> {
        match &self.provenance {
            Provenance::ToeplitzRange { metric } => Some(metric),
            _ => None,
        }
    }

    pub fn m_max(&self) -> usize {
        self.levels.len().saturating_sub(1)
    }

    pub fn level(&self, m: usize) -> Result<&QuotientLevel> {
        self.levels.get(m).ok_or(Error::MissingLevel(m))
    }

    pub fn levels(&self) -> &[QuotientLevel] {
        &self.levels
    }

    pub fn projection(&self, m: usize) -> Result<&CMat> {
        Ok(&self.level(m)?.projection)
    }

    pub fn dims(&self) -> Vec<usize> {
        self.levels.iter().map(QuotientLevel::dim).collect()
    }

    /// `ς^{(m)}(P_{E,m})` at coordinates `z`.
    pub fn symbol_value(&self, m: usize, z: &[C64]) -> Result<CMat> {
        let p = self.projection(m)?;
        let psi = self.model.level(m).eval_basis(z);
        Ok(symbols::evaluate_matrix(p, &psi, self.n))
    }

    /// `P_{E,m+1} (S_α ⊗ 1) |_{GE_m}` in basis coordinates.
    pub fn compressed_shift(&self, m: usize) -> Result<CompressedShift> {
        let (lo, hi) = (self.level(m)?, self.level(m + 1)?);
        let id = linalg::identity(self.n);
        let blocks = self
            .model
            .shift_matrices(m)
            .iter()
            .map(|s| hi.basis.adjoint() * (linalg::kron(s, &id) * &lo.basis))
            .collect();
        Ok(CompressedShift { m, blocks })
    }

    /// Adjoint of the compressed inclusion `ι^E_{m,l}` for the normalized
    /// traces: `(e_m / e_l) P_{E,m} Tr_{l-m}(V B V^*) P_{E,m}` with
    /// `V = V_{m,l} ⊗ 1_N`. `b` is an operator on `GH_l ⊗ C^N`.
    pub fn jmath(&self, b: &CMat, l: usize, m: usize) -> Result<CMat> {
        if m > l {
            return Err(Error::Invalid(format!("jmath needs m <= l, got m={m}, l={l}")));
        }
        let (pm, el) = (self.projection(m)?, self.level(l)?.dim());
        let em = self.level(m)?.dim();
        if el == 0 {
            return Err(Error::RankZero);
        }
        let reduced = partial_trace_through_embedding(&self.model, b, m, l, self.n);
        Ok(pm * reduced * pm * C64::new(em as f64 / el as f64, 0.0))
    }

    /// Normalized trace `φ^E_m(X) = Tr(P_{E,m} X) / dim GE_m`.
    pub fn normalized_trace(&self, x: &CMat, m: usize) -> Result<C64> {
        let lv = self.level(m)?;
        if lv.dim() == 0 {
            return Err(Error::RankZero);
        }
        Ok(linalg::trace(&(&lv.projection * x)) / lv.dim() as f64)
    }
}

/// `Tr_{middle}((V ⊗ 1) B (V ⊗ 1)^*)` with `V = V_{m,l}`, as an operator on
/// `GH_m ⊗ C^N`.
pub fn partial_trace_through_embedding(model: &SpaceModel, b: &CMat, m: usize, l: usize, n: usize) -> CMat {
    let v = model.embedding(m, l);
    let (nm, nj, nl) = (model.level_dim(m), model.level_dim(l - m), model.level_dim(l));
    let id = linalg::identity(n);
    let mut out = CMat::zeros(nm * n, nm * n);
    for x in 0..nj {
        let vx = CMat::from_fn(nm, nl, |a, c| v[(a * nj + x, c)]);
        let vxn = linalg::kron(&vx, &id);
        out += &vxn * b * vxn.adjoint();
    }
    out
}

/// Orthonormal coordinates in `GH_m` of a homogeneous degree-`m` polynomial.
pub fn polynomial_coords(model: &SpaceModel, p: &Polynomial, m: usize) -> CVec {
    let level = model.level(m);
    let mut amb = CVec::zeros(level.ambient_dim());
    for (alpha, coef) in p.terms() {
        if alpha.degree() != m {
            continue;
        }
        let i = level.monomials.iter().position(|g| g == alpha).expect("degree-m monomial");
        amb[i] += coef * level.weights[i].sqrt();
    }
    if level.full {
        amb
    } else {
        level.basis.adjoint() * amb
    }
}

/// Largest `||P(x)^2 - P(x)||` and `||P(x) - P(x)^*||` over sampled points.
pub fn idempotency_residual(metric: &Symbol, count: usize, seed: u64) -> Result<f64> {
    let pts = metric.model().sample_boundary(count, seed)?;
    let mut worst: f64 = 0.0;
    for p in &pts {
        let v = metric.evaluate(p)?;
        worst = worst.max(linalg::projection_residual(&v));
    }
    Ok(worst)
}

/// PSD check of `ι_{m,m+1}(P_{E,m}) - P_{E,m+1}` for every stored level.
pub fn coinvariance_certificate(q: &GradedQuotient) -> Report {
    let mut rep = Report::new("coinvariance");
    rep.param("N", q.size()).param("mMax", q.m_max());
    let mut ok = true;
    for m in 0..q.m_max() {
        let pm = &q.levels[m].projection;
        let up = symbols::promote_matrix(&q.model, pm, m, m + 1, q.n);
        let diff = up - &q.levels[m + 1].projection;
        let min = linalg::min_eigenvalue(&diff);
        let idem = linalg::projection_residual(&q.levels[m].projection);
        ok &= min >= -1e-9 && idem < 1e-10;
        rep.level(m, (-min).max(0.0)).with("minEigenvalue", num(min)).with("idempotencyResidual", num(idem));
    }
    rep.set_verdict(ok);
    rep
}

/// Tabulates `dim GE_m / n_m` and extrapolates the limit from the leading
/// coefficients of the two Hilbert polynomials fitted on the tail.
pub fn arveson_rank(q: &GradedQuotient, m_max: usize) -> Result<Report> {
    let mut rep = Report::new("arveson_rank");
    let d = q.model.dimension();
    let top = m_max.min(q.m_max());
    let dims: Vec<i64> = q.dims()[..=top].iter().map(|&x| x as i64).collect();
    let hil: Vec<i64> = (0..=top).map(|m| q.model.level_dim(m) as i64).collect();
    for m in 0..=top {
        let ratio = dims[m] as f64 / hil[m] as f64;
        rep.level(m, 0.0).with("ratio", num(ratio)).with("dim", dims[m]).with("hilbert", hil[m]);
    }
    let window = (d + 2).min(top + 1);
    let start = top + 1 - window;
    let pe = fit::interpolate_integer_sequence(start as i64, &dims[start..], d)?;
    let ph = fit::interpolate_integer_sequence(start as i64, &hil[start..], d)?;
    let lim = pe.coeffs.get(d).copied().unwrap_or_default() / ph.coeffs[d];
    let limit = *lim.numer() as f64 / *lim.denom() as f64;
    let ratios: Vec<f64> = (0..=top).map(|m| dims[m] as f64 / hil[m] as f64).collect();
    rep.fit("limit", num(limit))
        .fit("limitExact", format!("{}/{}", lim.numer(), lim.denom()))
        .fit("windowStart", start)
        .fit("ratios", nums(&ratios));
    rep.param("mMax", top).param("d", d);
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundles::BundleSpec;

    fn poly(s: &str, n: usize) -> Polynomial {
        Polynomial::parse(s, n).unwrap()
    }

    #[test]
    fn empty_generators_give_identity() {
        let model = SpaceModel::projective(2);
        let q = GradedQuotient::from_submodule_generators(&model, 2, vec![], 3).unwrap();
        for (m, lv) in q.levels().iter().enumerate() {
            assert_eq!(lv.dim(), 2 * (m + 1));
        }
    }

    #[test]
    fn point_quotient_has_dimension_one() {
        let model = SpaceModel::projective(2);
        let q = GradedQuotient::from_submodule_generators(&model, 1, vec![vec![poly("z2", 2)]], 6).unwrap();
        assert_eq!(q.dims(), vec![1; 7]);
        assert!(coinvariance_certificate(&q).passed());
    }

    #[test]
    fn euler_quotient_dims() {
        let model = SpaceModel::projective(3);
        let gens = vec![vec![poly("z1", 3), poly("z2", 3), poly("z3", 3)]];
        let q = GradedQuotient::from_submodule_generators(&model, 3, gens, 4).unwrap();
        let dims = q.dims();
        assert_eq!(dims[1], 8);
        for m in 1..=4 {
            assert_eq!(dims[m], 3 * model.level_dim(m) - model.level_dim(m - 1));
        }
    }

    #[test]
    fn identity_metric_gives_full_quotient() {
        let model = SpaceModel::projective(2);
        let q = GradedQuotient::from_toeplitz_range(&Symbol::identity(&model, 1), 4).unwrap();
        assert_eq!(q.dims(), vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn line_one_range_and_eigenvalue() {
        let model = SpaceModel::projective(2);
        let metric = BundleSpec::Line(1).metric_symbol(&model).unwrap();
        let q = GradedQuotient::from_toeplitz_range(&metric, 5).unwrap();
        for m in 0..=5 {
            let lv = q.level(m).unwrap();
            assert_eq!(lv.dim(), m + 2);
            let t = metric.toeplitz(m);
            let expect = lv.projection.scale((m as f64 + 1.0) / (m as f64 + 2.0));
            assert!(linalg::max_abs(&(t - expect)) < 1e-12);
        }
        assert!(coinvariance_certificate(&q).passed());
    }

    #[test]
    fn direct_sum_clusters() {
        let model = SpaceModel::projective(2);
        let metric = BundleSpec::DirectSum(vec![BundleSpec::Line(1), BundleSpec::Line(2)])
            .metric_symbol(&model)
            .unwrap();
        let q = GradedQuotient::from_toeplitz_range(&metric, 3).unwrap();
        for m in 0..=3 {
            let mf = m as f64;
            let lv = q.level(m).unwrap();
            let (a, b) = ((mf + 1.0) / (mf + 2.0), (mf + 1.0) / (mf + 3.0));
            assert_eq!(lv.dim(), (m + 2) + (m + 3));
            assert_eq!(lv.retained.iter().filter(|x| (*x - a).abs() < 1e-10).count(), m + 2);
            assert_eq!(lv.retained.iter().filter(|x| (*x - b).abs() < 1e-10).count(), m + 3);
        }
    }

    #[test]
    fn non_coinvariant_sequence_fails() {
        // P_1 = |z1><z1| but P_2 = |z2^2><z2^2| is not below ι(P_1).
        let model = SpaceModel::projective(2);
        let mut p1 = CMat::zeros(2, 2);
        p1[(0, 0)] = linalg::c(1.0);
        let mut p2 = CMat::zeros(3, 3);
        p2[(2, 2)] = linalg::c(1.0);
        let q = GradedQuotient::explicit(&model, 1, vec![linalg::identity(1), p1, p2]).unwrap();
        let rep = coinvariance_certificate(&q);
        assert!(!rep.passed());
        assert!(rep.per_level[1].extra["minEigenvalue"].as_f64().unwrap() < -0.5);
    }

    #[test]
    fn jmath_unital_and_trace_intertwining() {
        let model = SpaceModel::projective(2);
        let metric = BundleSpec::Line(1).metric_symbol(&model).unwrap();
        let q = GradedQuotient::from_toeplitz_range(&metric, 6).unwrap();
        let pl = q.projection(6).unwrap().clone();
        let j = q.jmath(&pl, 6, 2).unwrap();
        assert!(linalg::max_abs(&(j - q.projection(2).unwrap())) < 1e-9);

        let trivial = GradedQuotient::from_submodule_generators(&model, 1, vec![], 6).unwrap();
        let j = trivial.jmath(&linalg::identity(7), 6, 3).unwrap();
        assert!(linalg::max_abs(&(j - linalg::identity(4))) < 1e-12);
    }

    #[test]
    fn compressed_shift_line_one() {
        let model = SpaceModel::projective(2);
        let metric = BundleSpec::Line(1).metric_symbol(&model).unwrap();
        let q = GradedQuotient::from_toeplitz_range(&metric, 5).unwrap();
        for m in 0..5 {
            let s = q.compressed_shift(m).unwrap();
            let mf = m as f64;
            let target = linalg::identity(m + 2).scale((mf + 3.0) / (mf + 2.0));
            assert!(linalg::max_abs(&(s.square() - target)) < 1e-10);
            assert!(linalg::max_abs(&(s.row_sum() - linalg::identity(m + 3))) < 1e-10);
        }
    }

    #[test]
    fn arveson_limits() {
        let model = SpaceModel::projective(2);
        let point = GradedQuotient::from_submodule_generators(&model, 1, vec![vec![poly("z2", 2)]], 8).unwrap();
        assert_eq!(arveson_rank(&point, 8).unwrap().fit_f64("limit"), Some(0.0));

        let cp2 = SpaceModel::projective(3);
        let gens = vec![vec![poly("z1", 3), poly("z2", 3), poly("z3", 3)]];
        let euler = GradedQuotient::from_submodule_generators(&cp2, 3, gens, 6).unwrap();
        assert_eq!(arveson_rank(&euler, 6).unwrap().fit_f64("limit"), Some(2.0));
    }
}
