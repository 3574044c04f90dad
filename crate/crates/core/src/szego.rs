//! The compressed Toeplitz operator `A_{E,m}`, the levelwise similarity to a
//! spherical isometry, and first-order coefficients of `P_{E,m} - A_{E,m}`.

use crate::error::{Error, Result};
use crate::fit;
use crate::linalg::{self, CMat, C64};
use crate::quotient::GradedQuotient;
use crate::report::{num, nums, Report};
use crate::symbols;

/// `A_{E,m}`: the Toeplitz operator of the metric compressed to `GE_m`, in
/// the level basis.
pub fn ae_operator(q: &GradedQuotient, m: usize) -> Result<CMat> {
    let metric = q.metric().ok_or_else(|| Error::Invalid("A_E needs a quotient built from a metric".into()))?;
    let basis = &q.level(m)?.basis;
    Ok(linalg::hermitian_part(&(basis.adjoint() * metric.toeplitz(m) * basis)))
}

fn checked_sqrt_pair(a: &CMat) -> Result<(CMat, CMat)> {
    let min = linalg::min_eigenvalue(a);
    if min <= 1e-6 {
        return Err(Error::NearSingularA { min_eigenvalue: min });
    }
    Ok((linalg::hermitian_fn(a, f64::sqrt), linalg::hermitian_fn(a, |x| 1.0 / x.sqrt())))
}

/// Weighted compressed shift `T_{E,α} = sqrt(n_m / n_{m+1}) S_{E,α}`.
fn weighted_shift(q: &GradedQuotient, m: usize) -> Result<Vec<CMat>> {
    let model = q.model();
    let w = (model.level_dim(m) as f64 / model.level_dim(m + 1) as f64).sqrt();
    Ok(q.compressed_shift(m)?.blocks.into_iter().map(|b| b.scale(w)).collect())
}

/// `||Σ_α V_α^* V_α - 1||` on `GE_m` for `V_α = A_{m+1}^{1/2} T_{E,α} A_m^{-1/2}`,
/// for `m < mMax`.
pub fn ve_isometry_check(q: &GradedQuotient, m_max: usize) -> Result<Report> {
    if m_max == 0 || m_max > q.m_max() {
        return Err(Error::MissingLevel(m_max));
    }
    let mut rep = Report::new("ve_isometry");
    rep.param("mMax", m_max);
    let mut a_next = checked_sqrt_pair(&ae_operator(q, 0)?)?;
    let mut min_a = f64::INFINITY;
    for m in 0..m_max {
        let a_here = a_next;
        let a1 = ae_operator(q, m + 1)?;
        min_a = min_a.min(linalg::min_eigenvalue(&a1));
        a_next = checked_sqrt_pair(&a1)?;
        let d = q.level(m)?.dim();
        let mut sum = CMat::zeros(d, d);
        for t in weighted_shift(q, m)? {
            let v = &a_next.0 * t * &a_here.1;
            sum += v.adjoint() * v;
        }
        let residual = linalg::op_norm_hermitian(&(sum - linalg::identity(d)));
        rep.level(m, residual);
    }
    rep.fit("minEigenvalueA", num(min_a));
    let ok = rep.max_residual() < 1e-8;
    rep.set_verdict(ok);
    Ok(rep)
}

/// `D_m(x) = c_{E,m} ς^{(m)}(A^{-1/2} (P - A) A^{-1/2})(x)` at each point.
pub fn d_symbol_values(q: &GradedQuotient, m: usize, points: &[Vec<C64>]) -> Result<Vec<CMat>> {
    let level = q.level(m)?;
    let chi = level.dim();
    let a = ae_operator(q, m)?;
    let (_, a_inv_half) = checked_sqrt_pair(&a)?;
    let x = &a_inv_half * (linalg::identity(chi) - &a) * &a_inv_half;
    let rank = crate::balance::metric_rank(q.metric().expect("checked by ae_operator"));
    let c = (q.model().level_dim(m) * rank) as f64 / chi as f64;
    let lifted = &level.basis * x * level.basis.adjoint();
    let lv = q.model().level(m);
    Ok(points
        .iter()
        .map(|z| symbols::evaluate_matrix(&lifted, &lv.eval_basis(z), q.size()).scale(c))
        .collect())
}

/// Scalarizes `D_m` by `tr D_m(x) / rank` over a level range and fits
/// `a_1/m + a_2/m^2` (weights `m^2`) at each sample point.
pub fn hidden_szego(q: &GradedQuotient, m0: usize, m1: usize, points: usize, seed: u64) -> Result<Report> {
    if m1 < m0 + 1 || m0 == 0 {
        return Err(Error::Invalid("hidden_szego needs at least two levels starting at m >= 1".into()));
    }
    let metric = q.metric().ok_or_else(|| Error::Invalid("hidden_szego needs a quotient built from a metric".into()))?;
    let rank = crate::balance::metric_rank(metric).max(1) as f64;
    let pts: Vec<Vec<C64>> = q.model().sample_boundary(points, seed)?.into_iter().map(|p| p.coords().to_vec()).collect();
    let mut series = vec![Vec::new(); pts.len()];
    let mut rep = Report::new("hidden_szego");
    rep.param("m0", m0).param("m1", m1).param("points", points).param("seed", seed);
    let mut herm_max: f64 = 0.0;
    for m in m0..=m1 {
        let vals = d_symbol_values(q, m, &pts)?;
        let mut herm: f64 = 0.0;
        let mut mean = 0.0;
        for (s, v) in series.iter_mut().zip(&vals) {
            herm = herm.max(linalg::max_abs(&(v - v.adjoint())));
            let t = linalg::trace(v).re / rank;
            mean += t;
            s.push(t);
        }
        herm_max = herm_max.max(herm);
        rep.level(m, herm).with("meanTrace", num(mean / pts.len() as f64));
    }
    let ms: Vec<f64> = (m0..=m1).map(|m| m as f64).collect();
    let mut a1 = Vec::with_capacity(pts.len());
    let mut a2 = Vec::with_capacity(pts.len());
    let mut rms: f64 = 0.0;
    for s in &series {
        let (x, y, r) = fit::fit_inverse_powers(&ms, s);
        a1.push(x);
        a2.push(y);
        rms = rms.max(r);
    }
    let mean_a1 = a1.iter().sum::<f64>() / a1.len().max(1) as f64;
    let spread = a1.iter().map(|x| (x - mean_a1).abs()).fold(0.0, f64::max);
    rep.fit("a1", nums(&a1))
        .fit("a2", nums(&a2))
        .fit("meanA1", num(mean_a1))
        .fit("a1Spread", num(spread))
        .fit("fitRms", num(rms))
        .fit("hermitianResidual", num(herm_max));
    rep.set_verdict(herm_max < 1e-10);
    Ok(rep)
}

/// `φ^E_m([S_E^*, S_E]) = φ^E_m(Σ_α S_{E,α}^* S_{E,α} - S_{E,α} S_{E,α}^*)`.
pub fn commutator_trace(q: &GradedQuotient, m: usize) -> Result<f64> {
    if m == 0 {
        return Err(Error::Invalid("the commutator trace needs m >= 1".into()));
    }
    let chi = q.level(m)?.dim();
    if chi == 0 {
        return Err(Error::RankZero);
    }
    let up = q.compressed_shift(m)?.square();
    let down = q.compressed_shift(m - 1)?.row_sum();
    Ok(linalg::trace(&(up - down)).re / chi as f64)
}

/// Commutator traces against `χ(m+1)/χ(m) - 1` over a level range.
pub fn commutator_report(q: &GradedQuotient, m0: usize, m1: usize) -> Result<Report> {
    let mut rep = Report::new("commutator_trace");
    rep.param("m0", m0).param("m1", m1);
    for m in m0.max(1)..=m1 {
        let value = commutator_trace(q, m)?;
        let expected = q.level(m + 1)?.dim() as f64 / q.level(m)?.dim() as f64 - 1.0;
        rep.level(m, (value - expected).abs()).with("value", num(value)).with("expected", num(expected));
    }
    let ok = rep.max_residual() < 1e-9;
    rep.set_verdict(ok);
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundles::BundleSpec;
    use crate::space::SpaceModel;

    #[test]
    fn ae_is_scalar_for_line_bundles() {
        let cp1 = SpaceModel::projective(2);
        for k in 0..=2 {
            let q = BundleSpec::Line(k).quotient(&cp1, 5).unwrap();
            for m in 0..=5 {
                let a = ae_operator(&q, m).unwrap();
                let c = (m + 1) as f64 / (m + k + 1) as f64;
                assert!(linalg::max_abs(&(a - linalg::identity(m + k + 1).scale(c))) < 1e-12);
            }
        }
    }

    #[test]
    fn ve_isometry_line_and_trivial() {
        let cp1 = SpaceModel::projective(2);
        let triv = BundleSpec::Line(0).quotient(&cp1, 6).unwrap();
        let rep = ve_isometry_check(&triv, 6).unwrap();
        assert!(rep.max_residual() < 1e-12);
        let line = BundleSpec::Line(1).quotient(&cp1, 6).unwrap();
        assert!(ve_isometry_check(&line, 6).unwrap().passed());
    }

    #[test]
    fn d_symbol_trace_closed_form() {
        let cp1 = SpaceModel::projective(2);
        for k in 1..=2 {
            let q = BundleSpec::Line(k).quotient(&cp1, 6).unwrap();
            let pts: Vec<Vec<C64>> = cp1.sample_boundary(3, 7).unwrap().into_iter().map(|p| p.coords().to_vec()).collect();
            for m in 1..=6 {
                for v in d_symbol_values(&q, m, &pts).unwrap() {
                    let expect = k as f64 / (m + 1) as f64;
                    assert!((linalg::trace(&v).re - expect).abs() < 1e-10, "k={k} m={m}");
                }
            }
        }
    }

    #[test]
    fn trivial_d_vanishes() {
        let cp1 = SpaceModel::projective(2);
        let q = BundleSpec::Line(0).quotient(&cp1, 4).unwrap();
        let rep = hidden_szego(&q, 1, 4, 3, 1).unwrap();
        assert!(rep.fit_f64("meanA1").unwrap().abs() < 1e-12);
    }

    #[test]
    fn commutator_traces_for_equivariant() {
        let cp2 = SpaceModel::projective(3);
        let q = BundleSpec::Line(1).quotient(&cp2, 5).unwrap();
        assert!(commutator_report(&q, 1, 4).unwrap().passed());
    }
}
