//! Guo- and Gieseker-type comparisons between a graded quotient and one of
//! its quotients.

use num_rational::Ratio;
use num_traits::{Signed, Zero};
use serde_json::json;

use crate::bundles::hilbert_poly;
use crate::error::{Error, Result};
use crate::fit::{RationalPoly, Q};
use crate::linalg::{self, C64};
use crate::quotient::GradedQuotient;
use crate::report::{num, Report};

fn ratio_str(r: &Ratio<i64>) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

fn q_str(r: &Q) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

fn same_frame(e: &GradedQuotient, f: &GradedQuotient) -> Result<()> {
    if !std::sync::Arc::ptr_eq(e.model(), f.model()) {
        return Err(Error::ModelMismatch);
    }
    if e.size() != f.size() {
        return Err(Error::Shape(format!("N = {} for E but {} for F", e.size(), f.size())));
    }
    Ok(())
}

/// `||(1 - P_{E,m}) P_{F,m}||`.
pub fn containment_residual(e: &GradedQuotient, f: &GradedQuotient, m: usize) -> Result<f64> {
    let pe = e.projection(m)?;
    let pf = f.projection(m)?;
    Ok(linalg::op_norm(&(pf - pe * pf)))
}

/// Ratios `r(m) = dim GF_m / dim GE_m`, monotonicity verdict, and the
/// certificates `ȷ^E_{l,m}(P_{F,l}) ⪯ P_{F,m}` with trace intertwining for
/// every pair `m <= l` in the range.
pub fn guo_check(e: &GradedQuotient, f: &GradedQuotient, m0: usize, m1: usize) -> Result<Report> {
    same_frame(e, f)?;
    if m1 < m0 {
        return Err(Error::Invalid("empty level range".into()));
    }
    let mut ratios = Vec::new();
    for m in m0..=m1 {
        let residual = containment_residual(e, f, m)?;
        if residual > 1e-9 {
            return Err(Error::Containment { m, residual });
        }
        let de = e.level(m)?.dim();
        if de == 0 {
            return Err(Error::RankZero);
        }
        ratios.push(Ratio::new(f.level(m)?.dim() as i64, de as i64));
    }

    let mut weak = true;
    let mut strict = true;
    for i in 0..ratios.len() {
        for j in i + 1..ratios.len() {
            weak &= ratios[i] >= ratios[j];
            strict &= ratios[i] > ratios[j];
        }
    }
    let constant = ratios.windows(2).all(|w| w[0] == w[1]);

    let mut rep = Report::new("guo_check");
    rep.param("m0", m0).param("m1", m1);
    let mut certificates = Vec::new();
    let mut min_eig = f64::INFINITY;
    let mut max_trace_err: f64 = 0.0;
    for m in m0..=m1 {
        let pf_m = f.projection(m)?;
        let mut level_min = f64::INFINITY;
        for l in m..=m1 {
            let j = e.jmath(f.projection(l)?, l, m)?;
            let gap = linalg::min_eigenvalue(&linalg::hermitian_part(&(pf_m - &j)));
            let lhs = e.normalized_trace(&j, m)?;
            let rhs = ratios[l - m0];
            let rhs = C64::new(*rhs.numer() as f64 / *rhs.denom() as f64, 0.0);
            let trace_err = (lhs - rhs).norm();
            level_min = level_min.min(gap);
            max_trace_err = max_trace_err.max(trace_err);
            certificates.push(json!({"m": m, "l": l, "minEigenvalue": num(gap), "traceError": num(trace_err)}));
        }
        min_eig = min_eig.min(level_min);
        let r = &ratios[m - m0];
        rep.level(m, (-level_min).max(0.0))
            .with("ratio", ratio_str(r))
            .with("ratioValue", num(*r.numer() as f64 / *r.denom() as f64))
            .with("dimE", e.level(m)?.dim())
            .with("dimF", f.level(m)?.dim());
    }
    let psd_ok = min_eig >= -1e-9;
    let trace_ok = max_trace_err < 1e-10;
    let guo = if !weak {
        "FAIL"
    } else if strict {
        "STRICT"
    } else if constant {
        "EQUALITY"
    } else {
        "WEAK"
    };
    rep.fit("guo", guo)
        .fit("subbundle", constant)
        .fit("psdCertificates", psd_ok)
        .fit("minCertificateEigenvalue", num(min_eig))
        .fit("maxTraceError", num(max_trace_err))
        .fit("certificates", serde_json::Value::Array(certificates));
    // The certificates imply monotonicity, so a mismatch flags a bug.
    rep.fit("consistent", !psd_ok || weak);
    rep.set_verdict(weak && psd_ok && trace_ok);
    Ok(rep)
}

/// `P(m) / rank` for a Hilbert polynomial, with the rank read off against
/// the Hilbert polynomial of the structure sheaf.
fn reduced(p: &RationalPoly, structure: &RationalPoly, d: usize) -> Result<(Vec<Q>, Q)> {
    let lead = |x: &RationalPoly| x.coeffs.get(d).copied().unwrap_or_else(Q::zero);
    let rank = lead(p) / lead(structure);
    if rank.is_zero() {
        return Err(Error::RankZero);
    }
    let mut coeffs = p.coeffs.clone();
    coeffs.resize(d + 1, Q::zero());
    Ok((coeffs.into_iter().map(|c| c / rank).collect(), rank))
}

/// Compares the reduced Hilbert polynomials `χ(F(m))/rank F` and
/// `χ(E(m))/rank E` fitted on the level range. The inequality
/// `χ(F(m))/rank F >= χ(E(m))/rank E` for large `m` passes.
pub fn gieseker_table(e: &GradedQuotient, f: &GradedQuotient, m0: usize, m1: usize) -> Result<Report> {
    if !std::sync::Arc::ptr_eq(e.model(), f.model()) {
        return Err(Error::ModelMismatch);
    }
    let model = e.model();
    let d = model.dimension();
    let dims = |q: &GradedQuotient| -> Result<Vec<i64>> { (m0..=m1).map(|m| Ok(q.level(m)?.dim() as i64)).collect() };
    let structure: Vec<i64> = (m0..=m1).map(|m| model.level_dim(m) as i64).collect();
    let he = hilbert_poly(d, m0, &dims(e)?)?;
    let hf = hilbert_poly(d, m0, &dims(f)?)?;
    let ho = hilbert_poly(d, m0, &structure)?;
    let (pe, rank_e) = reduced(&he.poly, &ho.poly, d)?;
    let (pf, rank_f) = reduced(&hf.poly, &ho.poly, d)?;
    let diff: Vec<Q> = pf.iter().zip(&pe).map(|(a, b)| a - b).collect();
    let direction = match diff.iter().rev().find(|c| !c.is_zero()) {
        None => "EQUAL",
        Some(c) if c.is_negative() => "LESS",
        Some(_) => "GREATER",
    };

    let mut rep = Report::new("gieseker_table");
    rep.param("m0", m0).param("m1", m1);
    let to_f = |x: &Q| *x.numer() as f64 / *x.denom() as f64;
    let eval = |c: &[Q], m: usize| c.iter().rev().fold(Q::zero(), |acc, x| acc * Q::from_integer(m as i128) + x);
    for m in m0..=m1 {
        let (a, b) = (eval(&pf, m), eval(&pe, m));
        rep.level(m, 0.0)
            .with("reducedF", q_str(&a))
            .with("reducedE", q_str(&b))
            .with("difference", num(to_f(&(a - b))));
    }
    let strs = |c: &[Q]| serde_json::Value::Array(c.iter().map(|x| q_str(x).into()).collect());
    rep.fit("direction", direction)
        .fit("reducedPolyE", strs(&pe))
        .fit("reducedPolyF", strs(&pf))
        .fit("rankE", q_str(&rank_e))
        .fit("rankF", q_str(&rank_f))
        .fit("onsetE", he.onset)
        .fit("onsetF", hf.onset);
    rep.fit("strict", direction == "GREATER");
    rep.set_verdict(direction != "LESS");
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundles::BundleSpec;
    use crate::linalg::CMat;
    use crate::poly::Polynomial;
    use crate::space::SpaceModel;

    fn point_quotient(model: &std::sync::Arc<SpaceModel>, m_max: usize) -> GradedQuotient {
        let gens = vec![vec![Polynomial::parse("z2", 2).unwrap()]];
        GradedQuotient::from_submodule_generators(model, 1, gens, m_max).unwrap()
    }

    #[test]
    fn trivial_over_point_is_strict() {
        let cp1 = SpaceModel::projective(2);
        let e = BundleSpec::Line(0).quotient(&cp1, 8).unwrap();
        let f = point_quotient(&cp1, 8);
        let rep = guo_check(&e, &f, 2, 8).unwrap();
        assert!(rep.passed(), "{}", rep.to_json());
        assert_eq!(rep.fit["guo"], "STRICT");
        for (i, lv) in rep.per_level.iter().enumerate() {
            assert_eq!(lv.extra["ratio"], format!("1/{}", i + 3));
        }
    }

    #[test]
    fn equal_quotients_give_equality() {
        let cp1 = SpaceModel::projective(2);
        let e = BundleSpec::Line(1).quotient(&cp1, 5).unwrap();
        let rep = guo_check(&e, &e, 1, 5).unwrap();
        assert!(rep.passed());
        assert_eq!(rep.fit["guo"], "EQUALITY");
        let g = gieseker_table(&e, &e, 1, 5).unwrap();
        assert_eq!(g.fit["direction"], "EQUAL");
    }

    #[test]
    fn summand_of_trivial_rank_two() {
        let cp1 = SpaceModel::projective(2);
        let e = GradedQuotient::from_submodule_generators(&cp1, 2, vec![], 6).unwrap();
        let gens = vec![vec![Polynomial::zero(2), Polynomial::parse("1", 2).unwrap()]];
        let f = GradedQuotient::from_submodule_generators(&cp1, 2, gens, 6).unwrap();
        let rep = guo_check(&e, &f, 1, 6).unwrap();
        assert!(rep.passed());
        assert_eq!(rep.fit["guo"], "EQUALITY");
        assert_eq!(rep.fit["subbundle"], true);
    }

    #[test]
    fn containment_violation_is_an_error() {
        let cp1 = SpaceModel::projective(2);
        let e = point_quotient(&cp1, 4);
        let f = BundleSpec::Line(0).quotient(&cp1, 4).unwrap();
        assert!(matches!(guo_check(&e, &f, 1, 4), Err(Error::Containment { .. })));
    }

    #[test]
    fn gieseker_direct_sum_over_trivial_summand() {
        let cp1 = SpaceModel::projective(2);
        let spec = BundleSpec::DirectSum(vec![BundleSpec::Line(0), BundleSpec::Line(1)]);
        let e = spec.quotient(&cp1, 8).unwrap();
        let projections: Vec<CMat> = (0..=8)
            .map(|m| {
                let mut p = CMat::zeros(3 * (m + 1), 3 * (m + 1));
                for a in 0..=m {
                    p[(3 * a, 3 * a)] = C64::new(1.0, 0.0);
                }
                p
            })
            .collect();
        let f = GradedQuotient::explicit(&cp1, 3, projections).unwrap();
        let rep = gieseker_table(&e, &f, 2, 8).unwrap();
        assert_eq!(rep.fit["direction"], "LESS");
        assert_eq!(rep.fit["reducedPolyF"], json!(["1/1", "1/1"]));
        assert_eq!(rep.fit["reducedPolyE"], json!(["3/2", "1/1"]));
        assert!(!rep.passed());
        // r(m) = (m+1)/(2m+3) increases, and the certificates fail with it.
        let guo = guo_check(&e, &f, 2, 8).unwrap();
        assert!(!guo.passed());
        assert_eq!(guo.fit["guo"], "FAIL");
        assert_eq!(guo.fit["psdCertificates"], false);
    }

    #[test]
    fn gieseker_tangent_twist_against_line() {
        let cp2 = SpaceModel::projective(3);
        let e = BundleSpec::TangentTwist.quotient(&cp2, 7).unwrap();
        let f = BundleSpec::Line(1).quotient(&cp2, 7).unwrap();
        let rep = gieseker_table(&e, &f, 2, 7).unwrap();
        // (m+1)(m+3)/2 against (m+2)(m+3)/2
        assert_eq!(rep.fit["reducedPolyE"], json!(["3/2", "2/1", "1/2"]));
        assert_eq!(rep.fit["reducedPolyF"], json!(["3/1", "5/2", "1/2"]));
        assert_eq!(rep.fit["direction"], "GREATER");
        assert!(rep.passed());
        assert_eq!(rep.fit["strict"], true);
    }
}
