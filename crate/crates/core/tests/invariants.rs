use std::sync::Arc;

use graded_quant::balance::{self, Quadrature, TmapProblem};
use graded_quant::bundles::BundleSpec;
use graded_quant::cowen_douglas as cd;
use graded_quant::linalg::{self, CMat, C64};
use graded_quant::poly::Polynomial;
use graded_quant::quotient::{self, GradedQuotient};
use graded_quant::symbols::Symbol;
use graded_quant::{shifts, SpaceModel};
use proptest::prelude::*;

fn model(idx: usize) -> Arc<SpaceModel> {
    match idx % 4 {
        0 => SpaceModel::projective(2),
        1 => SpaceModel::projective(3),
        2 => SpaceModel::segre11(),
        _ => SpaceModel::veronese_conic(),
    }
}

fn matrix_from(entries: &[(f64, f64)], size: usize) -> CMat {
    CMat::from_fn(size, size, |i, j| {
        let (re, im) = entries[(i * size + j) % entries.len()];
        C64::new(re, im + 0.1 * (i as f64 - j as f64))
    })
}

fn entries() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 8..40)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn shift_row_and_column_sums(idx in 0usize..4, m in 0usize..7) {
        let model = model(idx);
        let blocks = model.shift_matrices(m);
        let (nm, nm1) = (model.level_dim(m), model.level_dim(m + 1));
        let row = shifts::row_sum(&blocks) - linalg::identity(nm1);
        let col = shifts::phi_star_identity(&blocks) - linalg::identity(nm).scale(nm1 as f64 / nm as f64);
        prop_assert!(linalg::op_norm(&row) < 1e-10);
        prop_assert!(linalg::op_norm(&col) < 1e-9);
    }

    #[test]
    fn promotion_preserves_values(idx in 0usize..4, k in 0usize..3, extra in 1usize..3, e in entries(), seed in 0u64..1000) {
        let model = model(idx);
        let nk = model.level_dim(k);
        let s = Symbol::new(&model, k, 1, matrix_from(&e, nk)).unwrap();
        let p = s.promote(k + extra).unwrap();
        for pt in model.sample_boundary(3, seed).unwrap() {
            let diff = s.evaluate(&pt).unwrap() - p.evaluate(&pt).unwrap();
            prop_assert!(linalg::max_abs(&diff) < 1e-10);
        }
    }

    #[test]
    fn product_and_adjoint_are_pointwise(idx in 0usize..4, ka in 0usize..3, kb in 0usize..3, e in entries(), seed in 0u64..1000) {
        let model = model(idx);
        let a = Symbol::new(&model, ka, 1, matrix_from(&e, model.level_dim(ka))).unwrap();
        let rev: Vec<_> = e.iter().rev().copied().collect();
        let b = Symbol::new(&model, kb, 1, matrix_from(&rev, model.level_dim(kb))).unwrap();
        let ab = a.mul(&b).unwrap();
        for pt in model.sample_boundary(3, seed).unwrap() {
            let (va, vb) = (a.evaluate(&pt).unwrap(), b.evaluate(&pt).unwrap());
            prop_assert!(linalg::max_abs(&(ab.evaluate(&pt).unwrap() - &va * &vb)) < 1e-10);
            prop_assert!(linalg::max_abs(&(a.adjoint().evaluate(&pt).unwrap() - va.adjoint())) < 1e-12);
        }
    }

    #[test]
    fn toeplitz_of_square_modulus_is_positive(idx in 0usize..4, k in 0usize..3, m in 0usize..4, e in entries()) {
        let model = model(idx);
        let a = Symbol::new(&model, k, 1, matrix_from(&e, model.level_dim(k))).unwrap();
        let t = a.adjoint().mul(&a).unwrap().toeplitz(m);
        prop_assert!(linalg::max_abs(&(&t - t.adjoint())) < 1e-10);
        prop_assert!(linalg::min_eigenvalue(&t) > -1e-10);
    }

    #[test]
    fn toeplitz_range_projections_shrink_under_promotion(idx in 0usize..2, k in 1usize..3) {
        let model = model(idx);
        let q = BundleSpec::Line(k).quotient(&model, 5).unwrap();
        prop_assert!(quotient::coinvariance_certificate(&q).passed());
        for m in 0..=5 {
            prop_assert!(linalg::projection_residual(q.projection(m).unwrap()) < 1e-10);
        }
    }

    #[test]
    fn fiber_rank_is_constant_on_the_ball(idx in 0usize..4, r in 0.05f64..0.95, seed in 0u64..1000, m in 1usize..4) {
        let model = model(idx);
        let q = BundleSpec::Line(1).quotient(&model, 3).unwrap();
        let v = model.sample_boundary(1, seed).unwrap()[0].scaled(r);
        let f = cd::fiber(&q, m, &v).unwrap();
        prop_assert_eq!(f.rank(), 1);
        prop_assert!(f.residual < 1e-9);
    }

    #[test]
    fn point_quotient_fiber_lives_on_the_axis(re in -0.9f64..0.9, im in -0.3f64..0.3, off in 0.01f64..0.3) {
        let cp1 = SpaceModel::projective(2);
        let gens = vec![vec![Polynomial::parse("z2", 2).unwrap()]];
        let q = GradedQuotient::from_submodule_generators(&cp1, 1, gens, 5).unwrap();
        let scale = 0.9 / (re * re + im * im + off * off).sqrt().max(0.9);
        let on = [C64::new(re, im) * scale, C64::new(0.0, 0.0)];
        let away = [C64::new(re, im) * scale, C64::new(off * scale, 0.0)];
        if re.abs() + im.abs() > 1e-3 {
            prop_assert_eq!(cd::fiber(&q, 5, &on).unwrap().rank(), 1);
        }
        prop_assert_eq!(cd::fiber(&q, 5, &away).unwrap().rank(), 0);
    }

    #[test]
    fn tmap_keeps_metrics_positive(seed in 0u64..500, m in 2usize..4) {
        let cp1 = SpaceModel::projective(2);
        let q = BundleSpec::Line(1).quotient(&cp1, m).unwrap();
        let problem = TmapProblem::new(&q, m, Quadrature { samples: 400, seed }).unwrap();
        let g = balance::random_start(problem.dim(), seed);
        let (next, singular) = problem.apply_normalized(&g).unwrap();
        prop_assert!(singular.is_empty());
        prop_assert!(linalg::min_eigenvalue(&next) > 0.0);
        prop_assert!(linalg::max_abs(&(&next - next.adjoint())) < 1e-12);
        let tr = linalg::trace(&next).re / problem.dim() as f64;
        prop_assert!((tr - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kernel_truncation_is_within_bound(idx in 0usize..4, s1 in 0u64..500, s2 in 0u64..500, r in 0.1f64..0.85, trunc in 4usize..14) {
        let model = model(idx);
        let z = model.sample_boundary(1, s1).unwrap()[0].scaled(r);
        let w = model.sample_boundary(1, s2 + 1000).unwrap()[0].scaled(r);
        let inner: C64 = z.iter().zip(&w).map(|(a, b)| a * b.conj()).sum();
        let exact = C64::new(1.0, 0.0) / (C64::new(1.0, 0.0) - inner);
        let err = (cd::kernel_eval(&model, &z, &w, trunc).unwrap() - exact).norm();
        prop_assert!(err <= cd::kernel_truncation_bound(&z, &w, trunc) + 1e-12);
    }
}
