use graded_quant::bundles::{self, BundleSpec};
use graded_quant::linalg::{self, C64};
use graded_quant::poly::BiPolynomial;
use graded_quant::symbols::Symbol;
use graded_quant::{szego, SpaceModel};

fn binom(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

fn fact(n: u64) -> f64 {
    (1..=n).map(|x| x as f64).product()
}

#[test]
fn hilbert_functions_match_closed_forms() {
    let cases: [(std::sync::Arc<SpaceModel>, fn(u64) -> u64); 4] = [
        (SpaceModel::projective(2), |m| m + 1),
        (SpaceModel::projective(4), |m| binom(m + 3, 3)),
        (SpaceModel::segre11(), |m| (m + 1) * (m + 1)),
        (SpaceModel::veronese_conic(), |m| 2 * m + 1),
    ];
    for (model, f) in cases {
        let got = model.hilbert_function(9);
        let want: Vec<usize> = (0..=9).map(|m| f(m) as usize).collect();
        assert_eq!(got, want);
    }
}

#[test]
fn custom_ideal_dimensions() {
    // z1 z2 = 0 in three variables: monomials of degree m avoiding z1 z2.
    let ideal = vec![graded_quant::poly::Polynomial::parse("z1*z2", 3).unwrap()];
    let model = SpaceModel::custom(3, ideal, None).unwrap();
    let want: Vec<usize> = (0..=6).map(|m| if m == 0 { 1 } else { 2 * m + 1 }).collect();
    assert_eq!(model.hilbert_function(6), want);
}

/// Haar integral of |z_1|^{2a} |z_2|^{2b} on the sphere in C^n.
fn sphere_moment(n: u64, a: u64, b: u64) -> f64 {
    fact(a) * fact(b) * fact(n - 1) / fact(a + b + n - 1)
}

#[test]
fn haar_state_matches_sphere_moments() {
    for n in [2usize, 3, 4] {
        let model = SpaceModel::projective(n);
        for (a, b) in [(1u32, 0u32), (2, 1), (1, 2), (3, 0), (2, 2)] {
            let mut p = BiPolynomial::var(n, 0, false).mul(&BiPolynomial::var(n, 0, true)).pow(a);
            p = p.mul(&BiPolynomial::var(n, 1, false).mul(&BiPolynomial::var(n, 1, true)).pow(b));
            let s = Symbol::from_polynomial(&model, &p).unwrap();
            let got = s.haar_state()[(0, 0)];
            let want = sphere_moment(n as u64, a as u64, b as u64);
            assert!((got - C64::new(want, 0.0)).norm() < 1e-13, "n={n} a={a} b={b}: {got} vs {want}");
        }
    }
}

#[test]
fn toeplitz_of_coordinate_modulus_on_cp1() {
    // T^{(m)}(|z_1|^2) is diagonal with entries (a+1)/(m+2) on e_{(a, m-a)}.
    let cp1 = SpaceModel::projective(2);
    let s = Symbol::parse(&cp1, "z1*conj(z1)").unwrap();
    for m in 0..=6usize {
        let t = s.toeplitz(m);
        let lv = cp1.level(m);
        for (i, alpha) in lv.monomials.iter().enumerate() {
            let a = alpha.exponents()[0] as f64;
            assert!((t[(i, i)] - C64::new((a + 1.0) / (m as f64 + 2.0), 0.0)).norm() < 1e-12);
        }
        assert!(linalg::max_abs(&(&t - linalg::hermitian_part(&t))) < 1e-14);
    }
}

#[test]
fn c_constants_are_exact() {
    let cp2 = SpaceModel::projective(3);
    for m in 1..=6u64 {
        // Line 2: n_m / C(m+4, 2).
        let c = bundles::c_constant(&cp2, &BundleSpec::Line(2), m as usize).unwrap();
        assert_eq!(*c.numer() as u64 * binom(m + 4, 2), binom(m + 2, 2) * *c.denom() as u64);
    }
}

#[test]
fn commutator_traces_on_line_bundles() {
    let cp1 = SpaceModel::projective(2);
    for k in 0..=2usize {
        let q = BundleSpec::Line(k).quotient(&cp1, 7).unwrap();
        for m in 1..=6 {
            let want = (m + k + 2) as f64 / (m + k + 1) as f64 - 1.0;
            assert!((szego::commutator_trace(&q, m).unwrap() - want).abs() < 1e-10);
        }
    }
}

#[test]
fn hilbert_polynomial_of_tangent_twist() {
    let cp2 = SpaceModel::projective(3);
    let seq = BundleSpec::TangentTwist.hilbert_sequence(&cp2, 2, 7).unwrap();
    let want: Vec<i64> = (2..=7i64).map(|m| (m + 1) * (m + 3)).collect();
    assert_eq!(seq, want);
    let fit = bundles::hilbert_poly(2, 2, &seq).unwrap();
    assert_eq!(fit.onset, 2);
}
