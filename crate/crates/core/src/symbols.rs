//! Matrix-valued symbols in inductive-limit form.
//!
//! A symbol at level `k` with matrix size `N` is an operator `A` on
//! `GH_k ⊗ C^N` (index `a * N + i`) standing for the function
//! `ζ -> (K_ζ^* ⊗ 1) A (K_ζ ⊗ 1)`, where `K_ζ = conj(ψ(ζ))` is the level
//! kernel vector. In particular `|ψ_a><ψ_b|` is the function `ψ_a conj(ψ_b)`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, C64, ZERO};
use crate::poly::BiPolynomial;
use crate::report::{num, Report};
use crate::space::{BoundaryPoint, SpaceModel};

#[derive(Debug, Clone)]
pub struct Symbol {
    model: Arc<SpaceModel>,
    level: usize,
    n: usize,
    matrix: CMat,
}

impl Symbol {
    pub fn new(model: &Arc<SpaceModel>, level: usize, n: usize, matrix: CMat) -> Result<Self> {
        let size = model.level_dim(level) * n;
        if matrix.nrows() != size || matrix.ncols() != size {
            return Err(Error::Shape(format!(
                "symbol at level {level} with N={n} needs {size}x{size}, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(Symbol { model: model.clone(), level, n, matrix })
    }

    /// The constant `1_N`.
    pub fn identity(model: &Arc<SpaceModel>, n: usize) -> Self {
        Symbol { model: model.clone(), level: 0, n, matrix: linalg::identity(n) }
    }

    /// Scalar symbol from a polynomial in `z` and `conj(z)` whose terms all
    /// have equal holomorphic and antiholomorphic degree.
    pub fn from_polynomial(model: &Arc<SpaceModel>, p: &BiPolynomial) -> Result<Self> {
        if p.nvars() != model.n() {
            return Err(Error::VariableCount { expected: model.n(), found: p.nvars() });
        }
        let top = p.terms().map(|(a, _, _)| a.degree()).max().unwrap_or(0);
        let mut acc = Symbol { model: model.clone(), level: top, n: 1, matrix: CMat::zeros(model.level_dim(top), model.level_dim(top)) };
        for (alpha, beta, coef) in p.terms() {
            let k = alpha.degree();
            if beta.degree() != k {
                return Err(Error::Invalid(format!("term {alpha}*conj({beta}) has unbalanced bidegree")));
            }
            let u = monomial_vector(model, alpha);
            let v = monomial_vector(model, beta);
            let term = Symbol { model: model.clone(), level: k, n: 1, matrix: (&u * v.adjoint()).scale(1.0) * *coef };
            acc.matrix += term.promote(top)?.matrix;
        }
        Ok(acc)
    }

    /// Matrix-valued symbol from an `N x N` array of scalar polynomials.
    pub fn from_matrix_polynomials(model: &Arc<SpaceModel>, entries: &[Vec<BiPolynomial>]) -> Result<Self> {
        let n = entries.len();
        if entries.iter().any(|row| row.len() != n) {
            return Err(Error::Shape("matrix symbol entries must form a square array".into()));
        }
        let scalars = entries
            .iter()
            .map(|row| row.iter().map(|p| Self::from_polynomial(model, p)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        let level = scalars.iter().flatten().map(|s| s.level).max().unwrap_or(0);
        let nk = model.level_dim(level);
        let mut a = CMat::zeros(nk * n, nk * n);
        for (i, row) in scalars.iter().enumerate() {
            for (j, s) in row.iter().enumerate() {
                let sm = s.promote(level)?;
                for p in 0..nk {
                    for q in 0..nk {
                        a[(p * n + i, q * n + j)] = sm.matrix[(p, q)];
                    }
                }
            }
        }
        Ok(Symbol { model: model.clone(), level, n, matrix: a })
    }

    /// Parses a scalar symbol literal such as `z1*conj(z1)`.
    pub fn parse(model: &Arc<SpaceModel>, src: &str) -> Result<Self> {
        let p = BiPolynomial::parse(src, model.n())?;
        Self::from_polynomial(model, &p)
    }

    pub fn model(&self) -> &Arc<SpaceModel> {
        &self.model
    }

    pub fn level(&self) -> usize {
        self.level
    }

    /// Matrix size `N` of the values.
    pub fn size(&self) -> usize {
        self.n
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn is_hermitian(&self) -> bool {
        linalg::max_abs(&(&self.matrix - self.matrix.adjoint())) < 1e-12
    }

    pub fn adjoint(&self) -> Symbol {
        Symbol { matrix: self.matrix.adjoint(), ..self.clone() }
    }

    pub fn scale(&self, s: C64) -> Symbol {
        Symbol { matrix: &self.matrix * s, ..self.clone() }
    }

    fn check_model(&self, other: &Symbol) -> Result<()> {
        if Arc::ptr_eq(&self.model, &other.model) {
            Ok(())
        } else {
            Err(Error::ModelMismatch)
        }
    }

    /// Sum of two symbols with the same `N`, at the larger level.
    pub fn add(&self, other: &Symbol) -> Result<Symbol> {
        self.check_model(other)?;
        if self.n != other.n {
            return Err(Error::Shape(format!("N mismatch {} vs {}", self.n, other.n)));
        }
        let l = self.level.max(other.level);
        let (a, b) = (self.promote(l)?, other.promote(l)?);
        Ok(Symbol { matrix: a.matrix + b.matrix, ..a })
    }

    /// Same function at level `l >= level`:
    /// `ι_{k,l}(A) = (V_{k,l}^* ⊗ 1)(A ⊗ 1_{l-k})(V_{k,l} ⊗ 1)`.
    pub fn promote(&self, l: usize) -> Result<Symbol> {
        if l < self.level {
            return Err(Error::Invalid(format!("cannot promote level {} down to {l}", self.level)));
        }
        if l == self.level {
            return Ok(self.clone());
        }
        let matrix = promote_matrix(&self.model, &self.matrix, self.level, l, self.n);
        Ok(Symbol { model: self.model.clone(), level: l, n: self.n, matrix })
    }

    /// Pointwise product at level `k_a + k_b`.
    pub fn mul(&self, other: &Symbol) -> Result<Symbol> {
        self.check_model(other)?;
        if self.n != other.n {
            return Err(Error::Shape(format!("N mismatch {} vs {}", self.n, other.n)));
        }
        let (ka, kb, n) = (self.level, other.level, self.n);
        let l = ka + kb;
        let model = &self.model;
        let (na, nb) = (model.level_dim(ka), model.level_dim(kb));
        // X = A_13 B_23 on GH_ka ⊗ GH_kb ⊗ C^N, index (a * nb + b) * N + i.
        let size = na * nb * n;
        let mut x = CMat::zeros(size, size);
        let idx = |a: usize, b: usize, i: usize| (a * nb + b) * n + i;
        for a in 0..na {
            for a2 in 0..na {
                for b in 0..nb {
                    for b2 in 0..nb {
                        for i in 0..n {
                            for j in 0..n {
                                let mut acc = ZERO;
                                for t in 0..n {
                                    acc += self.matrix[(a * n + i, a2 * n + t)] * other.matrix[(b * n + t, b2 * n + j)];
                                }
                                x[(idx(a, b, i), idx(a2, b2, j))] = acc;
                            }
                        }
                    }
                }
            }
        }
        let v = model.embedding(ka, l);
        let vn = linalg::kron(&v, &linalg::identity(n));
        let matrix = vn.adjoint() * x * &vn;
        Ok(Symbol { model: model.clone(), level: l, n, matrix })
    }

    /// Value at a boundary point.
    pub fn evaluate(&self, point: &BoundaryPoint) -> Result<CMat> {
        let z = point.coords();
        if z.len() != self.model.n() {
            return Err(Error::VariableCount { expected: self.model.n(), found: z.len() });
        }
        let res = self.model.generator_residual(z);
        if res > 1e-10 {
            return Err(Error::OffVariety { norm_defect: 0.0, generator_residual: res });
        }
        Ok(self.evaluate_coords(z))
    }

    /// `(K^* ⊗ 1) A (K ⊗ 1)` at arbitrary coordinates, without checks.
    pub fn evaluate_coords(&self, z: &[C64]) -> CMat {
        let psi = self.model.level(self.level).eval_basis(z);
        evaluate_matrix(&self.matrix, &psi, self.n)
    }

    /// `(φ_k ⊗ id)(A)`: normalized partial trace over `GH_k`.
    pub fn haar_state(&self) -> CMat {
        let nk = self.model.level_dim(self.level);
        linalg::partial_trace_first(&self.matrix, nk).unscale(nk as f64)
    }

    /// Compression of multiplication by the symbol to `GH_m ⊗ C^N`.
    pub fn toeplitz(&self, m: usize) -> CMat {
        toeplitz_matrix(&self.model, &self.matrix, self.level, self.n, m)
    }

    /// `ς^{(m)} ∘ T^{(m)}`.
    pub fn berezin_transform(&self, m: usize) -> Symbol {
        covariant_symbol(&self.model, self.toeplitz(m), m, self.n)
    }

    /// Block-diagonal sum over `C^{N1} ⊕ C^{N2}` at the larger level.
    pub fn direct_sum(&self, other: &Symbol) -> Result<Symbol> {
        self.check_model(other)?;
        let l = self.level.max(other.level);
        let (a, b) = (self.promote(l)?, other.promote(l)?);
        let nl = self.model.level_dim(l);
        let (n1, n2) = (self.n, other.n);
        let n = n1 + n2;
        let mut m = CMat::zeros(nl * n, nl * n);
        for p in 0..nl {
            for q in 0..nl {
                for i in 0..n1 {
                    for j in 0..n1 {
                        m[(p * n + i, q * n + j)] = a.matrix[(p * n1 + i, q * n1 + j)];
                    }
                }
                for i in 0..n2 {
                    for j in 0..n2 {
                        m[(p * n + n1 + i, q * n + n1 + j)] = b.matrix[(p * n2 + i, q * n2 + j)];
                    }
                }
            }
        }
        Ok(Symbol { model: self.model.clone(), level: l, n, matrix: m })
    }
}

/// The symbol whose matrix is `x`, an operator on `GH_m ⊗ C^N`.
pub fn covariant_symbol(model: &Arc<SpaceModel>, x: CMat, m: usize, n: usize) -> Symbol {
    Symbol { model: model.clone(), level: m, n, matrix: x }
}

/// Coordinates of the function `z^alpha` restricted to the variety in the
/// orthonormal basis of its level.
pub fn monomial_vector(model: &SpaceModel, alpha: &crate::poly::MultiIndex) -> CMat {
    let level = model.level(alpha.degree());
    let i = level.monomials.iter().position(|g| g == alpha).expect("monomial of this degree");
    let w = level.weights[i].sqrt();
    let row = level.basis.row(i).map(|x| x.conj() * w);
    CMat::from_iterator(level.dim(), 1, row.iter().copied())
}

/// `Σ_{ab} ψ_a A[(a,i),(b,j)] conj(ψ_b)`.
pub fn evaluate_matrix(a: &CMat, psi: &crate::linalg::CVec, n: usize) -> CMat {
    let nk = psi.len();
    CMat::from_fn(n, n, |i, j| {
        let mut acc = ZERO;
        for p in 0..nk {
            if psi[p] == ZERO {
                continue;
            }
            let mut inner = ZERO;
            for q in 0..nk {
                inner += a[(p * n + i, q * n + j)] * psi[q].conj();
            }
            acc += psi[p] * inner;
        }
        acc
    })
}

/// Column `r` of `V_{k,l}` reshaped to an `n_k x n_{l-k}` matrix.
fn embedding_slices(v: &CMat, nk: usize, nj: usize) -> Vec<CMat> {
    (0..v.ncols())
        .map(|r| CMat::from_fn(nk, nj, |p, x| v[(p * nj + x, r)]))
        .collect()
}

pub(crate) fn promote_matrix(model: &SpaceModel, a: &CMat, k: usize, l: usize, n: usize) -> CMat {
    let v = model.embedding(k, l);
    let (nk, nj, nl) = (model.level_dim(k), model.level_dim(l - k), model.level_dim(l));
    // Rows of V for fixed second index b: V_b (n_k x n_l).
    let vb: Vec<CMat> = (0..nj)
        .map(|b| CMat::from_fn(nk, nl, |p, c| v[(p * nj + b, c)]))
        .collect();
    let mut out = CMat::zeros(nl * n, nl * n);
    for i in 0..n {
        for j in 0..n {
            let aij = CMat::from_fn(nk, nk, |p, q| a[(p * n + i, q * n + j)]);
            let mut blk = CMat::zeros(nl, nl);
            for vm in &vb {
                blk += vm.adjoint() * (&aij * vm);
            }
            for c in 0..nl {
                for d in 0..nl {
                    out[(c * n + i, d * n + j)] = blk[(c, d)];
                }
            }
        }
    }
    out
}

pub(crate) fn toeplitz_matrix(model: &SpaceModel, a: &CMat, k: usize, n: usize, m: usize) -> CMat {
    let (nk, nm, nkm) = (model.level_dim(k), model.level_dim(m), model.level_dim(k + m));
    let v = model.embedding(k, k + m);
    let slices = embedding_slices(&v, nk, nm);
    let scale = nm as f64 / nkm as f64;
    let mut out = CMat::zeros(nm * n, nm * n);
    // T[(a,i),(b,j)] = c Σ_r (W_r^* A_ij W_r)[b,a].
    for i in 0..n {
        for j in 0..n {
            let aij = CMat::from_fn(nk, nk, |p, q| a[(p * n + i, q * n + j)]);
            if aij.iter().all(|x| *x == ZERO) {
                continue;
            }
            let mut blk = CMat::zeros(nm, nm);
            for w in &slices {
                blk += w.adjoint() * (&aij * w);
            }
            for p in 0..nm {
                for q in 0..nm {
                    out[(p * n + i, q * n + j)] = blk[(q, p)] * scale;
                }
            }
        }
    }
    out
}

/// A standard complex Gaussian matrix.
pub fn random_matrix(rng: &mut impl rand::Rng, rows: usize, cols: usize) -> CMat {
    use rand_distr::{Distribution, StandardNormal};
    CMat::from_fn(rows, cols, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        C64::new(re, im)
    })
}

/// Unitality `T^{(m)}(1) = 1`, the adjointness
/// `φ_m(T^{(m)}(f) X) = ω(f ς^{(m)}(X))` on random scalar pairs with `f` at
/// level `m`, and hermiticity of Toeplitz operators of hermitian symbols.
pub fn calculus_report(model: &Arc<SpaceModel>, m0: usize, m1: usize, pairs: usize, seed: u64) -> Report {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut rep = Report::new("toeplitz_calculus");
    rep.param("m0", m0).param("m1", m1).param("pairs", pairs).param("seed", seed);
    let one = Symbol::identity(model, 1);
    let mut worst_adj: f64 = 0.0;
    for m in m0..=m1 {
        let nm = model.level_dim(m);
        let unit = linalg::max_abs(&(one.toeplitz(m) - linalg::identity(nm)));
        let mut adj: f64 = 0.0;
        let mut herm: f64 = 0.0;
        for _ in 0..pairs {
            let f = Symbol { model: model.clone(), level: m, n: 1, matrix: random_matrix(&mut rng, nm, nm) };
            let x = random_matrix(&mut rng, nm, nm);
            let lhs = linalg::trace(&(f.toeplitz(m) * &x)) / nm as f64;
            let prod = f.mul(&covariant_symbol(model, x, m, 1)).expect("same model");
            adj = adj.max((lhs - prod.haar_state()[(0, 0)]).norm());
            let h = linalg::hermitian_part(&f.matrix);
            let t = toeplitz_matrix(model, &h, m, 1, m);
            herm = herm.max(linalg::max_abs(&(&t - t.adjoint())));
        }
        worst_adj = worst_adj.max(adj);
        rep.level(m, unit.max(adj))
            .with("unitality", num(unit))
            .with("adjointness", num(adj))
            .with("hermiticity", num(herm));
    }
    rep.fit("maxAdjointness", num(worst_adj));
    let ok = rep.max_residual() < 1e-10;
    rep.set_verdict(ok);
    rep
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;

    fn cp1() -> Arc<SpaceModel> {
        SpaceModel::projective(2)
    }

    fn point(model: &Arc<SpaceModel>, z: &[f64]) -> BoundaryPoint {
        model.boundary_point(z.iter().map(|&x| c(x)).collect()).unwrap()
    }

    #[test]
    fn modulus_square_promotes_to_diag() {
        let model = cp1();
        let s = Symbol::parse(&model, "z1*conj(z1)").unwrap();
        assert_eq!(s.level(), 1);
        let p = s.promote(2).unwrap();
        let expect = [1.0, 0.5, 0.0];
        for (i, e) in expect.iter().enumerate() {
            for j in 0..3 {
                let target = if i == j { *e } else { 0.0 };
                assert!((p.matrix()[(i, j)] - c(target)).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn promotion_is_functorial() {
        let model = SpaceModel::veronese_conic();
        let s = Symbol::parse(&model, "z1*conj(z2) + 2*z3*conj(z3)").unwrap();
        let twice = s.promote(2).unwrap().promote(4).unwrap();
        let once = s.promote(4).unwrap();
        assert!(linalg::max_abs(&(twice.matrix() - once.matrix())) < 1e-12);
    }

    #[test]
    fn identity_promotes_to_identity() {
        let model = SpaceModel::projective(3);
        let p = Symbol::identity(&model, 1).promote(3).unwrap();
        assert!(linalg::max_abs(&(p.matrix() - linalg::identity(10))) < 1e-13);
    }

    #[test]
    fn product_and_haar() {
        let model = cp1();
        let a = Symbol::parse(&model, "z1*conj(z1)").unwrap();
        let b = Symbol::parse(&model, "z2*conj(z2)").unwrap();
        let h = 0.5f64.sqrt();
        let v = a.mul(&b).unwrap().evaluate(&point(&model, &[h, h])).unwrap();
        assert!((v[(0, 0)] - c(0.25)).norm() < 1e-12);

        let x = Symbol::parse(&model, "z1*conj(z2)").unwrap();
        let y = Symbol::parse(&model, "z2*conj(z1)").unwrap();
        let w = x.mul(&y).unwrap().haar_state();
        assert!((w[(0, 0)] - c(1.0 / 6.0)).norm() < 1e-12);

        assert!((a.haar_state()[(0, 0)] - c(0.5)).norm() < 1e-14);
        assert!(x.haar_state()[(0, 0)].norm() < 1e-14);
        assert!((Symbol::identity(&model, 1).haar_state()[(0, 0)] - c(1.0)).norm() < 1e-14);
    }

    #[test]
    fn identity_times_symbol_is_promotion() {
        let model = SpaceModel::segre11();
        let s = Symbol::parse(&model, "z1*conj(z4) + z2*conj(z2)").unwrap();
        let one = Symbol::identity(&model, 1);
        let prod = one.mul(&s).unwrap();
        assert!(linalg::max_abs(&(prod.matrix() - s.promote(s.level()).unwrap().matrix())) < 1e-12);
    }

    #[test]
    fn toeplitz_of_modulus_square() {
        let model = cp1();
        let s = Symbol::parse(&model, "z1*conj(z1)").unwrap();
        let t = s.toeplitz(1);
        let expect = CMat::from_diagonal(&crate::linalg::CVec::from_vec(vec![c(2.0 / 3.0), c(1.0 / 3.0)]));
        assert!(linalg::max_abs(&(t - expect)) < 1e-12);
    }

    #[test]
    fn toeplitz_is_unital() {
        let model = SpaceModel::segre11();
        for m in 0..4 {
            let t = Symbol::identity(&model, 2).toeplitz(m);
            assert!(linalg::max_abs(&(t - linalg::identity(2 * model.level_dim(m)))) < 1e-12);
        }
    }

    #[test]
    fn berezin_of_modulus_square_at_pole() {
        let model = cp1();
        let s = Symbol::parse(&model, "z1*conj(z1)").unwrap();
        let pole = point(&model, &[1.0, 0.0]);
        for m in 1..6 {
            let v = s.berezin_transform(m).evaluate(&pole).unwrap()[(0, 0)];
            let mf = m as f64;
            assert!((v - c((mf + 1.0) / (mf + 2.0))).norm() < 1e-12, "m={m}");
        }
    }

    #[test]
    fn rank_one_covariant_symbol() {
        let model = SpaceModel::veronese_conic();
        let l = model.level(2);
        let (a, b) = (1, 3);
        let mut x = CMat::zeros(l.dim(), l.dim());
        x[(a, b)] = c(1.0);
        let sym = covariant_symbol(&model, x, 2, 1);
        let pt = model.sample_boundary(1, 5).unwrap().remove(0);
        let psi = l.eval_basis(pt.coords());
        let v = sym.evaluate(&pt).unwrap()[(0, 0)];
        assert!((v - psi[a] * psi[b].conj()).norm() < 1e-12);
    }

    #[test]
    fn unbalanced_literal_rejected() {
        assert!(Symbol::parse(&cp1(), "z1*z2*conj(z1)").is_err());
    }

    #[test]
    fn model_mismatch_detected() {
        let a = Symbol::identity(&cp1(), 1);
        let b = Symbol::identity(&cp1(), 1);
        assert!(matches!(a.mul(&b), Err(Error::ModelMismatch)));
    }
}
