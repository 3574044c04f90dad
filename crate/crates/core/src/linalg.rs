//! Dense complex linear algebra helpers on top of `nalgebra`.
//!
//! All operators in the crate are `DMatrix<Complex64>` in orthonormal
//! coordinates. Tensor factors are flattened row-major, so the index of
//! `e_a ⊗ e_i` in `A ⊗ B` is `a * dim(B) + i`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()).scale(0.5)
}

/// Eigen-decomposition of the hermitian part of `m`, sorted by descending
/// eigenvalue. Columns of the returned matrix are the eigenvectors.
pub fn eigh_desc(m: &CMat) -> (Vec<f64>, CMat) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), CMat::zeros(0, 0));
    }
    let eig = hermitian_part(m).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

pub fn eigvals_desc(m: &CMat) -> Vec<f64> {
    eigh_desc(m).0
}

pub fn min_eigenvalue(m: &CMat) -> f64 {
    eigvals_desc(m).last().copied().unwrap_or(0.0)
}

pub fn max_eigenvalue(m: &CMat) -> f64 {
    eigvals_desc(m).first().copied().unwrap_or(0.0)
}

/// Singular values sorted in descending order.
pub fn singular_values(m: &CMat) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Operator norm (largest singular value).
pub fn op_norm(m: &CMat) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

/// Operator norm of a matrix known to be hermitian; cheaper than an SVD.
pub fn op_norm_hermitian(m: &CMat) -> f64 {
    let v = eigvals_desc(m);
    match (v.first(), v.last()) {
        (Some(a), Some(b)) => a.abs().max(b.abs()),
        _ => 0.0,
    }
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Orthonormal basis (columns) of the span of the columns of `m`, with rank
/// decided by `rel_tol * largest singular value`.
pub fn column_space(m: &CMat, rel_tol: f64) -> CMat {
    let (range, _) = range_and_complement(m, rel_tol);
    range
}

/// Splits the ambient space of `m`'s columns into an orthonormal basis of
/// the column span and one of its orthogonal complement.
pub fn range_and_complement(m: &CMat, rel_tol: f64) -> (CMat, CMat) {
    let rows = m.nrows();
    if rows == 0 {
        return (CMat::zeros(0, 0), CMat::zeros(0, 0));
    }
    if m.ncols() == 0 {
        return (CMat::zeros(rows, 0), identity(rows));
    }
    // Pad with zero columns so the left singular vectors span the whole space.
    let cols = m.ncols().max(rows);
    let mut padded = CMat::zeros(rows, cols);
    padded.view_mut((0, 0), (rows, m.ncols())).copy_from(m);
    let svd = padded.svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let sv = &svd.singular_values;
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let thr = rel_tol * smax;
    let mut keep = Vec::new();
    let mut drop = Vec::new();
    for i in 0..sv.len() {
        if smax > 0.0 && sv[i] > thr {
            keep.push(i);
        } else {
            drop.push(i);
        }
    }
    // u has min(rows, cols) = rows columns.
    let pick = |idx: &[usize]| {
        let mut out = CMat::zeros(rows, idx.len());
        for (k, &i) in idx.iter().enumerate() {
            out.set_column(k, &u.column(i));
        }
        out
    };
    (pick(&keep), pick(&drop))
}

/// Canonical orthonormal basis of the range of an orthogonal projection:
/// Gram-Schmidt applied to `P e_0, P e_1, ...` in order, each vector
/// phase-fixed so its first non-negligible coordinate is real positive.
pub fn canonical_basis(projection: &CMat, rank: usize) -> CMat {
    let n = projection.nrows();
    let mut basis: Vec<CVec> = Vec::with_capacity(rank);
    for j in 0..n {
        if basis.len() == rank {
            break;
        }
        let mut v: CVec = projection.column(j).into_owned();
        for _ in 0..2 {
            for b in &basis {
                let coef = b.dotc(&v);
                v -= b * coef;
            }
        }
        let norm = v.norm();
        if norm > 1e-6 {
            v /= c(norm);
            basis.push(fix_phase(v));
        }
    }
    let mut out = CMat::zeros(n, basis.len());
    for (k, b) in basis.iter().enumerate() {
        out.set_column(k, b);
    }
    out
}

/// Multiplies by a unit scalar so that the first coordinate with modulus
/// above 1e-9 is real and positive.
pub fn fix_phase(mut v: CVec) -> CVec {
    if let Some(z) = v.iter().find(|z| z.norm() > 1e-9).copied() {
        let phase = z.conj() / z.norm();
        v *= phase;
    }
    v
}

pub fn projector_from_basis(basis: &CMat) -> CMat {
    basis * basis.adjoint()
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

/// Partial trace over the first factor of `H_1 ⊗ H_2` with `dim H_1 = d1`.
pub fn partial_trace_first(m: &CMat, d1: usize) -> CMat {
    let d2 = m.nrows() / d1;
    let mut out = CMat::zeros(d2, d2);
    for a in 0..d1 {
        out += m.view((a * d2, a * d2), (d2, d2));
    }
    out
}

/// Partial trace over the second factor of `H_1 ⊗ H_2` with `dim H_2 = d2`.
pub fn partial_trace_second(m: &CMat, d2: usize) -> CMat {
    let d1 = m.nrows() / d2;
    CMat::from_fn(d1, d1, |a, b| {
        let mut acc = ZERO;
        for i in 0..d2 {
            acc += m[(a * d2 + i, b * d2 + i)];
        }
        acc
    })
}

/// Applies `f` to the eigenvalues of a hermitian matrix.
pub fn hermitian_fn(m: &CMat, f: impl Fn(f64) -> f64) -> CMat {
    let (vals, vecs) = eigh_desc(m);
    let d = CMat::from_diagonal(&CVec::from_iterator(vals.len(), vals.iter().map(|&x| c(f(x)))));
    &vecs * d * vecs.adjoint()
}

/// Moore-Penrose pseudo-inverse of a hermitian PSD matrix; eigenvalues below
/// `rel_tol * max` are treated as zero. Returns the inverse and the rank.
pub fn psd_pinv(m: &CMat, rel_tol: f64) -> (CMat, usize) {
    let (vals, vecs) = eigh_desc(m);
    let top = vals.first().copied().unwrap_or(0.0).max(0.0);
    let thr = rel_tol * top;
    let mut rank = 0;
    let d = CVec::from_iterator(
        vals.len(),
        vals.iter().map(|&x| {
            if top > 0.0 && x > thr {
                rank += 1;
                c(1.0 / x)
            } else {
                ZERO
            }
        }),
    );
    (&vecs * CMat::from_diagonal(&d) * vecs.adjoint(), rank)
}

pub fn trace(m: &CMat) -> C64 {
    m.trace()
}

/// Distance from being an orthogonal projection: max of `||P^2 - P||` and
/// `||P - P^*||` in entrywise max norm.
pub fn projection_residual(p: &CMat) -> f64 {
    let idem = max_abs(&(p * p - p));
    let herm = max_abs(&(p - p.adjoint()));
    idem.max(herm)
}

/// Largest consecutive-ratio gap in a descending spectrum.
///
/// A virtual eigenvalue 0 is appended, eigenvalues below `zero_rel * max`
/// count as zero, and `x / 0` is infinite. Returns the number of retained
/// eigenvalues and the gap ratio at the cut; ties go to the earliest cut.
pub fn largest_ratio_gap(desc: &[f64], zero_rel: f64) -> (usize, f64) {
    let top = desc.first().copied().unwrap_or(0.0);
    if top <= 0.0 {
        return (0, f64::INFINITY);
    }
    let zero = zero_rel * top;
    let mut best = (0usize, 0.0f64);
    for i in 0..desc.len() {
        let hi = desc[i];
        if hi <= zero {
            break;
        }
        let lo = desc.get(i + 1).copied().unwrap_or(0.0);
        let ratio = if lo <= zero { f64::INFINITY } else { hi / lo };
        if ratio > best.1 {
            best = (i + 1, ratio);
            if ratio.is_infinite() {
                break;
            }
        }
    }
    best
}

pub fn block(m: &CMat, row: usize, col: usize, rows: usize, cols: usize) -> CMat {
    m.view((row, col), (rows, cols)).into_owned()
}

/// Builds the block-diagonal sum of square matrices.
pub fn direct_sum(blocks: &[CMat]) -> CMat {
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = CMat::zeros(n, n);
    let mut off = 0;
    for b in blocks {
        out.view_mut((off, off), (b.nrows(), b.ncols())).copy_from(b);
        off += b.nrows();
    }
    out
}

/// `ln(k!)` for `k` in `0..=max`.
pub fn ln_factorials(max: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(max + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..=max {
        acc += (k as f64).ln();
        out.push(acc);
    }
    out
}

pub fn binomial(n: i64, k: i64) -> i64 {
    if k < 0 || n < 0 || k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: i128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as i128 / (i + 1) as i128;
    }
    acc as i64
}
