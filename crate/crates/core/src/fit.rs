//! Small fitting utilities: exact integer-polynomial interpolation and
//! weighted least squares.

use nalgebra::{DMatrix, DVector};
use num_rational::Ratio;
use num_traits::{One, Zero};

use crate::error::{Error, Result};

pub type Q = Ratio<i128>;

/// Smallest `k` such that the `(k+1)`-th forward differences vanish on the
/// last three available entries. `None` for sequences too short to decide.
pub fn tail_polynomial_degree(seq: &[i64]) -> Option<usize> {
    let mut diff: Vec<i64> = seq.to_vec();
    for k in 0..seq.len() {
        let next: Vec<i64> = diff.windows(2).map(|w| w[1] - w[0]).collect();
        if next.is_empty() {
            return None;
        }
        let tail = &next[next.len().saturating_sub(3)..];
        if tail.iter().all(|&x| x == 0) {
            return Some(k);
        }
        diff = next;
    }
    None
}

/// A polynomial with rational coefficients, lowest degree first.
#[derive(Debug, Clone, PartialEq)]
pub struct RationalPoly {
    pub coeffs: Vec<Q>,
}

impl RationalPoly {
    pub fn eval(&self, x: i64) -> Q {
        let x = Q::from_integer(x as i128);
        self.coeffs.iter().rev().fold(Q::zero(), |acc, c| acc * x + c)
    }

    pub fn degree(&self) -> usize {
        self.coeffs.iter().rposition(|c| !c.is_zero()).unwrap_or(0)
    }

    pub fn leading(&self) -> Q {
        self.coeffs.get(self.degree()).copied().unwrap_or_else(Q::zero)
    }

    pub fn coeffs_f64(&self) -> Vec<f64> {
        self.coeffs.iter().map(|c| *c.numer() as f64 / *c.denom() as f64).collect()
    }
}

/// Interpolates `values[i] = p(m0 + i)` by the unique polynomial of degree
/// `<= degree` through the first `degree + 1` points and checks the rest.
pub fn interpolate_integer_sequence(m0: i64, values: &[i64], degree: usize) -> Result<RationalPoly> {
    if values.len() < degree + 1 {
        return Err(Error::Invalid(format!(
            "window of {} points is too short for degree {}",
            values.len(),
            degree
        )));
    }
    // Newton form on the shifted variable t = m - m0: sum_j Δ^j f(0) C(t, j).
    let mut diffs = Vec::with_capacity(degree + 1);
    let mut row: Vec<i128> = values[..=degree].iter().map(|&v| v as i128).collect();
    for _ in 0..=degree {
        diffs.push(row[0]);
        row = row.windows(2).map(|w| w[1] - w[0]).collect();
    }
    // Expand C(t, j) = t (t-1) ... (t-j+1) / j! in powers of t.
    let mut coeffs_t = vec![Q::zero(); degree + 1];
    let mut falling = vec![Q::one()];
    let mut fact = Q::one();
    for (j, &dj) in diffs.iter().enumerate() {
        if j > 0 {
            fact *= Q::from_integer(j as i128);
            let shift = Q::from_integer(j as i128 - 1);
            let mut next = vec![Q::zero(); falling.len() + 1];
            for (p, c) in falling.iter().enumerate() {
                next[p + 1] += c;
                next[p] -= c * shift;
            }
            falling = next;
        }
        for (p, c) in falling.iter().enumerate() {
            coeffs_t[p] += c * Q::from_integer(dj) / fact;
        }
    }
    // Substitute t = m - m0.
    let mut coeffs = vec![Q::zero(); degree + 1];
    let neg = Q::from_integer(-(m0 as i128));
    for (p, c) in coeffs_t.iter().enumerate() {
        for q in 0..=p {
            let binom = Q::from_integer(binomial_i128(p as i128, q as i128));
            coeffs[q] += c * binom * pow(neg, p - q);
        }
    }
    let poly = RationalPoly { coeffs };
    for (i, &v) in values.iter().enumerate() {
        if poly.eval(m0 + i as i64) != Q::from_integer(v as i128) {
            return Err(Error::NonPolynomial { degree });
        }
    }
    Ok(poly)
}

fn pow(x: Q, e: usize) -> Q {
    (0..e).fold(Q::one(), |acc, _| acc * x)
}

fn binomial_i128(n: i128, k: i128) -> i128 {
    if k < 0 || k > n {
        return 0;
    }
    let mut acc = 1i128;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// Weighted least squares `min sum w_i (x_i . beta - y_i)^2`. Returns the
/// coefficients and the weighted RMS residual.
pub fn weighted_least_squares(design: &[Vec<f64>], y: &[f64], w: &[f64]) -> (Vec<f64>, f64) {
    let rows = design.len();
    let cols = design.first().map_or(0, |r| r.len());
    let a = DMatrix::from_fn(rows, cols, |i, j| design[i][j] * w[i].sqrt());
    let b = DVector::from_iterator(rows, y.iter().zip(w).map(|(y, w)| y * w.sqrt()));
    let svd = a.clone().svd(true, true);
    let beta = svd.solve(&b, 1e-14).expect("svd computed with both factors");
    let r = &a * &beta - b;
    let rms = (r.norm_squared() / rows.max(1) as f64).sqrt();
    (beta.iter().copied().collect(), rms)
}

/// Fits `y(m) ≈ a1/m + a2/m^2` with weights `m^2`.
pub fn fit_inverse_powers(ms: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let design: Vec<Vec<f64>> = ms.iter().map(|&m| vec![1.0 / m, 1.0 / (m * m)]).collect();
    let w: Vec<f64> = ms.iter().map(|m| m * m).collect();
    let (beta, rms) = weighted_least_squares(&design, y, &w);
    (beta[0], beta[1], rms)
}

/// Ordinary least-squares line `y ≈ slope x + intercept`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let design: Vec<Vec<f64>> = x.iter().map(|&t| vec![t, 1.0]).collect();
    let w = vec![1.0; x.len()];
    let (beta, _) = weighted_least_squares(&design, y, &w);
    (beta[0], beta[1])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degree_of_hilbert_functions() {
        assert_eq!(tail_polynomial_degree(&[1, 2, 3, 4, 5, 6]), Some(1));
        assert_eq!(tail_polynomial_degree(&[1, 4, 9, 16, 25, 36]), Some(2));
        assert_eq!(tail_polynomial_degree(&[1, 2, 2, 2, 2, 2]), Some(0));
    }

    #[test]
    fn interpolation_is_exact() {
        // 3 C(m+2,2) - C(m+1,2) = m^2 + 4m + 3 at m = 0..6.
        let vals: Vec<i64> = (0..7).map(|m| m * m + 4 * m + 3).collect();
        let p = interpolate_integer_sequence(0, &vals, 2).unwrap();
        assert_eq!(p.coeffs, vec![Q::from_integer(3), Q::from_integer(4), Q::from_integer(1)]);
        let shifted = interpolate_integer_sequence(2, &vals[2..], 2).unwrap();
        assert_eq!(shifted, p);
    }

    #[test]
    fn interpolation_rejects_non_polynomial() {
        assert!(matches!(
            interpolate_integer_sequence(0, &[1, 2, 4, 8, 16], 2),
            Err(Error::NonPolynomial { .. })
        ));
    }

    #[test]
    fn half_integer_coefficients() {
        // C(m+1, 2) = (m^2 + m)/2
        let vals: Vec<i64> = (0..6).map(|m| (m + 1) * m / 2).collect();
        let p = interpolate_integer_sequence(0, &vals, 2).unwrap();
        assert_eq!(p.coeffs[2], Q::new(1, 2));
    }

    #[test]
    fn inverse_power_fit_recovers_coefficients() {
        let ms: Vec<f64> = (4..=12).map(|m| m as f64).collect();
        let y: Vec<f64> = ms.iter().map(|m| 2.0 / m - 3.0 / (m * m)).collect();
        let (a1, a2, rms) = fit_inverse_powers(&ms, &y);
        assert!((a1 - 2.0).abs() < 1e-10 && (a2 + 3.0).abs() < 1e-9 && rms < 1e-12);
    }
}
