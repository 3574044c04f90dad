//! Multi-indices, sparse complex polynomials and the polynomial literal parser.
//!
//! Literal syntax: variables `z1..zn`, `conj(zk)` for antiholomorphic
//! factors, integer/decimal/imaginary coefficients (`2`, `0.5`, `3i`, `i`),
//! `+ - * ^` and parentheses.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use crate::error::{Error, Result};
use crate::linalg::{C64, ZERO};

/// Exponent vector of a monomial.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(exponents: Vec<u32>) -> Self {
        MultiIndex(exponents)
    }

    pub fn zero(n: usize) -> Self {
        MultiIndex(vec![0; n])
    }

    pub fn unit(n: usize, var: usize) -> Self {
        let mut e = vec![0; n];
        e[var] = 1;
        MultiIndex(e)
    }

    pub fn exponents(&self) -> &[u32] {
        &self.0
    }

    pub fn degree(&self) -> usize {
        self.0.iter().map(|&e| e as usize).sum()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn add(&self, other: &MultiIndex) -> MultiIndex {
        MultiIndex(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// `self - other` if every exponent stays non-negative.
    pub fn checked_sub(&self, other: &MultiIndex) -> Option<MultiIndex> {
        let mut out = Vec::with_capacity(self.0.len());
        for (a, b) in self.0.iter().zip(&other.0) {
            out.push(a.checked_sub(*b)?);
        }
        Some(MultiIndex(out))
    }

    /// `ln(alpha!) = sum ln(alpha_i!)` using a precomputed table.
    pub fn ln_factorial(&self, table: &[f64]) -> f64 {
        self.0.iter().map(|&e| table[e as usize]).sum()
    }

    pub fn eval(&self, z: &[C64]) -> C64 {
        let mut acc = C64::new(1.0, 0.0);
        for (zi, &e) in z.iter().zip(&self.0) {
            if e > 0 {
                acc *= zi.powu(e);
            }
        }
        acc
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .0
            .iter()
            .enumerate()
            .filter(|(_, &e)| e > 0)
            .map(|(i, &e)| if e == 1 { format!("z{}", i + 1) } else { format!("z{}^{}", i + 1, e) })
            .collect();
        if parts.is_empty() {
            write!(f, "1")
        } else {
            write!(f, "{}", parts.join("*"))
        }
    }
}

/// All exponent vectors of total degree `m` in `n` variables, in graded
/// lexicographic order (`z1^m` first, `zn^m` last).
pub fn monomials(n: usize, m: usize) -> Vec<MultiIndex> {
    fn rec(n: usize, left: u32, prefix: &mut Vec<u32>, out: &mut Vec<MultiIndex>) {
        if prefix.len() + 1 == n {
            prefix.push(left);
            out.push(MultiIndex(prefix.clone()));
            prefix.pop();
            return;
        }
        for a in (0..=left).rev() {
            prefix.push(a);
            rec(n, left - a, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if n == 0 {
        if m == 0 {
            out.push(MultiIndex(Vec::new()));
        }
        return out;
    }
    rec(n, m as u32, &mut Vec::with_capacity(n), &mut out);
    out
}

pub fn monomial_index(monos: &[MultiIndex]) -> HashMap<MultiIndex, usize> {
    monos.iter().cloned().enumerate().map(|(i, a)| (a, i)).collect()
}

/// Sparse polynomial in `z1..zn` and `conj(z1)..conj(zn)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BiPolynomial {
    n: usize,
    terms: BTreeMap<(MultiIndex, MultiIndex), C64>,
}

impl BiPolynomial {
    pub fn zero(n: usize) -> Self {
        BiPolynomial { n, terms: BTreeMap::new() }
    }

    pub fn constant(n: usize, value: C64) -> Self {
        let mut p = Self::zero(n);
        p.add_term(MultiIndex::zero(n), MultiIndex::zero(n), value);
        p
    }

    pub fn var(n: usize, i: usize, conjugate: bool) -> Self {
        let mut p = Self::zero(n);
        let (a, b) = if conjugate {
            (MultiIndex::zero(n), MultiIndex::unit(n, i))
        } else {
            (MultiIndex::unit(n, i), MultiIndex::zero(n))
        };
        p.add_term(a, b, C64::new(1.0, 0.0));
        p
    }

    pub fn nvars(&self) -> usize {
        self.n
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, &MultiIndex, &C64)> {
        self.terms.iter().map(|((a, b), c)| (a, b, c))
    }

    pub fn add_term(&mut self, hol: MultiIndex, anti: MultiIndex, coef: C64) {
        let key = (hol, anti);
        let entry = self.terms.entry(key.clone()).or_insert(ZERO);
        *entry += coef;
        if entry.norm() == 0.0 {
            self.terms.remove(&key);
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for ((a, b), c) in &other.terms {
            out.add_term(a.clone(), b.clone(), *c);
        }
        out
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut out = Self::zero(self.n);
        for ((a, b), c) in &self.terms {
            out.add_term(a.clone(), b.clone(), c * s);
        }
        out
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut out = Self::zero(self.n);
        for ((a1, b1), c1) in &self.terms {
            for ((a2, b2), c2) in &other.terms {
                out.add_term(a1.add(a2), b1.add(b2), c1 * c2);
            }
        }
        out
    }

    pub fn pow(&self, e: u32) -> Self {
        let mut out = Self::constant(self.n, C64::new(1.0, 0.0));
        for _ in 0..e {
            out = out.mul(self);
        }
        out
    }

    pub fn is_holomorphic(&self) -> bool {
        self.terms.keys().all(|(_, b)| b.degree() == 0)
    }

    pub fn eval(&self, z: &[C64]) -> C64 {
        let zc: Vec<C64> = z.iter().map(|x| x.conj()).collect();
        self.terms.iter().map(|((a, b), c)| c * a.eval(z) * b.eval(&zc)).sum()
    }

    /// Converts to a holomorphic polynomial if no `conj` factor is present.
    pub fn into_holomorphic(self) -> Option<Polynomial> {
        if !self.is_holomorphic() {
            return None;
        }
        let terms = self.terms.into_iter().map(|((a, _), c)| (a, c)).collect();
        Some(Polynomial { n: self.n, terms })
    }

    pub fn parse(src: &str, n: usize) -> Result<Self> {
        let mut p = Parser { src: src.as_bytes(), pos: 0, n };
        let out = p.expr()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(p.err("unexpected trailing input"));
        }
        Ok(out)
    }
}

/// Sparse holomorphic polynomial in `z1..zn` with complex coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    n: usize,
    terms: BTreeMap<MultiIndex, C64>,
}

impl Polynomial {
    pub fn zero(n: usize) -> Self {
        Polynomial { n, terms: BTreeMap::new() }
    }

    pub fn monomial(alpha: MultiIndex, coef: C64) -> Self {
        let n = alpha.len();
        let mut terms = BTreeMap::new();
        if coef.norm() != 0.0 {
            terms.insert(alpha, coef);
        }
        Polynomial { n, terms }
    }

    pub fn parse(src: &str, n: usize) -> Result<Self> {
        let bi = BiPolynomial::parse(src, n)?;
        bi.into_holomorphic().ok_or(Error::Parse {
            column: 1,
            message: "conj(...) is not allowed in a holomorphic polynomial".into(),
        })
    }

    pub fn nvars(&self) -> usize {
        self.n
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, &C64)> {
        self.terms.iter()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Total degree if all terms share it; `None` for the zero polynomial
    /// or an inhomogeneous one.
    pub fn homogeneous_degree(&self) -> Option<usize> {
        let mut it = self.terms.keys().map(|a| a.degree());
        let first = it.next()?;
        it.all(|d| d == first).then_some(first)
    }

    pub fn mul_monomial(&self, beta: &MultiIndex) -> Polynomial {
        Polynomial {
            n: self.n,
            terms: self.terms.iter().map(|(a, c)| (a.add(beta), *c)).collect(),
        }
    }

    pub fn eval(&self, z: &[C64]) -> C64 {
        self.terms.iter().map(|(a, c)| c * a.eval(z)).sum()
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    n: usize,
}

impl Parser<'_> {
    fn err(&self, msg: &str) -> Error {
        Error::Parse { column: self.pos + 1, message: msg.to_string() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<BiPolynomial> {
        let mut acc = self.term()?;
        while let Some(op) = self.peek() {
            match op {
                b'+' => {
                    self.pos += 1;
                    acc = acc.add(&self.term()?);
                }
                b'-' => {
                    self.pos += 1;
                    acc = acc.add(&self.term()?.scale(C64::new(-1.0, 0.0)));
                }
                _ => break,
            }
        }
        Ok(acc)
    }

    fn term(&mut self) -> Result<BiPolynomial> {
        let mut acc = self.unary()?;
        while let Some(b'*') = self.peek() {
            self.pos += 1;
            acc = acc.mul(&self.unary()?);
        }
        Ok(acc)
    }

    fn unary(&mut self) -> Result<BiPolynomial> {
        match self.peek() {
            Some(b'-') => {
                self.pos += 1;
                Ok(self.unary()?.scale(C64::new(-1.0, 0.0)))
            }
            Some(b'+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<BiPolynomial> {
        let base = self.atom()?;
        if let Some(b'^') = self.peek() {
            self.pos += 1;
            self.skip_ws();
            let start = self.pos;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if start == self.pos {
                return Err(self.err("expected integer exponent after '^'"));
            }
            let e: u32 = std::str::from_utf8(&self.src[start..self.pos])
                .unwrap()
                .parse()
                .map_err(|_| self.err("exponent out of range"))?;
            return Ok(base.pow(e));
        }
        Ok(base)
    }

    fn variable(&mut self) -> Result<usize> {
        self.skip_ws();
        if self.src.get(self.pos) != Some(&b'z') {
            return Err(self.err("expected variable z1..zn"));
        }
        self.pos += 1;
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err("expected variable index after 'z'"));
        }
        let idx: usize = std::str::from_utf8(&self.src[start..self.pos]).unwrap().parse().unwrap_or(0);
        if idx == 0 || idx > self.n {
            self.pos = start;
            return Err(self.err(&format!("variable index must be in 1..={}", self.n)));
        }
        Ok(idx - 1)
    }

    fn atom(&mut self) -> Result<BiPolynomial> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(self.err("expected ')'"));
                }
                self.pos += 1;
                Ok(inner)
            }
            Some(b'z') => {
                let v = self.variable()?;
                Ok(BiPolynomial::var(self.n, v, false))
            }
            Some(b'c') => {
                if !self.src[self.pos..].starts_with(b"conj") {
                    return Err(self.err("unknown identifier"));
                }
                self.pos += 4;
                if self.peek() != Some(b'(') {
                    return Err(self.err("expected '(' after conj"));
                }
                self.pos += 1;
                let v = self.variable()?;
                if self.peek() != Some(b')') {
                    return Err(self.err("expected ')'"));
                }
                self.pos += 1;
                Ok(BiPolynomial::var(self.n, v, true))
            }
            Some(b'i') => {
                self.pos += 1;
                Ok(BiPolynomial::constant(self.n, C64::new(0.0, 1.0)))
            }
            Some(ch) if ch.is_ascii_digit() || ch == b'.' => {
                let start = self.pos;
                while self.pos < self.src.len() && (self.src[self.pos].is_ascii_digit() || self.src[self.pos] == b'.') {
                    self.pos += 1;
                }
                let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                let value: f64 = text.parse().map_err(|_| {
                    Error::Parse { column: start + 1, message: format!("invalid number '{text}'") }
                })?;
                if self.src.get(self.pos) == Some(&b'i') {
                    self.pos += 1;
                    return Ok(BiPolynomial::constant(self.n, C64::new(0.0, value)));
                }
                Ok(BiPolynomial::constant(self.n, C64::new(value, 0.0)))
            }
            Some(_) => Err(self.err("unexpected character")),
            None => Err(self.err("unexpected end of input")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grlex_order_two_variables() {
        let m = monomials(2, 2);
        let shown: Vec<String> = m.iter().map(|a| a.to_string()).collect();
        assert_eq!(shown, ["z1^2", "z1*z2", "z2^2"]);
    }

    #[test]
    fn monomial_counts() {
        assert_eq!(monomials(3, 4).len(), 15);
        assert_eq!(monomials(4, 2).len(), 10);
        assert_eq!(monomials(2, 0).len(), 1);
    }

    #[test]
    fn parse_segre_relation() {
        let p = Polynomial::parse("z1*z4 - z2*z3", 4).unwrap();
        assert_eq!(p.homogeneous_degree(), Some(2));
        let z = [C64::new(1.0, 0.0), C64::new(2.0, 0.0), C64::new(3.0, 0.0), C64::new(6.0, 0.0)];
        assert!(p.eval(&z).norm() < 1e-12);
    }

    #[test]
    fn parse_complex_coefficients_and_powers() {
        let p = Polynomial::parse("(1+2i)*z1^2 - 0.5*z2^2", 2).unwrap();
        let z = [C64::new(1.0, 0.0), C64::new(2.0, 0.0)];
        assert!((p.eval(&z) - C64::new(-1.0, 2.0)).norm() < 1e-12);
    }

    #[test]
    fn parse_conj_terms() {
        let p = BiPolynomial::parse("z1*conj(z1)", 2).unwrap();
        let z = [C64::new(0.6, 0.8), C64::new(0.0, 0.0)];
        assert!((p.eval(&z) - C64::new(1.0, 0.0)).norm() < 1e-12);
        assert!(Polynomial::parse("z1*conj(z2)", 2).is_err());
    }

    #[test]
    fn parse_errors_carry_column() {
        match Polynomial::parse("z1*z3", 2) {
            Err(Error::Parse { column, .. }) => assert_eq!(column, 5),
            other => panic!("unexpected {other:?}"),
        }
        assert!(Polynomial::parse("z1 +", 2).is_err());
        assert!(Polynomial::parse("z1 $ z2", 2).is_err());
    }

    #[test]
    fn inhomogeneous_detected() {
        let p = Polynomial::parse("z1^2 + z2", 2).unwrap();
        assert_eq!(p.homogeneous_degree(), None);
    }
}
