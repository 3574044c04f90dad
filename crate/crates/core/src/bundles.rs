//! Bundle presets, their metric symbols, Hilbert polynomials and the
//! normalizing constants `c_{E,m} = n_m rank / χ(E(m))`.
//!
//! Grading of the tangent twist: the preset is the quotient of
//! `GH ⊗ C^n` by the Euler submodule `f -> f·(z_1, ..., z_n)`, whose level
//! `m` has dimension `n n_m - n_{m-1}`. This is the tangent bundle twisted
//! by `O(-1)` at level `m`, i.e. `χ(m) = χ(T(m-1))` on `CP^{n-1}`.

use std::sync::Arc;

use num_rational::Ratio;

use crate::error::{Error, Result};
use crate::fit::{self, RationalPoly};
use crate::linalg::{self, CMat, ONE};
use crate::poly::Polynomial;
use crate::quotient::{self, GradedQuotient};
use crate::space::{Preset, SpaceModel};
use crate::symbols::Symbol;

#[derive(Debug, Clone, PartialEq)]
pub enum BundleSpec {
    /// `O(k)` with the metric `FS(GH_k)`.
    Line(usize),
    DirectSum(Vec<BundleSpec>),
    /// Euler quotient on projective space.
    TangentTwist,
    /// Quotient by a submodule of `GH ⊗ C^n`; no canonical metric.
    CustomQuotient { n: usize, generators: Vec<Vec<Polynomial>> },
}

impl BundleSpec {
    /// `line:K`, `tangent`, or `sum:SPEC+SPEC+...`.
    pub fn parse(src: &str) -> Result<Self> {
        let s = src.trim();
        if let Some(rest) = s.strip_prefix("sum:") {
            let parts = rest.split('+').map(Self::parse).collect::<Result<Vec<_>>>()?;
            if parts.is_empty() {
                return Err(Error::Invalid("empty direct sum".into()));
            }
            return Ok(BundleSpec::DirectSum(parts));
        }
        if let Some(k) = s.strip_prefix("line:") {
            let k = k.trim().parse().map_err(|_| Error::Invalid(format!("bad line degree in '{s}'")))?;
            return Ok(BundleSpec::Line(k));
        }
        match s {
            "tangent" | "tangent_twist" | "tangentTwist" => Ok(BundleSpec::TangentTwist),
            "trivial" => Ok(BundleSpec::Line(0)),
            _ => Err(Error::Invalid(format!("unknown bundle '{s}'"))),
        }
    }

    pub fn label(&self) -> String {
        match self {
            BundleSpec::Line(k) => format!("line:{k}"),
            BundleSpec::DirectSum(parts) => {
                format!("sum:{}", parts.iter().map(|p| p.label()).collect::<Vec<_>>().join("+"))
            }
            BundleSpec::TangentTwist => "tangent".into(),
            BundleSpec::CustomQuotient { .. } => "custom".into(),
        }
    }

    /// Whether the metric symbol is the canonical equivariant one.
    pub fn is_equivariant(&self) -> bool {
        match self {
            BundleSpec::Line(_) | BundleSpec::TangentTwist => true,
            BundleSpec::DirectSum(parts) => parts.iter().all(|p| p.is_equivariant()),
            BundleSpec::CustomQuotient { .. } => false,
        }
    }

    pub fn rank(&self, model: &Arc<SpaceModel>) -> Result<usize> {
        match self {
            BundleSpec::Line(_) => Ok(1),
            BundleSpec::DirectSum(parts) => parts.iter().map(|p| p.rank(model)).sum(),
            BundleSpec::TangentTwist => Ok(model.n() - 1),
            BundleSpec::CustomQuotient { .. } => {
                let d = model.dimension();
                let q = self.quotient(model, d + 6)?;
                let rep = quotient::arveson_rank(&q, d + 6)?;
                let r = rep.fit_f64("limit").unwrap_or(0.0);
                Ok(r.round() as usize)
            }
        }
    }

    /// Closed-form `χ(E(m))` from the model's Hilbert function.
    pub fn euler_characteristic(&self, model: &SpaceModel, m: usize) -> Option<i64> {
        match self {
            BundleSpec::Line(k) => Some(model.level_dim(m + k) as i64),
            BundleSpec::DirectSum(parts) => parts.iter().map(|p| p.euler_characteristic(model, m)).sum(),
            BundleSpec::TangentTwist => {
                let prev = if m == 0 { 0 } else { model.level_dim(m - 1) as i64 };
                Some(model.n() as i64 * model.level_dim(m) as i64 - prev)
            }
            BundleSpec::CustomQuotient { .. } => None,
        }
    }

    /// `χ(E(m))` for `m` in `m0..=m1`, from the closed form or the quotient.
    pub fn hilbert_sequence(&self, model: &Arc<SpaceModel>, m0: usize, m1: usize) -> Result<Vec<i64>> {
        if let BundleSpec::CustomQuotient { .. } = self {
            let q = self.quotient(model, m1)?;
            return Ok(q.dims()[m0..=m1].iter().map(|&d| d as i64).collect());
        }
        Ok((m0..=m1).map(|m| self.euler_characteristic(model, m).unwrap_or(0)).collect())
    }

    pub fn metric_symbol(&self, model: &Arc<SpaceModel>) -> Result<Symbol> {
        match self {
            BundleSpec::Line(0) => Ok(Symbol::identity(model, 1)),
            BundleSpec::Line(k) => line_metric(model, *k),
            BundleSpec::DirectSum(parts) => {
                let mut it = parts.iter();
                let first = it.next().ok_or_else(|| Error::Invalid("empty direct sum".into()))?;
                let mut acc = first.metric_symbol(model)?;
                for p in it {
                    acc = acc.direct_sum(&p.metric_symbol(model)?)?;
                }
                Ok(acc)
            }
            BundleSpec::TangentTwist => tangent_metric(model),
            BundleSpec::CustomQuotient { .. } => {
                Err(Error::Invalid("custom quotient bundles carry no canonical metric".into()))
            }
        }
    }

    /// Quotient realization: the Toeplitz range of the metric, or the
    /// submodule complement for custom quotients.
    pub fn quotient(&self, model: &Arc<SpaceModel>, m_max: usize) -> Result<GradedQuotient> {
        match self {
            BundleSpec::CustomQuotient { n, generators } => {
                GradedQuotient::from_submodule_generators(model, *n, generators.clone(), m_max)
            }
            _ => GradedQuotient::from_toeplitz_range(&self.metric_symbol(model)?, m_max),
        }
    }
}

/// `FS(GH_k)` as a symbol with `N = n_k`: the flip on `GH_k ⊗ GH_k`, whose
/// value at `ζ` is the projection onto `conj(ψ(ζ))`.
pub(crate) fn line_metric(model: &Arc<SpaceModel>, k: usize) -> Result<Symbol> {
    let nk = model.level_dim(k);
    let mut a = CMat::zeros(nk * nk, nk * nk);
    for p in 0..nk {
        for i in 0..nk {
            a[(p * nk + i, i * nk + p)] = ONE;
        }
    }
    Symbol::new(model, k, nk, a)
}

/// `1 - ζ ζ^*` at level 1 with `N = n`.
fn tangent_metric(model: &Arc<SpaceModel>) -> Result<Symbol> {
    if model.preset() != Preset::ProjectiveSpace {
        return Err(Error::Invalid("the tangent twist preset is defined on projective space only".into()));
    }
    let n = model.n();
    let mut a = linalg::identity(n * n);
    for p in 0..n {
        for q in 0..n {
            a[(p * n + p, q * n + q)] -= ONE;
        }
    }
    Symbol::new(model, 1, n, a)
}

/// Exact Hilbert polynomial fitted on a window, with the first level from
/// which the sequence agrees with it.
#[derive(Debug, Clone)]
pub struct HilbertFit {
    pub poly: RationalPoly,
    pub onset: usize,
    pub m0: usize,
    pub values: Vec<i64>,
}

/// Fits a degree-`d` integer-valued polynomial to `values[i] = χ(m0 + i)`
/// using the last `d + 1` points and reports the regularity onset. Points
/// before the onset are the only ones allowed to disagree.
pub fn hilbert_poly(d: usize, m0: usize, values: &[i64]) -> Result<HilbertFit> {
    if values.len() < d + 1 {
        return Err(Error::Invalid(format!("window of {} values is shorter than d+1 = {}", values.len(), d + 1)));
    }
    let start = values.len() - (d + 1);
    let poly = fit::interpolate_integer_sequence((m0 + start) as i64, &values[start..], d)?;
    let mut onset = m0 + start;
    for i in (0..start).rev() {
        if poly.eval((m0 + i) as i64) == fit::Q::from_integer(values[i] as i128) {
            onset = m0 + i;
        } else {
            break;
        }
    }
    Ok(HilbertFit { poly, onset, m0, values: values.to_vec() })
}

/// `c_{E,m} = n_m rank / χ(E(m))` as an exact fraction.
pub fn c_constant(model: &Arc<SpaceModel>, spec: &BundleSpec, m: usize) -> Result<Ratio<i64>> {
    let chi = spec.hilbert_sequence(model, m, m)?[0];
    if chi == 0 {
        return Err(Error::RankZero);
    }
    let rank = spec.rank(model)? as i64;
    Ok(Ratio::new(model.level_dim(m) as i64 * rank, chi))
}
