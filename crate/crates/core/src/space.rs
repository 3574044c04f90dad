//! Graded Fock levels of a projective model and boundary samplers.
//!
//! Level `m` is the space of degree-`m` polynomials modulo the ideal, with
//! the symmetric Fock inner product `<z^a, z^b> = δ_ab a!/m!`. Internally
//! every level is stored in *normalized monomial coordinates*
//! `e_a = z^a / sqrt(a!/m!)`, in which the Fock Gram is the identity; the
//! level basis is a matrix `Q` whose orthonormal columns span the Fock
//! orthogonal complement of the ideal slice.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit;
use crate::linalg::{self, c, CMat, CVec, C64, ZERO};
use crate::poly::{monomial_index, monomials, MultiIndex, Polynomial};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Preset {
    ProjectiveSpace,
    Segre11,
    VeroneseConic,
    Custom,
}

/// Draws a point of the boundary sphere of a model.
pub type Sampler = Arc<dyn Fn(&mut ChaCha8Rng) -> Vec<C64> + Send + Sync>;

/// Degree-`m` slice of the graded space.
#[derive(Debug, Clone)]
pub struct FockLevel {
    pub m: usize,
    pub monomials: Vec<MultiIndex>,
    /// Fock weights `a!/m!`, the diagonal of the monomial Gram matrix.
    pub weights: Vec<f64>,
    /// Orthonormal basis in normalized monomial coordinates (columns).
    pub basis: CMat,
    /// Whether `basis` is the identity (no ideal relations in this degree).
    pub full: bool,
}

impl FockLevel {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn ambient_dim(&self) -> usize {
        self.monomials.len()
    }

    pub fn fock_gram(&self) -> CMat {
        CMat::from_diagonal(&CVec::from_iterator(self.weights.len(), self.weights.iter().map(|&w| c(w))))
    }

    /// Columns express the orthonormal basis in monomial coordinates.
    pub fn onb_change(&self) -> CMat {
        let mut out = self.basis.clone();
        for (r, w) in self.weights.iter().enumerate() {
            out.row_mut(r).scale_mut(1.0 / w.sqrt());
        }
        out
    }

    /// Values `(ψ_a(z))_a` of the orthonormal basis polynomials at `z`.
    pub fn eval_basis(&self, z: &[C64]) -> CVec {
        let u = self.normalized_monomials(z);
        if self.full {
            return u;
        }
        self.basis.transpose() * u
    }

    /// `(z^a / sqrt(a!/m!))_a`.
    pub fn normalized_monomials(&self, z: &[C64]) -> CVec {
        CVec::from_iterator(
            self.monomials.len(),
            self.monomials.iter().zip(&self.weights).map(|(a, w)| a.eval(z) / w.sqrt()),
        )
    }

    /// Coordinates of the level-`m` reproducing kernel vector at `z`,
    /// i.e. `conj(ψ_a(z))`. Its squared norm is `||z||^(2m)` on the variety.
    pub fn kernel_vector(&self, z: &[C64]) -> CVec {
        self.eval_basis(z).map(|x| x.conj())
    }
}

/// A projective model: ambient `C^n` with a homogeneous ideal.
pub struct SpaceModel {
    n: usize,
    ideal: Vec<Polynomial>,
    preset: Preset,
    dim: usize,
    sampler: Option<Sampler>,
    levels: Mutex<BTreeMap<usize, Arc<FockLevel>>>,
    embeddings: Mutex<HashMap<(usize, usize), Arc<CMat>>>,
    shifts: Mutex<HashMap<usize, Arc<Vec<CMat>>>>,
}

impl fmt::Debug for SpaceModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpaceModel")
            .field("n", &self.n)
            .field("ideal", &self.ideal)
            .field("preset", &self.preset)
            .field("dim", &self.dim)
            .finish()
    }
}

/// On-disk model description.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub n: usize,
    #[serde(default)]
    pub ideal: Vec<String>,
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub dim: Option<usize>,
}

impl SpaceModel {
    /// `CP^{n-1}`: no relations.
    pub fn projective(n: usize) -> Arc<Self> {
        Arc::new(Self::raw(n, Vec::new(), Preset::ProjectiveSpace, n.saturating_sub(1)))
    }

    /// `CP^1 x CP^1` in `CP^3` cut out by `z1 z4 - z2 z3`.
    pub fn segre11() -> Arc<Self> {
        let g = Polynomial::parse("z1*z4 - z2*z3", 4).expect("static ideal");
        Arc::new(Self::raw(4, vec![g], Preset::Segre11, 2))
    }

    /// Conic in `CP^2` cut out by `z2^2 - 2 z1 z3`.
    pub fn veronese_conic() -> Arc<Self> {
        let g = Polynomial::parse("z2^2 - 2*z1*z3", 3).expect("static ideal");
        Arc::new(Self::raw(3, vec![g], Preset::VeroneseConic, 1))
    }

    /// Model defined by user generators. The complex dimension is fitted
    /// from the Hilbert function when not supplied.
    pub fn custom(n: usize, ideal: Vec<Polynomial>, dim: Option<usize>) -> Result<Arc<Self>> {
        Self::custom_with_sampler(n, ideal, dim, None)
    }

    pub fn custom_with_sampler(
        n: usize,
        ideal: Vec<Polynomial>,
        dim: Option<usize>,
        sampler: Option<Sampler>,
    ) -> Result<Arc<Self>> {
        if n == 0 {
            return Err(Error::Invalid("ambient dimension must be positive".into()));
        }
        for (i, g) in ideal.iter().enumerate() {
            if g.nvars() != n {
                return Err(Error::VariableCount { expected: n, found: g.nvars() });
            }
            if g.homogeneous_degree().is_none() {
                return Err(Error::NonHomogeneous { index: i });
            }
        }
        let ideal: Vec<Polynomial> = ideal.into_iter().filter(|g| !g.is_zero()).collect();
        let mut model = Self::raw(n, ideal, Preset::Custom, 0);
        model.sampler = sampler;
        model.dim = match dim {
            Some(d) => d,
            None => model.fitted_dimension(),
        };
        Ok(Arc::new(model))
    }

    /// Parses a model description; known preset names take precedence over
    /// the listed ideal.
    pub fn from_file(spec: &ModelFile) -> Result<Arc<Self>> {
        if let Some(name) = &spec.preset {
            if let Some(model) = Self::from_preset_name(name) {
                if model.n != spec.n {
                    return Err(Error::VariableCount { expected: model.n, found: spec.n });
                }
                return Ok(model);
            }
            if name != "custom" {
                return Err(Error::Invalid(format!("unknown preset '{name}'")));
            }
        }
        let gens = spec
            .ideal
            .iter()
            .map(|s| Polynomial::parse(s, spec.n))
            .collect::<Result<Vec<_>>>()?;
        if gens.is_empty() && spec.dim.is_none_or(|d| d + 1 == spec.n) {
            return Ok(Self::projective(spec.n));
        }
        Self::custom(spec.n, gens, spec.dim)
    }

    /// `cp1`, `cp2`, `cp3` (or `cpN`), `segre11`, `veronese`.
    pub fn from_preset_name(name: &str) -> Option<Arc<Self>> {
        match name {
            "segre11" | "segre" => Some(Self::segre11()),
            "veronese" | "veronese_conic" | "veroneseConic" => Some(Self::veronese_conic()),
            other => {
                let k: usize = other.strip_prefix("cp")?.parse().ok()?;
                (k >= 1).then(|| Self::projective(k + 1))
            }
        }
    }

    fn raw(n: usize, ideal: Vec<Polynomial>, preset: Preset, dim: usize) -> Self {
        SpaceModel {
            n,
            ideal,
            preset,
            dim,
            sampler: None,
            levels: Mutex::new(BTreeMap::new()),
            embeddings: Mutex::new(HashMap::new()),
            shifts: Mutex::new(HashMap::new()),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn ideal(&self) -> &[Polynomial] {
        &self.ideal
    }

    pub fn preset(&self) -> Preset {
        self.preset
    }

    /// Complex dimension `d` of the projective variety.
    pub fn dimension(&self) -> usize {
        self.dim
    }

    pub fn has_sampler(&self) -> bool {
        self.sampler.is_some() || self.preset != Preset::Custom
    }

    pub fn level(&self, m: usize) -> Arc<FockLevel> {
        if let Some(l) = self.levels.lock().unwrap().get(&m) {
            return l.clone();
        }
        let built = Arc::new(self.build_level(m));
        self.levels.lock().unwrap().entry(m).or_insert(built).clone()
    }

    pub fn level_dim(&self, m: usize) -> usize {
        self.level(m).dim()
    }

    /// `(n_0, ..., n_{m_max})`.
    pub fn hilbert_function(&self, m_max: usize) -> Vec<usize> {
        (0..=m_max).map(|m| self.level_dim(m)).collect()
    }

    fn fitted_dimension(&self) -> usize {
        let window = if self.n <= 4 { 10 } else { 7 };
        let h: Vec<i64> = (0..=window).map(|m| self.level_dim(m) as i64).collect();
        fit::tail_polynomial_degree(&h).unwrap_or(0)
    }

    fn build_level(&self, m: usize) -> FockLevel {
        let monos = monomials(self.n, m);
        let lf = linalg::ln_factorials(m.max(1));
        let weights: Vec<f64> = monos.iter().map(|a| (a.ln_factorial(&lf) - lf[m]).exp()).collect();
        let amb = monos.len();
        let index = monomial_index(&monos);

        // Ideal slice g * z^b in normalized coordinates: coefficient of e_a
        // is coef(z^a) * sqrt(w_a).
        let mut cols: Vec<CVec> = Vec::new();
        for g in &self.ideal {
            let e = g.homogeneous_degree().unwrap_or(0);
            if e > m {
                continue;
            }
            for beta in monomials(self.n, m - e) {
                let mut v = CVec::zeros(amb);
                for (alpha, coef) in g.terms() {
                    let gamma = alpha.add(&beta);
                    let i = index[&gamma];
                    v[i] += coef * weights[i].sqrt();
                }
                cols.push(v);
            }
        }
        if cols.is_empty() {
            return FockLevel { m, monomials: monos, weights, basis: linalg::identity(amb), full: true };
        }
        let slice = CMat::from_columns(&cols);
        let (range, _) = linalg::range_and_complement(&slice, 1e-10);
        let complement = linalg::identity(amb) - &range * range.adjoint();
        let rank = amb - range.ncols();
        let basis = linalg::canonical_basis(&complement, rank);
        let full = rank == amb;
        let basis = if full { linalg::identity(amb) } else { basis };
        FockLevel { m, monomials: monos, weights, basis, full }
    }

    /// Shift matrices `S_α: GH_m -> GH_{m+1}` for `α = 1..n`, cached.
    pub fn shift_matrices(&self, m: usize) -> Arc<Vec<CMat>> {
        if let Some(s) = self.shifts.lock().unwrap().get(&m) {
            return s.clone();
        }
        let built = Arc::new(crate::shifts::build_shift_matrices(self, m));
        self.shifts.lock().unwrap().entry(m).or_insert(built).clone()
    }

    /// Isometry `V_{k,l}: GH_l -> GH_k ⊗ GH_{l-k}` in orthonormal
    /// coordinates; row index `a * n_{l-k} + b`.
    pub fn embedding(&self, k: usize, l: usize) -> Arc<CMat> {
        assert!(k <= l, "embedding requires k <= l");
        if let Some(v) = self.embeddings.lock().unwrap().get(&(k, l)) {
            return v.clone();
        }
        let built = Arc::new(self.build_embedding(k, l));
        self.embeddings.lock().unwrap().entry((k, l)).or_insert(built).clone()
    }

    fn build_embedding(&self, k: usize, l: usize) -> CMat {
        let j = l - k;
        let (lk, lj, ll) = (self.level(k), self.level(j), self.level(l));
        let lf = linalg::ln_factorials(l.max(1));
        let idx_k = monomial_index(&lk.monomials);
        let idx_j = monomial_index(&lj.monomials);
        let (ak, aj) = (lk.ambient_dim(), lj.ambient_dim());
        let base = lf[k] + lf[j] - lf[l];

        // Ambient map e_g -> sum_{a+b=g} sqrt(g! k! j! / (l! a! b!)) e_a ⊗ e_b.
        let mut ambient: Vec<Vec<(usize, usize, f64)>> = Vec::with_capacity(ll.ambient_dim());
        for gamma in &ll.monomials {
            let lg = gamma.ln_factorial(&lf);
            let mut entries = Vec::new();
            for alpha in &lk.monomials {
                if let Some(beta) = gamma.checked_sub(alpha) {
                    let coef = (0.5 * (lg + base - alpha.ln_factorial(&lf) - beta.ln_factorial(&lf))).exp();
                    entries.push((idx_k[alpha], idx_j[&beta], coef));
                }
            }
            ambient.push(entries);
        }

        let (nk, nj, nl) = (lk.dim(), lj.dim(), ll.dim());
        let mut out = CMat::zeros(nk * nj, nl);
        let qk_adj = lk.basis.adjoint();
        let qj_conj = lj.basis.map(|x| x.conj());
        for col in 0..nl {
            let mut y = CMat::zeros(ak, aj);
            for (g, entries) in ambient.iter().enumerate() {
                let q = if ll.full {
                    if g != col {
                        continue;
                    }
                    c(1.0)
                } else {
                    ll.basis[(g, col)]
                };
                if q == ZERO {
                    continue;
                }
                for &(a, b, coef) in entries {
                    y[(a, b)] += q * coef;
                }
            }
            let z = match (lk.full, lj.full) {
                (true, true) => y,
                (true, false) => y * &qj_conj,
                (false, true) => &qk_adj * y,
                (false, false) => &qk_adj * y * &qj_conj,
            };
            for a in 0..nk {
                for b in 0..nj {
                    out[(a * nj + b, col)] = z[(a, b)];
                }
            }
        }
        out
    }

    /// Checks that `coords` lies on the boundary sphere of the variety.
    pub fn boundary_point(&self, coords: Vec<C64>) -> Result<BoundaryPoint> {
        if coords.len() != self.n {
            return Err(Error::VariableCount { expected: self.n, found: coords.len() });
        }
        let norm = coords.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let gen = self.generator_residual(&coords);
        if (norm - 1.0).abs() > 1e-10 || gen > 1e-10 {
            return Err(Error::OffVariety { norm_defect: (norm - 1.0).abs(), generator_residual: gen });
        }
        Ok(BoundaryPoint { coords })
    }

    /// Largest `|g(z)|` over the generators.
    pub fn generator_residual(&self, z: &[C64]) -> f64 {
        self.ideal.iter().map(|g| g.eval(z).norm()).fold(0.0, f64::max)
    }

    /// Reproducible boundary samples from the preset parametrization.
    pub fn sample_boundary(&self, count: usize, seed: u64) -> Result<Vec<BoundaryPoint>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count).map(|_| self.draw(&mut rng)).collect()
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> Result<BoundaryPoint> {
        let coords = match (&self.sampler, self.preset) {
            (Some(s), _) => s(rng),
            (None, Preset::ProjectiveSpace) => unit_gaussian(rng, self.n),
            (None, Preset::Segre11) => {
                let a = unit_gaussian(rng, 2);
                let b = unit_gaussian(rng, 2);
                segre_point([a[0], a[1]], [b[0], b[1]]).to_vec()
            }
            (None, Preset::VeroneseConic) => {
                let u = unit_gaussian(rng, 2);
                veronese_point(u[0], u[1]).to_vec()
            }
            (None, Preset::Custom) => return Err(Error::NoSamplerAvailable),
        };
        let norm = coords.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let coords = coords.into_iter().map(|z| z / norm).collect();
        self.boundary_point(coords)
    }
}

/// A unit vector on the variety.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryPoint {
    coords: Vec<C64>,
}

impl BoundaryPoint {
    pub fn coords(&self) -> &[C64] {
        &self.coords
    }

    /// Interior point `r * ζ`.
    pub fn scaled(&self, r: f64) -> Vec<C64> {
        self.coords.iter().map(|z| z * r).collect()
    }
}

fn unit_gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<C64> {
    loop {
        let v: Vec<C64> = (0..n)
            .map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm > 1e-8 {
            return v.into_iter().map(|z| z / norm).collect();
        }
    }
}

/// Segre map `(a, b) -> (a1 b1, a1 b2, a2 b1, a2 b2)`.
pub fn segre_point(a: [C64; 2], b: [C64; 2]) -> [C64; 4] {
    [a[0] * b[0], a[0] * b[1], a[1] * b[0], a[1] * b[1]]
}

/// Veronese map `(u, v) -> (u^2, sqrt2 u v, v^2)`.
pub fn veronese_point(u: C64, v: C64) -> [C64; 3] {
    [u * u, u * v * 2f64.sqrt(), v * v]
}

/// Samples uniform complex-Gaussian directions, used for random tests.
pub fn random_unit_vector(rng: &mut impl Rng, n: usize) -> Vec<C64> {
    let v: Vec<C64> = (0..n)
        .map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|z| z / norm).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cz(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn projective_level_two_gram() {
        let model = SpaceModel::projective(2);
        let l = model.level(2);
        assert_eq!(l.dim(), 3);
        let g = l.fock_gram();
        let expect = [1.0, 0.5, 1.0];
        for (i, e) in expect.iter().enumerate() {
            assert!((g[(i, i)].re - e).abs() < 1e-15);
        }
    }

    #[test]
    fn onb_columns_are_fock_orthonormal() {
        for model in [SpaceModel::segre11(), SpaceModel::veronese_conic(), SpaceModel::projective(3)] {
            for m in 0..5 {
                let l = model.level(m);
                let q = l.onb_change();
                let gram = q.adjoint() * l.fock_gram() * &q;
                assert!(linalg::max_abs(&(gram - linalg::identity(l.dim()))) < 1e-12);
            }
        }
    }

    #[test]
    fn hilbert_functions_of_presets() {
        assert_eq!(SpaceModel::projective(2).hilbert_function(4), vec![1, 2, 3, 4, 5]);
        assert_eq!(SpaceModel::veronese_conic().hilbert_function(3), vec![1, 3, 5, 7]);
        assert_eq!(SpaceModel::segre11().hilbert_function(2), vec![1, 4, 9]);
        assert_eq!(SpaceModel::projective(3).level_dim(4), 15);
    }

    #[test]
    fn custom_dimension_is_fitted() {
        let g = Polynomial::parse("z1*z4 - z2*z3", 4).unwrap();
        let model = SpaceModel::custom(4, vec![g], None).unwrap();
        assert_eq!(model.dimension(), 2);
    }

    #[test]
    fn inhomogeneous_generator_rejected() {
        let g = Polynomial::parse("z1^2 + z2", 2).unwrap();
        assert!(matches!(SpaceModel::custom(2, vec![g], None), Err(Error::NonHomogeneous { index: 0 })));
    }

    #[test]
    fn embedding_is_isometric() {
        for model in [SpaceModel::projective(2), SpaceModel::segre11(), SpaceModel::veronese_conic()] {
            for (k, l) in [(0, 2), (1, 3), (2, 4), (3, 3)] {
                let v = model.embedding(k, l);
                let g = v.adjoint() * v.as_ref();
                assert!(linalg::max_abs(&(g - linalg::identity(model.level_dim(l)))) < 1e-12);
            }
        }
    }

    #[test]
    fn embedding_respects_evaluation() {
        // ψ_c(z) = sum_{a,b} V[(a,b),c] ψ_a(z) ψ_b(z) on the variety.
        let model = SpaceModel::segre11();
        let z = model.sample_boundary(1, 3).unwrap()[0].scaled(0.8);
        let v = model.embedding(1, 3);
        let (p1, p2, p3) = (
            model.level(1).eval_basis(&z),
            model.level(2).eval_basis(&z),
            model.level(3).eval_basis(&z),
        );
        let tensor = p1.kronecker(&p2);
        let lhs = v.transpose() * tensor;
        assert!((lhs - p3).norm() < 1e-10);
    }

    #[test]
    fn presets_sample_on_variety() {
        for model in [SpaceModel::projective(3), SpaceModel::segre11(), SpaceModel::veronese_conic()] {
            let pts = model.sample_boundary(20, 11).unwrap();
            for p in pts {
                let norm = p.coords().iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                assert!((norm - 1.0).abs() < 1e-12);
                assert!(model.generator_residual(p.coords()) < 1e-10);
            }
        }
    }

    #[test]
    fn sampling_is_reproducible() {
        let model = SpaceModel::projective(2);
        assert_eq!(model.sample_boundary(3, 7).unwrap(), model.sample_boundary(3, 7).unwrap());
    }

    #[test]
    fn parametrization_endpoints() {
        let one = cz(1.0, 0.0);
        let zero = cz(0.0, 0.0);
        assert_eq!(veronese_point(one, zero), [one, zero, zero]);
        assert_eq!(segre_point([one, zero], [one, zero]), [one, zero, zero, zero]);
    }

    #[test]
    fn custom_without_sampler_errors() {
        let g = Polynomial::parse("z1*z2", 2).unwrap();
        let model = SpaceModel::custom(2, vec![g], None).unwrap();
        assert!(matches!(model.sample_boundary(1, 0), Err(Error::NoSamplerAvailable)));
    }

    #[test]
    fn level_basis_orthogonal_to_ideal() {
        let model = SpaceModel::veronese_conic();
        for m in 2..6 {
            let l = model.level(m);
            let lf = linalg::ln_factorials(m);
            let idx = monomial_index(&l.monomials);
            for beta in monomials(3, m - 2) {
                let mut v = CVec::zeros(l.ambient_dim());
                for (alpha, coef) in model.ideal()[0].terms() {
                    let g = alpha.add(&beta);
                    let i = idx[&g];
                    v[i] += coef * (g.ln_factorial(&lf) - lf[m]).exp().sqrt();
                }
                assert!((l.basis.adjoint() * v).norm() < 1e-10);
            }
        }
    }
}
