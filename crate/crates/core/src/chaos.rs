//! Gaussian–Poisson chaos calculus on a finite-dimensional side.
//!
//! A side of a scenario is described by an [`OrthoBasis`]: `r` standard
//! Gaussian coordinates `g_i = φ_{h_i}` (the columns `h_i` of a factor `R`
//! with `Q = R Rᵀ`) and `m` atom counts `N_k ~ Poisson(ν_k)`. Functionals are
//! polynomials in `(g_1..g_r, N_1..N_m)` ([`TestFunction`]).
//!
//! Coefficient convention. Block `(j, k)` of level `n = j + k` stores the
//! mixed derivative `E[∂_g^α Δ^β F]` on multiset keys `(α, β)`, expressed in
//! the orthonormal bases `h_i` and `e_k = 1_{y_k}/√ν_k`. The full symmetric
//! level-`n` tensor repeats that block in `C(n, j)` slot arrangements, so
//!
//! * `‖c_n‖² = Σ_j C(n,j) Σ_{(α,β)} mult(α)·mult(β)·c²`, with
//!   `mult(α) = j!/Π α_i!` the number of orderings of the multiset;
//! * `I_n(c_n) = Σ_j C(n,j) Σ mult·c·Π He_{α_i}(g_i)·Π C_{β_k}(N_k;ν_k)/ν_k^{β_k/2}`;
//! * `F = Σ_n I_n(c_n)/n!` and `E F² = Σ_n ‖c_n‖²/n!`.
//!
//! The isometric (Fock) coordinates are `c_n/√(n!)`.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use thiserror::Error;

use crate::linalg;
use crate::poly::{univariate, Exponents, Poly};
use crate::sampler::{par_draw, poisson, standard_normals, McEstimate};
use crate::scalar::{binomial, factorial, Real};
use crate::triplet::{is_small, LevyTriplet};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChaosError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
}

/// Monic Hermite polynomial `He_n(x)`.
pub fn hermite<R: Real>(n: usize, x: R) -> R {
    let (mut prev, mut cur) = (R::zero(), R::one());
    for k in 0..n {
        let next = x * cur - R::lit(k as f64) * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Monic Charlier polynomial `C_n(x; a)`, orthogonal for Poisson(a).
pub fn charlier<R: Real>(n: usize, x: R, a: R) -> R {
    let (mut prev, mut cur) = (R::zero(), R::one());
    for k in 0..n {
        let kk = R::lit(k as f64);
        let next = (x - a - kk) * cur - kk * a * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Coefficients (lowest degree first) of `He_n`.
pub fn hermite_coeffs<R: Real>(n: usize) -> Vec<R> {
    let mut prev: Vec<R> = vec![];
    let mut cur = vec![R::one()];
    for k in 0..n {
        let mut next = vec![R::zero(); cur.len() + 1];
        for (i, c) in cur.iter().enumerate() {
            next[i + 1] += *c;
        }
        for (i, c) in prev.iter().enumerate() {
            next[i] -= R::lit(k as f64) * *c;
        }
        prev = cur;
        cur = next;
    }
    cur
}

/// Coefficients (lowest degree first) of `C_n(·; a)`.
pub fn charlier_coeffs<R: Real>(n: usize, a: R) -> Vec<R> {
    let mut prev: Vec<R> = vec![];
    let mut cur = vec![R::one()];
    for k in 0..n {
        let kk = R::lit(k as f64);
        let mut next = vec![R::zero(); cur.len() + 1];
        for (i, c) in cur.iter().enumerate() {
            next[i + 1] += *c;
            next[i] -= (a + kk) * *c;
        }
        for (i, c) in prev.iter().enumerate() {
            next[i] -= kk * a * *c;
        }
        prev = cur;
        cur = next;
    }
    cur
}

/// `E g^p` for standard normal `g`: `(p−1)!!` for even `p`, else 0.
pub fn gaussian_moment<R: Real>(p: u32) -> R {
    if p % 2 == 1 {
        return R::zero();
    }
    (1..p).step_by(2).fold(R::one(), |acc, k| acc * R::lit(f64::from(k)))
}

/// Stirling numbers of the second kind `S(n, i)` for `i ≤ n`.
fn stirling2(n: usize) -> Vec<f64> {
    let mut row = vec![1.0];
    for m in 1..=n {
        let mut next = vec![0.0; m + 1];
        for i in 1..=m {
            let keep = if i < row.len() { i as f64 * row[i] } else { 0.0 };
            next[i] = keep + row[i - 1];
        }
        row = next;
    }
    row
}

/// `E N^p` for `N ~ Poisson(a)`, via factorial moments `E (N)_i = a^i`.
pub fn poisson_moment<R: Real>(p: u32, a: R) -> R {
    let s = stirling2(p as usize);
    let mut total = R::zero();
    let mut ai = R::one();
    for c in s {
        total += R::lit(c) * ai;
        ai *= a;
    }
    total
}

/// Multiset of basis indices, stored sorted.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Multiset(pub Vec<usize>);

impl Multiset {
    pub fn from_unsorted(mut v: Vec<usize>) -> Self {
        v.sort_unstable();
        Self(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Multiplicity vector over `0..size`.
    pub fn multiplicities(&self, size: usize) -> Vec<u32> {
        let mut m = vec![0u32; size];
        for &i in &self.0 {
            m[i] += 1;
        }
        m
    }

    /// Number of distinct orderings, `len!/Π mult!`.
    pub fn orderings(&self) -> f64 {
        let mut out = factorial::<f64>(self.0.len());
        let mut i = 0;
        while i < self.0.len() {
            let j = self.0[i..].iter().take_while(|&&x| x == self.0[i]).count();
            out /= factorial::<f64>(j);
            i += j;
        }
        out
    }

    /// All multisets of size `n` over `0..size`, in lexicographic order.
    pub fn all(size: usize, n: usize) -> Vec<Multiset> {
        let mut out = Vec::new();
        let mut cur = Vec::with_capacity(n);
        fn rec(size: usize, n: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Multiset>) {
            if cur.len() == n {
                out.push(Multiset(cur.clone()));
                return;
            }
            for i in start..size {
                cur.push(i);
                rec(size, n, i, cur, out);
                cur.pop();
            }
        }
        if n == 0 || size > 0 {
            rec(size, n, 0, &mut cur, &mut out);
        }
        out
    }
}

impl fmt::Display for Multiset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|i| i.to_string()).collect();
        write!(f, "{}", parts.join(","))
    }
}

/// Key of a coefficient in block `(j, k)`: a Gaussian and an atom multiset.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BlockKey {
    pub gauss: Multiset,
    pub atoms: Multiset,
}

impl BlockKey {
    pub fn orderings(&self) -> f64 {
        self.gauss.orderings() * self.atoms.orderings()
    }
}

impl fmt::Display for BlockKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}|{}", self.gauss, self.atoms)
    }
}

/// Symmetric tensor block `(j, k)` of `H_γ^{⊙j} ⊗ L²(ν)^{⊙k}` in multiset coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct SymTensor<R: Real> {
    pub j: usize,
    pub k: usize,
    pub coeffs: BTreeMap<BlockKey, R>,
}

impl<R: Real> SymTensor<R> {
    pub fn zero(j: usize, k: usize) -> Self {
        Self { j, k, coeffs: BTreeMap::new() }
    }

    pub fn level(&self) -> usize {
        self.j + self.k
    }

    pub fn get(&self, key: &BlockKey) -> R {
        self.coeffs.get(key).copied().unwrap_or_else(R::zero)
    }

    pub fn insert(&mut self, key: BlockKey, value: R) {
        debug_assert_eq!(key.gauss.len(), self.j);
        debug_assert_eq!(key.atoms.len(), self.k);
        if value != R::zero() {
            self.coeffs.insert(key, value);
        } else {
            self.coeffs.remove(&key);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.values().all(|v| *v == R::zero())
    }

    /// `Σ mult·c²`, the Hilbert norm² of the block as a symmetric tensor.
    pub fn norm_sq(&self) -> R {
        self.coeffs.iter().fold(R::zero(), |acc, (key, c)| acc + R::lit(key.orderings()) * *c * *c)
    }

    pub fn inner(&self, other: &Self) -> R {
        self.coeffs
            .iter()
            .fold(R::zero(), |acc, (key, c)| acc + R::lit(key.orderings()) * *c * other.get(key))
    }

    pub fn max_abs_diff(&self, other: &Self) -> R {
        let mut worst = R::zero();
        for key in self.coeffs.keys().chain(other.coeffs.keys()) {
            let d = (self.get(key) - other.get(key)).abs();
            if d > worst {
                worst = d;
            }
        }
        worst
    }
}

/// Gaussian coordinates and atom intensities of one side.
#[derive(Clone, Debug)]
pub struct OrthoBasis<R: Real> {
    /// `d × r` factor with `Q = R Rᵀ`; column `i` is the Cameron–Martin vector `h_i`.
    pub factor: DMatrix<R>,
    pub points: Vec<DVector<R>>,
    pub intensities: Vec<R>,
    pub drift: DVector<R>,
    /// `ν_k·[‖y_k‖≤1]`, subtracted from the count in the Lévy–Itô sum.
    pub compensators: Vec<R>,
}

impl<R: Real> OrthoBasis<R> {
    pub fn of_triplet(t: &LevyTriplet<R>) -> Self {
        let atoms = t.jumps().atoms();
        Self {
            factor: linalg::pivoted_cholesky(t.cov(), R::psd_tol()),
            points: atoms.iter().map(|a| a.point.clone()).collect(),
            intensities: atoms.iter().map(|a| a.weight).collect(),
            drift: t.drift().clone(),
            compensators: atoms.iter().map(|a| if is_small(&a.point) { a.weight } else { R::zero() }).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.drift.len()
    }

    pub fn r(&self) -> usize {
        self.factor.ncols()
    }

    pub fn m(&self) -> usize {
        self.intensities.len()
    }

    pub fn nvars(&self) -> usize {
        self.r() + self.m()
    }

    /// Gram matrix `Rᵀ Q⁺ R` of the Gaussian basis in the Cameron–Martin inner product.
    pub fn gaussian_gram(&self, cov: &DMatrix<R>) -> DMatrix<R> {
        self.factor.transpose() * linalg::pseudo_inverse(cov) * &self.factor
    }

    /// `⟨e_a, e_b⟩_{L²(ν)}` for the normalised indicators.
    pub fn poisson_gram(&self) -> DMatrix<R> {
        let m = self.m();
        DMatrix::from_fn(m, m, |a, b| {
            if a == b {
                let e = R::one() / self.intensities[a].sqrt();
                self.intensities[a] * e * e
            } else {
                R::zero()
            }
        })
    }

    /// The state `ξ + R g + Σ_k (N_k − c_k) y_k` (the j-map realised on a configuration).
    pub fn state(&self, g: &[R], counts: &[R]) -> DVector<R> {
        let mut x = self.drift.clone();
        for (i, gi) in g.iter().enumerate() {
            x += self.factor.column(i) * *gi;
        }
        for ((p, n), c) in self.points.iter().zip(counts).zip(&self.compensators) {
            x += p * (*n - *c);
        }
        x
    }

    /// `F_f` in chaos coordinates: substitute the state into the ambient polynomial `f`.
    pub fn lift(&self, f: &Poly<R>) -> Result<TestFunction<R>, ChaosError> {
        if f.nvars() != self.dim() {
            return Err(ChaosError::DimensionMismatch { expected: self.dim(), found: f.nvars() });
        }
        let nv = self.nvars();
        let r = self.r();
        let images: Vec<Poly<R>> = (0..self.dim())
            .map(|i| {
                let mut p = Poly::zero(nv);
                let mut constant = self.drift[i];
                for a in 0..r {
                    let mut e = vec![0; nv];
                    e[a] = 1;
                    p.add_term(e, self.factor[(i, a)]);
                }
                for (k, y) in self.points.iter().enumerate() {
                    let mut e = vec![0; nv];
                    e[r + k] = 1;
                    p.add_term(e, y[i]);
                    constant -= self.compensators[k] * y[i];
                }
                p.add_term(vec![0; nv], constant);
                p
            })
            .collect();
        Ok(TestFunction { r, m: self.m(), poly: f.compose(&images, nv) })
    }

    /// Independent draw of `(g, N)` from the product measure.
    pub fn draw<G: rand::Rng + ?Sized>(&self, rng: &mut G) -> (Vec<R>, Vec<R>) {
        let g = standard_normals(rng, self.r()).into_iter().map(R::lit).collect();
        let n = self.intensities.iter().map(|a| R::lit(poisson(rng, a.as_f64()) as f64)).collect();
        (g, n)
    }
}

/// Polynomial functional of `(g_1..g_r, N_1..N_m)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TestFunction<R: Real> {
    pub r: usize,
    pub m: usize,
    pub poly: Poly<R>,
}

impl<R: Real> TestFunction<R> {
    pub fn new(r: usize, m: usize, poly: Poly<R>) -> Result<Self, ChaosError> {
        if poly.nvars() != r + m {
            return Err(ChaosError::DimensionMismatch { expected: r + m, found: poly.nvars() });
        }
        Ok(Self { r, m, poly })
    }

    pub fn zero(r: usize, m: usize) -> Self {
        Self { r, m, poly: Poly::zero(r + m) }
    }

    pub fn constant(r: usize, m: usize, c: R) -> Self {
        Self { r, m, poly: Poly::constant(r + m, c) }
    }

    /// The Gaussian coordinate `g_i`.
    pub fn g(r: usize, m: usize, i: usize) -> Self {
        Self { r, m, poly: Poly::var(r + m, i) }
    }

    /// The atom count `N_k`.
    pub fn count(r: usize, m: usize, k: usize) -> Self {
        Self { r, m, poly: Poly::var(r + m, r + k) }
    }

    pub fn degree(&self) -> usize {
        self.poly.total_degree()
    }

    pub fn mul(&self, other: &Self) -> Self {
        Self { r: self.r, m: self.m, poly: &self.poly * &other.poly }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self { r: self.r, m: self.m, poly: &self.poly + &other.poly }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self { r: self.r, m: self.m, poly: &self.poly - &other.poly }
    }

    pub fn eval(&self, g: &[R], counts: &[R]) -> R {
        let x: Vec<R> = g.iter().chain(counts).copied().collect();
        self.poly.eval(&x)
    }

    /// `∂_{g_i}` applied once per entry of `dirs`.
    pub fn gaussian_derivative(&self, dirs: &[usize]) -> Self {
        let mut p = self.poly.clone();
        for &i in dirs {
            p = p.derivative(i);
        }
        Self { r: self.r, m: self.m, poly: p }
    }

    /// Iterated add-point difference `D̃^n_{y_{k_1},…,y_{k_n}}`, one substitution
    /// `N_k → N_k + 1` at a time. The top power of `N_k` cancels exactly in each
    /// step, so high enough orders give the zero polynomial exactly.
    pub fn add_point_difference(&self, atoms: &[usize]) -> Self {
        let mut p = self.poly.clone();
        for &k in atoms {
            if p.is_zero() {
                break;
            }
            p = &p.shift(self.r + k, &R::one()) - &p;
        }
        Self { r: self.r, m: self.m, poly: p }
    }

    /// Exact `E F` under the product of standard Gaussians and Poisson counts.
    pub fn expectation(&self, intensities: &[R]) -> R {
        assert_eq!(intensities.len(), self.m, "one intensity per atom");
        let mut total = R::zero();
        for (e, c) in self.poly.terms() {
            total += *c * monomial_expectation(e, self.r, intensities);
        }
        total
    }
}

fn monomial_expectation<R: Real>(e: &Exponents, r: usize, intensities: &[R]) -> R {
    let mut v = R::one();
    for &p in &e[..r] {
        v *= gaussian_moment::<R>(p);
        if v == R::zero() {
            return v;
        }
    }
    for (p, a) in e[r..].iter().zip(intensities) {
        v *= poisson_moment(*p, *a);
    }
    v
}

fn block_value<R: Real>(f: &TestFunction<R>, key: &BlockKey, intensities: &[R]) -> R {
    let d = f.gaussian_derivative(&key.gauss.0).add_point_difference(&key.atoms.0);
    let mut scale = R::one();
    for &k in &key.atoms.0 {
        scale *= intensities[k].sqrt();
    }
    d.expectation(intensities) * scale
}

/// Block `(j, k)` of `E D^{j+k} F`.
pub fn joint_block<R: Real>(f: &TestFunction<R>, basis: &OrthoBasis<R>, j: usize, k: usize) -> SymTensor<R> {
    let keys: Vec<BlockKey> = Multiset::all(f.r, j)
        .into_iter()
        .flat_map(|g| Multiset::all(f.m, k).into_iter().map(move |a| BlockKey { gauss: g.clone(), atoms: a }))
        .collect();
    let values: Vec<(BlockKey, R)> =
        keys.into_par_iter().map(|key| {
            let v = block_value(f, &key, &basis.intensities);
            (key, v)
        }).collect();
    let mut t = SymTensor::zero(j, k);
    for (key, v) in values {
        t.insert(key, v);
    }
    t
}

/// `E D_γ^n F`, block `(n, 0)`.
pub fn gaussian_derivative_coeff<R: Real>(f: &TestFunction<R>, basis: &OrthoBasis<R>, n: usize) -> SymTensor<R> {
    joint_block(f, basis, n, 0)
}

/// `E D̃^n F` in the normalised indicator basis, block `(0, n)`.
pub fn poisson_derivative_coeff<R: Real>(f: &TestFunction<R>, basis: &OrthoBasis<R>, n: usize) -> SymTensor<R> {
    joint_block(f, basis, 0, n)
}

/// All blocks `(j, n − j)` of level `n`, indexed by `j`.
pub fn joint_coeff<R: Real>(f: &TestFunction<R>, basis: &OrthoBasis<R>, n: usize) -> Vec<SymTensor<R>> {
    (0..=n).map(|j| joint_block(f, basis, j, n - j)).collect()
}

/// Truncated chaos expansion: `levels[n][j]` is block `(j, n − j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChaosCoefficients<R: Real> {
    pub r: usize,
    pub m: usize,
    pub intensities: Vec<R>,
    pub levels: Vec<Vec<SymTensor<R>>>,
}

impl<R: Real> ChaosCoefficients<R> {
    pub fn max_level(&self) -> usize {
        self.levels.len().saturating_sub(1)
    }

    pub fn block(&self, n: usize, j: usize) -> Option<&SymTensor<R>> {
        self.levels.get(n).and_then(|l| l.get(j))
    }

    /// `‖c_n‖²` including the `C(n, j)` arrangement weights.
    pub fn level_norm_sq(&self, n: usize) -> R {
        self.levels[n]
            .iter()
            .enumerate()
            .fold(R::zero(), |acc, (j, b)| acc + binomial::<R>(n, j) * b.norm_sq())
    }

    /// `Σ_n ‖c_n‖²/n!`, the squared norm in the Fock space.
    pub fn fock_norm_sq(&self) -> R {
        (0..self.levels.len()).fold(R::zero(), |acc, n| acc + self.level_norm_sq(n) / factorial::<R>(n))
    }

    /// Largest coefficient difference at a given level.
    pub fn level_max_diff(&self, other: &Self, n: usize) -> R {
        let mut worst = R::zero();
        for (a, b) in self.levels[n].iter().zip(&other.levels[n]) {
            let d = a.max_abs_diff(b);
            if d > worst {
                worst = d;
            }
        }
        worst
    }

    /// Largest difference of isometric coordinates `√(C(n,j)·mult/n!)·c` over all levels.
    pub fn isometric_max_diff(&self, other: &Self) -> R {
        let mut worst = R::zero();
        for n in 0..self.levels.len().min(other.levels.len()) {
            let fact = factorial::<R>(n);
            for (j, (a, b)) in self.levels[n].iter().zip(&other.levels[n]).enumerate() {
                let w = binomial::<R>(n, j) / fact;
                for key in a.coeffs.keys().chain(b.coeffs.keys()) {
                    let d = (a.get(key) - b.get(key)).abs() * (w * R::lit(key.orderings())).sqrt();
                    if d > worst {
                        worst = d;
                    }
                }
            }
        }
        worst
    }
}

/// Chaos coefficients of `f` up to level `n_max`.
pub fn expand<R: Real>(f: &TestFunction<R>, basis: &OrthoBasis<R>, n_max: usize) -> ChaosCoefficients<R> {
    ChaosCoefficients {
        r: f.r,
        m: f.m,
        intensities: basis.intensities.clone(),
        levels: (0..=n_max).map(|n| joint_coeff(f, basis, n)).collect(),
    }
}

/// `I_{j,k}` of one block evaluated at a sample; no `C(n, j)` factor.
pub fn multiple_integral<R: Real>(
    tensor: &SymTensor<R>,
    intensities: &[R],
    g: &[R],
    counts: &[R],
) -> Result<R, ChaosError> {
    if counts.len() != intensities.len() {
        return Err(ChaosError::DimensionMismatch { expected: intensities.len(), found: counts.len() });
    }
    let mut total = R::zero();
    for (key, c) in &tensor.coeffs {
        let mut v = *c * R::lit(key.orderings());
        for (i, a) in key.gauss.multiplicities(g.len()).iter().enumerate() {
            if *a > 0 {
                v *= hermite(*a as usize, g[i]);
            }
        }
        if key.gauss.0.iter().any(|&i| i >= g.len()) {
            return Err(ChaosError::DimensionMismatch { expected: key.gauss.0.iter().max().unwrap() + 1, found: g.len() });
        }
        for (k, b) in key.atoms.multiplicities(counts.len()).iter().enumerate() {
            if *b > 0 {
                let nu = intensities[k];
                v *= charlier(*b as usize, counts[k], nu) / nu.powi(*b as i32).sqrt();
            }
        }
        total += v;
    }
    Ok(total)
}

/// `I_n(c_n)` at a sample.
pub fn level_integral<R: Real>(coeffs: &ChaosCoefficients<R>, n: usize, g: &[R], counts: &[R]) -> Result<R, ChaosError> {
    let mut total = R::zero();
    for (j, b) in coeffs.levels[n].iter().enumerate() {
        total += binomial::<R>(n, j) * multiple_integral(b, &coeffs.intensities, g, counts)?;
    }
    Ok(total)
}

/// `Σ_n I_n(c_n)/n!` at a sample.
pub fn reconstruct<R: Real>(coeffs: &ChaosCoefficients<R>, g: &[R], counts: &[R]) -> Result<R, ChaosError> {
    let mut total = R::zero();
    for n in 0..coeffs.levels.len() {
        total += level_integral(coeffs, n, g, counts)? / factorial::<R>(n);
    }
    Ok(total)
}

/// The reconstruction as an explicit polynomial in `(g, N)`.
pub fn reconstruct_poly<R: Real>(coeffs: &ChaosCoefficients<R>) -> TestFunction<R> {
    let (r, m) = (coeffs.r, coeffs.m);
    let nv = r + m;
    let mut out = Poly::zero(nv);
    for (n, level) in coeffs.levels.iter().enumerate() {
        let fact = factorial::<R>(n);
        for (j, block) in level.iter().enumerate() {
            let w = binomial::<R>(n, j) / fact;
            for (key, c) in &block.coeffs {
                let mut term = Poly::constant(nv, *c * R::lit(key.orderings()) * w);
                for (i, a) in key.gauss.multiplicities(r).iter().enumerate() {
                    if *a > 0 {
                        term = &term * &univariate(nv, i, &hermite_coeffs::<R>(*a as usize));
                    }
                }
                for (k, b) in key.atoms.multiplicities(m).iter().enumerate() {
                    if *b > 0 {
                        let nu = coeffs.intensities[k];
                        let scale = R::one() / nu.powi(*b as i32).sqrt();
                        let cs: Vec<R> = charlier_coeffs(*b as usize, nu).into_iter().map(|c| c * scale).collect();
                        term = &term * &univariate(nv, r + k, &cs);
                    }
                }
                out = &out + &term;
            }
        }
    }
    TestFunction { r, m, poly: out }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Exact,
    MonteCarlo { samples: usize, seed: u64, workers: usize },
}

/// Squared L² residual `E (f − Σ I_n/n!)²` and its relative size.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct L2Error {
    pub residual_sq: McEstimate,
    /// `E f²` under the same mode.
    pub norm_sq: McEstimate,
    pub relative: f64,
}

pub fn l2_error<R: Real>(f: &TestFunction<R>, coeffs: &ChaosCoefficients<R>, basis: &OrthoBasis<R>, mode: Mode) -> L2Error {
    match mode {
        Mode::Exact => {
            let diff = f.sub(&reconstruct_poly(coeffs));
            let res = diff.mul(&diff).expectation(&basis.intensities).as_f64();
            let norm = f.mul(f).expectation(&basis.intensities).as_f64();
            let exact = |v: f64| McEstimate { estimate: v, se: 0.0, n: 0 };
            L2Error { residual_sq: exact(res), norm_sq: exact(norm), relative: relative(res, norm) }
        }
        Mode::MonteCarlo { samples, seed, workers } => {
            let pairs: Vec<(f64, f64)> = par_draw(seed, samples, workers, |rng| {
                let (g, n) = basis.draw(rng);
                let fv = f.eval(&g, &n);
                let rv = reconstruct(coeffs, &g, &n).expect("basis-shaped sample");
                ((fv - rv).as_f64().powi(2), fv.as_f64().powi(2))
            });
            let res = McEstimate::from_values(&pairs.iter().map(|p| p.0).collect::<Vec<_>>());
            let norm = McEstimate::from_values(&pairs.iter().map(|p| p.1).collect::<Vec<_>>());
            L2Error { residual_sq: res, norm_sq: norm, relative: relative(res.estimate, norm.estimate) }
        }
    }
}

fn relative(res: f64, norm: f64) -> f64 {
    let res = res.max(0.0);
    if norm > 0.0 {
        (res / norm).sqrt()
    } else {
        res.sqrt()
    }
}
