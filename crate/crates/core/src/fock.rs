//! Second quantisation over `H_γ ⊕ L²(ν)` and the transition operator `P_T`.
//!
//! Both blocks of a [`ContractionPair`] act on coordinates: row index on the
//! `λ₁` side, column index on the `λ₂` side. So `gaussian_block` is `r1 × r2`
//! and `poisson_block` is `m1 × m2`, and a side-2 coefficient vector `c` is
//! carried to `block · c` on side 1.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use thiserror::Error;

use crate::chaos::{BlockKey, ChaosCoefficients, Multiset, SymTensor};
use crate::linalg;
use crate::poly::Poly;
use crate::sampler::{par_draw, GroundSpace, IdSampler, McEstimate};
use crate::scalar::{binomial, Real};
use crate::skew::SkewError;
use crate::triplet::{AtomicMeasure, LevyTriplet, TripletError};

/// Largest degree accepted by [`apply_pt_exact`].
pub const MOMENT_DEGREE_CAP: usize = 12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FockError {
    #[error(transparent)]
    Skew(#[from] SkewError),
    #[error(transparent)]
    Triplet(#[from] TripletError),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("polynomial degree {degree} exceeds the moment cap {cap}")]
    DegreeTooHigh { degree: usize, cap: usize },
    #[error("{block} block has operator norm {norm} > 1")]
    NotContractive { block: &'static str, norm: f64 },
}

fn check_contraction<R: Real>(m: &DMatrix<R>, block: &'static str) -> Result<R, FockError> {
    let norm = linalg::operator_norm(m);
    if norm > R::one() + R::norm_tol() {
        return Err(FockError::NotContractive { block, norm: norm.as_f64() });
    }
    Ok(norm)
}

/// `Bᵀ` with `B = R₂⁺ T R₁`, the adjoint of `T` restricted to the Cameron–Martin spaces.
pub fn restriction_contraction<R: Real>(
    t: &DMatrix<R>,
    q1: &DMatrix<R>,
    q2: &DMatrix<R>,
) -> Result<DMatrix<R>, FockError> {
    if t.ncols() != q1.nrows() {
        return Err(FockError::DimensionMismatch { expected: q1.nrows(), found: t.ncols() });
    }
    if t.nrows() != q2.nrows() {
        return Err(FockError::DimensionMismatch { expected: q2.nrows(), found: t.nrows() });
    }
    let gap = q2 - t * q1 * t.transpose();
    let min_eig = linalg::min_eigenvalue(&gap);
    if min_eig < -R::psd_tol() {
        return Err(SkewError::NotSkewGaussian { min_eigenvalue: min_eig.as_f64() }.into());
    }
    let r1 = linalg::pivoted_cholesky(q1, R::psd_tol());
    let r2 = linalg::pivoted_cholesky(q2, R::psd_tol());
    let b = linalg::pseudo_inverse(&r2) * t * r1;
    let block = b.transpose();
    check_contraction(&block, "gaussian")?;
    Ok(block)
}

/// Composition `g ↦ g∘T` from `L²(ν₂)` to `L²(ν₁)` in normalised indicator bases.
pub fn poisson_composition<R: Real>(
    t: &DMatrix<R>,
    g1: &GroundSpace<R>,
    g2: &GroundSpace<R>,
) -> Result<DMatrix<R>, FockError> {
    let mut block = DMatrix::zeros(g1.len(), g2.len());
    let mut pushed = vec![R::zero(); g2.len()];
    for (k, (y, w)) in g1.points().iter().zip(g1.intensities()).enumerate() {
        if y.len() != t.ncols() {
            return Err(FockError::DimensionMismatch { expected: t.ncols(), found: y.len() });
        }
        let z = t * y;
        if z.norm() <= R::snap_tol() {
            continue;
        }
        let Some(l) = g2.index_of(&z) else {
            return Err(SkewError::NotSkewJump { point: z.iter().map(|v| v.as_f64()).collect(), weight: -w.as_f64() }.into());
        };
        pushed[l] += *w;
        block[(k, l)] = (*w / g2.intensities()[l]).sqrt();
    }
    for (l, p) in pushed.iter().enumerate() {
        let slack = g2.intensities()[l] - *p;
        if slack < -R::weight_tol() {
            return Err(SkewError::NotSkewJump {
                point: g2.points()[l].iter().map(|v| v.as_f64()).collect(),
                weight: slack.as_f64(),
            }
            .into());
        }
    }
    check_contraction(&block, "poisson")?;
    Ok(block)
}

/// The pair `(B_γ, B_π)` with the side-1 intensities needed to read the image coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct ContractionPair<R: Real> {
    pub gaussian_block: DMatrix<R>,
    pub poisson_block: DMatrix<R>,
    pub target_intensities: Vec<R>,
}

impl<R: Real> ContractionPair<R> {
    pub fn new(t: &DMatrix<R>, t1: &LevyTriplet<R>, t2: &LevyTriplet<R>) -> Result<Self, FockError> {
        let gaussian_block = restriction_contraction(t, t1.cov(), t2.cov())?;
        let g1 = GroundSpace::of_triplet(t1);
        let poisson_block = poisson_composition(t, &g1, &GroundSpace::of_triplet(t2))?;
        Ok(Self { gaussian_block, poisson_block, target_intensities: g1.intensities().to_vec() })
    }

    pub fn identity(r: usize, intensities: Vec<R>) -> Self {
        let m = intensities.len();
        Self { gaussian_block: DMatrix::identity(r, r), poisson_block: DMatrix::identity(m, m), target_intensities: intensities }
    }

    pub fn source_dims(&self) -> (usize, usize) {
        (self.gaussian_block.ncols(), self.poisson_block.ncols())
    }

    pub fn target_dims(&self) -> (usize, usize) {
        (self.gaussian_block.nrows(), self.poisson_block.nrows())
    }

    pub fn gaussian_norm(&self) -> R {
        linalg::operator_norm(&self.gaussian_block)
    }

    pub fn poisson_norm(&self) -> R {
        linalg::operator_norm(&self.poisson_block)
    }

    /// Operator norm of `B_γ^{⊗j} ⊗ B_π^{⊗k}`.
    pub fn block_norm(&self, j: usize, k: usize) -> R {
        self.gaussian_norm().powi(j as i32) * self.poisson_norm().powi(k as i32)
    }

    /// Operator norm of the whole level `n` of `Γ`.
    pub fn level_norm(&self, n: usize) -> R {
        (0..=n).map(|j| self.block_norm(j, n - j)).fold(R::zero(), |a, b| if b > a { b } else { a })
    }

    /// `B_γ^{⊗j} ⊗ B_π^{⊗k}` on one block.
    pub fn apply_block(&self, block: &SymTensor<R>) -> SymTensor<R> {
        let (r1, m1) = self.target_dims();
        let (j, k) = (block.j, block.k);
        let keys: Vec<BlockKey> = Multiset::all(r1, j)
            .into_iter()
            .flat_map(|g| Multiset::all(m1, k).into_iter().map(move |a| BlockKey { gauss: g.clone(), atoms: a }))
            .collect();
        let mut out = SymTensor::zero(j, k);
        for key in keys {
            let v = self.image_coeff(block, &key);
            out.insert(key, v);
        }
        out
    }

    fn image_coeff(&self, block: &SymTensor<R>, key: &BlockKey) -> R {
        let slot_options = |m: &DMatrix<R>, row: usize| -> Vec<(usize, R)> {
            (0..m.ncols()).map(|c| (c, m[(row, c)])).filter(|(_, v)| *v != R::zero()).collect()
        };
        let g_slots: Vec<Vec<(usize, R)>> = key.gauss.0.iter().map(|&i| slot_options(&self.gaussian_block, i)).collect();
        let p_slots: Vec<Vec<(usize, R)>> = key.atoms.0.iter().map(|&i| slot_options(&self.poisson_block, i)).collect();
        if g_slots.iter().chain(&p_slots).any(|s| s.is_empty()) {
            return R::zero();
        }
        let mut total = R::zero();
        for (ga, gw) in tuples(&g_slots) {
            for (pa, pw) in tuples(&p_slots) {
                let src = BlockKey { gauss: Multiset::from_unsorted(ga.clone()), atoms: Multiset::from_unsorted(pa) };
                total += gw * pw * block.get(&src);
            }
        }
        total
    }
}

/// Every choice of one entry per slot, with the product of weights.
fn tuples<R: Real>(slots: &[Vec<(usize, R)>]) -> Vec<(Vec<usize>, R)> {
    let mut out = vec![(Vec::with_capacity(slots.len()), R::one())];
    for slot in slots {
        out = out
            .into_iter()
            .flat_map(|(idx, w)| {
                slot.iter().map(move |&(c, v)| {
                    let mut idx = idx.clone();
                    idx.push(c);
                    (idx, w * v)
                })
            })
            .collect();
    }
    out
}

/// `Γ(pair)`: apply `B_γ^{⊗j} ⊗ B_π^{⊗k}` to every block.
pub fn gamma_apply<R: Real>(pair: &ContractionPair<R>, coeffs: &ChaosCoefficients<R>) -> Result<ChaosCoefficients<R>, FockError> {
    let (r2, m2) = pair.source_dims();
    if coeffs.r != r2 {
        return Err(FockError::DimensionMismatch { expected: r2, found: coeffs.r });
    }
    if coeffs.m != m2 {
        return Err(FockError::DimensionMismatch { expected: m2, found: coeffs.m });
    }
    let (r1, m1) = pair.target_dims();
    let levels = coeffs
        .levels
        .par_iter()
        .map(|level| level.iter().map(|b| pair.apply_block(b)).collect())
        .collect();
    Ok(ChaosCoefficients { r: r1, m: m1, intensities: pair.target_intensities.clone(), levels })
}

/// Mixed moments `E Y^α` of an ID law, built from its joint cumulants.
pub struct MomentTable<'a, R: Real> {
    law: &'a LevyTriplet<R>,
    cumulants: HashMap<Vec<u32>, R>,
    moments: HashMap<Vec<u32>, R>,
}

impl<'a, R: Real> MomentTable<'a, R> {
    pub fn new(law: &'a LevyTriplet<R>) -> Self {
        Self { law, cumulants: HashMap::new(), moments: HashMap::new() }
    }

    fn cumulant(&mut self, alpha: &[u32]) -> R {
        if let Some(v) = self.cumulants.get(alpha) {
            return *v;
        }
        let v = self.law.joint_cumulant(alpha).expect("multi-index has the law's dimension");
        self.cumulants.insert(alpha.to_vec(), v);
        v
    }

    /// `m(α) = Σ_{β ≤ α−e_i} C(α−e_i, β) κ(β+e_i) m(α−e_i−β)` for the first `i` with `α_i > 0`.
    pub fn moment(&mut self, alpha: &[u32]) -> R {
        if let Some(v) = self.moments.get(alpha) {
            return *v;
        }
        let Some(i) = alpha.iter().position(|&a| a > 0) else {
            return R::one();
        };
        let mut rest = alpha.to_vec();
        rest[i] -= 1;
        let mut beta = vec![0u32; alpha.len()];
        let mut total = R::zero();
        loop {
            let mut weight = R::one();
            for (b, r) in beta.iter().zip(&rest) {
                weight *= binomial::<R>(*r as usize, *b as usize);
            }
            let mut kappa_idx = beta.clone();
            kappa_idx[i] += 1;
            let remainder: Vec<u32> = rest.iter().zip(&beta).map(|(r, b)| r - b).collect();
            let kappa = self.cumulant(&kappa_idx);
            if kappa != R::zero() {
                total += weight * kappa * self.moment(&remainder);
            }
            let mut p = 0;
            while p < beta.len() {
                if beta[p] < rest[p] {
                    beta[p] += 1;
                    break;
                }
                beta[p] = 0;
                p += 1;
            }
            if p == beta.len() {
                break;
            }
        }
        self.moments.insert(alpha.to_vec(), total);
        total
    }
}

/// `P_T f(x) = E f(Tx + Y)`, `Y ~ ρ`, as a polynomial on the `λ₁` side.
pub fn apply_pt_exact<R: Real>(f: &Poly<R>, t: &DMatrix<R>, rho: &LevyTriplet<R>) -> Result<Poly<R>, FockError> {
    let (d2, d1) = t.shape();
    if f.nvars() != d2 {
        return Err(FockError::DimensionMismatch { expected: d2, found: f.nvars() });
    }
    if rho.dim() != d2 {
        return Err(FockError::DimensionMismatch { expected: d2, found: rho.dim() });
    }
    let degree = f.total_degree();
    if degree > MOMENT_DEGREE_CAP {
        return Err(FockError::DegreeTooHigh { degree, cap: MOMENT_DEGREE_CAP });
    }
    let nv = d1 + d2;
    let images: Vec<Poly<R>> = (0..d2)
        .map(|i| {
            let mut p = Poly::var(nv, d1 + i);
            for j in 0..d1 {
                let mut e = vec![0; nv];
                e[j] = 1;
                p.add_term(e, t[(i, j)]);
            }
            p
        })
        .collect();
    let joint = f.compose(&images, nv);
    let mut table = MomentTable::new(rho);
    let mut out = Poly::zero(d1);
    for (e, c) in joint.terms() {
        let m = table.moment(&e[d1..]);
        if m != R::zero() {
            out.add_term(e[..d1].to_vec(), *c * m);
        }
    }
    Ok(out)
}

/// Monte-Carlo `P_T f(x)` from `samples` draws of `ρ`.
pub fn apply_pt_mc<R: Real>(
    f: &Poly<R>,
    t: &DMatrix<R>,
    rho: &LevyTriplet<R>,
    x: &DVector<R>,
    samples: usize,
    seed: u64,
    workers: usize,
) -> Result<McEstimate, FockError> {
    if x.len() != t.ncols() {
        return Err(FockError::DimensionMismatch { expected: t.ncols(), found: x.len() });
    }
    if f.nvars() != t.nrows() || rho.dim() != t.nrows() {
        return Err(FockError::DimensionMismatch { expected: t.nrows(), found: f.nvars().max(rho.dim()) });
    }
    let base = t * x;
    let sampler = IdSampler::new(rho);
    let values = par_draw(seed, samples, workers, |rng| {
        let y = &base + sampler.draw(rng);
        f.eval(y.as_slice()).as_f64()
    });
    Ok(McEstimate::from_values(&values))
}

/// Exact `E_λ f²` for an ambient polynomial.
pub fn law_norm_sq<R: Real>(f: &Poly<R>, law: &LevyTriplet<R>) -> Result<R, FockError> {
    if f.nvars() != law.dim() {
        return Err(FockError::DimensionMismatch { expected: law.dim(), found: f.nvars() });
    }
    let sq = f * f;
    let mut table = MomentTable::new(law);
    Ok(sq.terms().fold(R::zero(), |acc, (e, c)| acc + *c * table.moment(e)))
}

/// Monte-Carlo `E_λ f²`.
pub fn law_norm_sq_mc<R: Real>(f: &Poly<R>, law: &LevyTriplet<R>, samples: usize, seed: u64, workers: usize) -> McEstimate {
    let sampler = IdSampler::new(law);
    let values = par_draw(seed, samples, workers, |rng| f.eval(sampler.draw(rng).as_slice()).as_f64().powi(2));
    McEstimate::from_values(&values)
}

fn product_law<R: Real>(a: &LevyTriplet<R>, b: &LevyTriplet<R>) -> LevyTriplet<R> {
    let (da, db) = (a.dim(), b.dim());
    let d = da + db;
    let drift = DVector::from_fn(d, |i, _| if i < da { a.drift()[i] } else { b.drift()[i - da] });
    let mut cov = DMatrix::zeros(d, d);
    cov.view_mut((0, 0), (da, da)).copy_from(a.cov());
    cov.view_mut((da, da), (db, db)).copy_from(b.cov());
    let embed = |x: &DVector<R>, offset: usize| DVector::from_fn(d, |i, _| if i >= offset && i < offset + x.len() { x[i - offset] } else { R::zero() });
    let atoms = a
        .jumps()
        .atoms()
        .iter()
        .map(|at| (embed(&at.point, 0), at.weight))
        .chain(b.jumps().atoms().iter().map(|at| (embed(&at.point, da), at.weight)));
    LevyTriplet::new(drift, cov, AtomicMeasure::merged(d, atoms)).expect("product of valid laws")
}

/// Largest coefficient gap between `F_{P_T f}` and `(P_T^γ ⊗ P_T^π) F_f`, where
/// `F_f(x, y) = f(x + y)` and `ρ = ρ_γ ∗ ρ_π` is split into its Gaussian and jump factors.
pub fn tensor_split_gap<R: Real>(
    f: &Poly<R>,
    t: &DMatrix<R>,
    rho_gaussian: &LevyTriplet<R>,
    rho_jump: &LevyTriplet<R>,
) -> Result<R, FockError> {
    let (d2, d1) = t.shape();
    let rho = rho_gaussian.convolve(rho_jump)?;
    let sum_vars = |d: usize| -> Vec<Poly<R>> {
        (0..d).map(|i| &Poly::var(2 * d, i) + &Poly::var(2 * d, d + i)).collect()
    };
    let lhs = apply_pt_exact(f, t, &rho)?.compose(&sum_vars(d1), 2 * d1);

    let ff = f.compose(&sum_vars(d2), 2 * d2);
    let mut tt = DMatrix::zeros(2 * d2, 2 * d1);
    tt.view_mut((0, 0), (d2, d1)).copy_from(t);
    tt.view_mut((d2, d1), (d2, d1)).copy_from(t);
    let rhs = apply_pt_exact(&ff, &tt, &product_law(rho_gaussian, rho_jump))?;

    let diff = &lhs - &rhs;
    Ok(diff.terms().fold(R::zero(), |acc, (_, c)| if c.abs() > acc { c.abs() } else { acc }))
}
