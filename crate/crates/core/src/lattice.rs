//! Finitely supported signed measures on the non-negative integers.
//!
//! All "up to N" results are exact on sites `0..=N`: when `ν(0) = 0` the
//! convolution power `ν^{*n}` lives on `[n, ∞)`, so only the first `N + 1`
//! terms of any exponential-type series reach the window.

use std::collections::BTreeMap;

use num_rational::BigRational;
use thiserror::Error;

use crate::scalar::{factorial, Field};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LatticeError {
    #[error("measure must vanish at site 0 (found weight at 0)")]
    MassAtZero,
    #[error("distribution must have positive weight at site 0")]
    NonPositiveAtZero,
}

/// Signed measure `Σ_k c_k δ_k` with no stored zero weights.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeSignedMeasure<S> {
    coeffs: BTreeMap<u64, S>,
}

impl<S: Field> Default for LatticeSignedMeasure<S> {
    fn default() -> Self {
        Self::zero()
    }
}

impl<S: Field> LatticeSignedMeasure<S> {
    pub fn zero() -> Self {
        Self { coeffs: BTreeMap::new() }
    }

    pub fn dirac(site: u64) -> Self {
        Self::from_pairs([(site, S::one())])
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (u64, S)>) -> Self {
        let mut m = Self::zero();
        for (k, c) in pairs {
            m.add_at(k, c);
        }
        m
    }

    pub fn add_at(&mut self, site: u64, c: S) {
        if c.is_zero() {
            return;
        }
        let entry = self.coeffs.entry(site).or_insert_with(S::zero);
        *entry = entry.clone() + c;
        if entry.is_zero() {
            self.coeffs.remove(&site);
        }
    }

    pub fn get(&self, site: u64) -> S {
        self.coeffs.get(&site).cloned().unwrap_or_else(S::zero)
    }

    /// Non-zero `(site, weight)` pairs in ascending site order.
    pub fn iter(&self) -> impl Iterator<Item = (u64, &S)> {
        self.coeffs.iter().map(|(k, c)| (*k, c))
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn min_site(&self) -> Option<u64> {
        self.coeffs.keys().next().copied()
    }

    pub fn max_site(&self) -> Option<u64> {
        self.coeffs.keys().next_back().copied()
    }

    pub fn total_mass(&self) -> S {
        self.coeffs.values().fold(S::zero(), |a, c| a + c.clone())
    }

    pub fn scale(&self, c: &S) -> Self {
        Self::from_pairs(self.iter().map(|(k, v)| (k, v.clone() * c.clone())))
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (k, c) in other.iter() {
            out.add_at(k, c.clone());
        }
        out
    }

    /// Restriction to sites `0..=n`.
    pub fn truncate(&self, n: u64) -> Self {
        Self { coeffs: self.coeffs.range(..=n).map(|(k, c)| (*k, c.clone())).collect() }
    }

    /// First site carrying a negative weight.
    pub fn first_negative(&self) -> Option<(u64, S)> {
        self.iter().find(|(_, c)| c.is_negative_value()).map(|(k, c)| (k, c.clone()))
    }

    pub fn is_nonnegative(&self) -> bool {
        self.first_negative().is_none()
    }

    /// Cauchy product.
    pub fn convolve(&self, other: &Self) -> Self {
        self.convolve_upto(other, None)
    }

    fn convolve_upto(&self, other: &Self, horizon: Option<u64>) -> Self {
        let mut out = Self::zero();
        for (i, a) in self.iter() {
            for (j, b) in other.iter() {
                let site = i + j;
                if horizon.is_some_and(|n| site > n) {
                    break;
                }
                out.add_at(site, a.clone() * b.clone());
            }
        }
        out
    }

    /// `k`-fold convolution power; `power(0) = δ_0`.
    pub fn power(&self, k: u32) -> Self {
        let mut acc = Self::dirac(0);
        let mut base = self.clone();
        let mut e = k;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.convolve(&base);
            }
            e >>= 1;
            if e > 0 {
                base = base.convolve(&base);
            }
        }
        acc
    }

    /// Exact coefficients of `e(ν) = Σ_n ν^{*n}/n!` on sites `0..=n_max`.
    pub fn exp_measure(&self, n_max: u64) -> Result<Self, LatticeError> {
        if self.coeffs.contains_key(&0) {
            return Err(LatticeError::MassAtZero);
        }
        let base = self.truncate(n_max);
        let mut out = Self::dirac(0);
        let mut power = Self::dirac(0);
        let mut fact = S::one();
        for n in 1..=n_max {
            power = power.convolve_upto(&base, Some(n_max));
            if power.is_zero() {
                break;
            }
            fact = fact * S::from_usize_exact(n as usize);
            out = out.add(&power.scale(&(S::one() / fact.clone())));
        }
        Ok(out)
    }

    /// Recover `q` on `1..=n_max` from `n·r(n) = Σ_{k=1..n} k·q(k)·r(n−k)`.
    ///
    /// `r` may be unnormalised; the normalisation cancels.
    pub fn levy_from_distribution(&self, n_max: u64) -> Result<Self, LatticeError> {
        let r0 = self.get(0);
        if r0.partial_cmp(&S::zero()) != Some(std::cmp::Ordering::Greater) {
            return Err(LatticeError::NonPositiveAtZero);
        }
        let r: Vec<S> = (0..=n_max).map(|k| self.get(k)).collect();
        let mut q: Vec<S> = vec![S::zero(); n_max as usize + 1];
        for n in 1..=n_max as usize {
            let mut acc = S::from_usize_exact(n) * r[n].clone();
            for k in 1..n {
                if !q[k].is_zero() && !r[n - k].is_zero() {
                    acc = acc - S::from_usize_exact(k) * q[k].clone() * r[n - k].clone();
                }
            }
            q[n] = acc / (S::from_usize_exact(n) * r0.clone());
        }
        Ok(Self::from_pairs(q.into_iter().enumerate().skip(1).map(|(k, c)| (k as u64, c))))
    }

    /// Probability generating polynomial evaluated at `z`.
    pub fn pgf(&self, z: &S) -> S {
        let mut total = S::zero();
        let mut zk = S::one();
        let mut k = 0;
        for (site, c) in self.iter() {
            while k < site {
                zk = zk * z.clone();
                k += 1;
            }
            total = total + c.clone() * zk.clone();
        }
        total
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum IdStatus {
    /// The recovered Lévy sequence is non-negative on `1..=horizon`.
    IdUpTo,
    NotId,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IdVerdict<S> {
    pub status: IdStatus,
    pub recovered_levy: LatticeSignedMeasure<S>,
    pub witness: Option<(u64, S)>,
    pub horizon: u64,
}

impl<S: Field> IdVerdict<S> {
    pub fn label(&self) -> String {
        match self.status {
            IdStatus::IdUpTo => format!("ID_up_to_{}", self.horizon),
            IdStatus::NotId => "NotID".to_string(),
        }
    }
}

/// For a lattice law with mass at 0, ID ⇔ the recovered Lévy sequence is non-negative.
pub fn is_infinitely_divisible<S: Field>(
    r: &LatticeSignedMeasure<S>,
    n_max: u64,
) -> Result<IdVerdict<S>, LatticeError> {
    let q = r.levy_from_distribution(n_max)?;
    let witness = q.first_negative();
    Ok(IdVerdict {
        status: if witness.is_some() { IdStatus::NotId } else { IdStatus::IdUpTo },
        recovered_levy: q,
        witness,
        horizon: n_max,
    })
}

/// One named sitewise inequality and where it fails, if anywhere.
#[derive(Clone, Debug, PartialEq)]
pub struct InequalityCheck<S> {
    pub name: String,
    pub holds: bool,
    pub counterexample: Option<(u64, S)>,
}

fn check<S: Field>(name: &str, m: &LatticeSignedMeasure<S>) -> InequalityCheck<S> {
    let counterexample = m.first_negative();
    InequalityCheck { name: name.to_string(), holds: counterexample.is_none(), counterexample }
}

/// Sitewise checks `ν² ≥ 0`, `ν + ν²/8 ≥ 0`, `ν + ν²/3 ≥ 0` and `ν² + c·ν³ ≥ 0`
/// at `c ∈ {0, 1}` (enough, since the family is affine in `c`).
pub fn positivity_inequalities<S: Field>(nu: &LatticeSignedMeasure<S>) -> Vec<InequalityCheck<S>> {
    let nu2 = nu.power(2);
    let nu3 = nu.power(3);
    let frac = |n: usize| S::one() / S::from_usize_exact(n);
    vec![
        check("nu^2 >= 0", &nu2),
        check("nu + nu^2/8 >= 0", &nu.add(&nu2.scale(&frac(8)))),
        check("nu + nu^2/3 >= 0", &nu.add(&nu2.scale(&frac(3)))),
        check("nu^2 + 0*nu^3 >= 0", &nu2),
        check("nu^2 + 1*nu^3 >= 0", &nu2.add(&nu3)),
    ]
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroupingReport<S> {
    pub horizon: u64,
    /// Regrouped series equals `exp_measure` on `0..=horizon`.
    pub identity_holds: bool,
    pub first_mismatch: Option<u64>,
    /// Each group term is non-negative on `0..=horizon`.
    pub groups_nonnegative: bool,
    pub negative_group: Option<(usize, u64, S)>,
    pub group_count: usize,
}

/// The regrouped terms `δ_0`, `ν + ν²/3`, `(ν² + ν³)/6` and
/// `ν^{*2(n−1)}/(2n)! ∗ (ν² + ν³/(2n+1))` for `n ≥ 2`, truncated to `0..=n_max`.
pub fn grouping_terms<S: Field>(nu: &LatticeSignedMeasure<S>, n_max: u64) -> Vec<LatticeSignedMeasure<S>> {
    let frac = |n: usize| S::one() / S::from_usize_exact(n);
    let base = nu.truncate(n_max);
    let nu2 = base.convolve_upto(&base, Some(n_max));
    let nu3 = nu2.convolve_upto(&base, Some(n_max));
    let mut groups = vec![
        LatticeSignedMeasure::dirac(0),
        base.add(&nu2.scale(&frac(3))).truncate(n_max),
        nu2.add(&nu3).scale(&frac(6)),
    ];
    // ν^{*2(n-1)} for n = 2 is ν²; every further n multiplies by ν²
    let mut even_power = nu2.clone();
    let mut n = 2usize;
    while 2 * n <= n_max as usize && !even_power.is_zero() {
        let inner = nu2.add(&nu3.scale(&frac(2 * n + 1)));
        let term = even_power.convolve_upto(&inner, Some(n_max)).scale(&(S::one() / factorial::<S>(2 * n)));
        groups.push(term);
        even_power = even_power.convolve_upto(&nu2, Some(n_max));
        n += 1;
    }
    groups
}

pub fn grouping_identity_check<S: Field>(
    nu: &LatticeSignedMeasure<S>,
    n_max: u64,
) -> Result<GroupingReport<S>, LatticeError> {
    let direct = nu.exp_measure(n_max)?;
    let groups = grouping_terms(nu, n_max);
    let regrouped = groups.iter().fold(LatticeSignedMeasure::zero(), |acc, g| acc.add(g)).truncate(n_max);
    let first_mismatch = (0..=n_max).find(|&k| regrouped.get(k) != direct.get(k));
    let negative_group = groups
        .iter()
        .enumerate()
        .find_map(|(i, g)| g.truncate(n_max).first_negative().map(|(k, c)| (i, k, c)));
    Ok(GroupingReport {
        horizon: n_max,
        identity_holds: first_mismatch.is_none(),
        first_mismatch,
        groups_nonnegative: negative_group.is_none(),
        negative_group,
        group_count: groups.len(),
    })
}

/// Rosiński's signed measure `2δ1 + 2δ2 − δ3 + 2δ4 + 2δ5`.
pub fn rosinski_nu() -> LatticeSignedMeasure<BigRational> {
    let r = |n: i64| BigRational::from_integer(n.into());
    LatticeSignedMeasure::from_pairs([(1, r(2)), (2, r(2)), (3, r(-1)), (4, r(2)), (5, r(2))])
}
