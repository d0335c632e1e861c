//! Sparse multivariate polynomials over a [`Field`].

use std::collections::BTreeMap;
use std::ops::{Add, Mul, Neg, Sub};

use crate::scalar::Field;

/// Exponent vector, one entry per variable.
pub type Exponents = Vec<u32>;

#[derive(Clone, Debug, PartialEq)]
pub struct Poly<S> {
    nvars: usize,
    terms: BTreeMap<Exponents, S>,
}

impl<S: Field> Poly<S> {
    pub fn zero(nvars: usize) -> Self {
        Self { nvars, terms: BTreeMap::new() }
    }

    pub fn constant(nvars: usize, c: S) -> Self {
        let mut p = Self::zero(nvars);
        p.add_term(vec![0; nvars], c);
        p
    }

    pub fn one(nvars: usize) -> Self {
        Self::constant(nvars, S::one())
    }

    /// The coordinate polynomial `x_i`.
    pub fn var(nvars: usize, i: usize) -> Self {
        assert!(i < nvars, "variable index {i} out of range for {nvars} variables");
        let mut e = vec![0; nvars];
        e[i] = 1;
        Self::monomial(e, S::one())
    }

    pub fn monomial(exps: Exponents, c: S) -> Self {
        let mut p = Self::zero(exps.len());
        p.add_term(exps, c);
        p
    }

    pub fn from_terms(nvars: usize, terms: impl IntoIterator<Item = (Exponents, S)>) -> Self {
        let mut p = Self::zero(nvars);
        for (e, c) in terms {
            assert_eq!(e.len(), nvars, "exponent vector length mismatch");
            p.add_term(e, c);
        }
        p
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Exponents, &S)> {
        self.terms.iter()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coeff(&self, exps: &[u32]) -> S {
        self.terms.get(exps).cloned().unwrap_or_else(S::zero)
    }

    /// Accumulate `c·x^exps`, dropping the entry if it cancels to zero.
    pub fn add_term(&mut self, exps: Exponents, c: S) {
        debug_assert_eq!(exps.len(), self.nvars);
        if c.is_zero() {
            return;
        }
        match self.terms.get_mut(&exps) {
            Some(v) => {
                let s = v.clone() + c;
                if s.is_zero() {
                    self.terms.remove(&exps);
                } else {
                    *v = s;
                }
            }
            None => {
                self.terms.insert(exps, c);
            }
        }
    }

    pub fn total_degree(&self) -> usize {
        self.terms
            .keys()
            .map(|e| e.iter().map(|&k| k as usize).sum())
            .max()
            .unwrap_or(0)
    }

    /// Largest total degree restricted to the variables in `range`.
    pub fn degree_in(&self, range: std::ops::Range<usize>) -> usize {
        self.terms
            .keys()
            .map(|e| e[range.clone()].iter().map(|&k| k as usize).sum())
            .max()
            .unwrap_or(0)
    }

    /// True if no monomial involves a variable outside `range`.
    pub fn depends_only_on(&self, range: std::ops::Range<usize>) -> bool {
        self.terms
            .keys()
            .all(|e| e.iter().enumerate().all(|(i, &k)| k == 0 || range.contains(&i)))
    }

    pub fn scale(&self, c: &S) -> Self {
        let mut out = Self::zero(self.nvars);
        for (e, v) in &self.terms {
            out.add_term(e.clone(), v.clone() * c.clone());
        }
        out
    }

    pub fn pow(&self, k: u32) -> Self {
        let mut acc = Self::one(self.nvars);
        for _ in 0..k {
            acc = &acc * self;
        }
        acc
    }

    pub fn eval(&self, x: &[S]) -> S {
        assert_eq!(x.len(), self.nvars, "evaluation point dimension mismatch");
        let mut total = S::zero();
        for (e, c) in &self.terms {
            let mut t = c.clone();
            for (xi, &k) in x.iter().zip(e) {
                for _ in 0..k {
                    t = t * xi.clone();
                }
            }
            total = total + t;
        }
        total
    }

    /// Partial derivative in variable `i`.
    pub fn derivative(&self, i: usize) -> Self {
        let mut out = Self::zero(self.nvars);
        for (e, c) in &self.terms {
            if e[i] == 0 {
                continue;
            }
            let mut e2 = e.clone();
            e2[i] -= 1;
            out.add_term(e2, c.clone() * S::from_usize_exact(e[i] as usize));
        }
        out
    }

    /// `p(x + by·e_i)`.
    pub fn shift(&self, i: usize, by: &S) -> Self {
        let mut images: Vec<Self> = (0..self.nvars).map(|k| Self::var(self.nvars, k)).collect();
        images[i] = &images[i] + &Self::constant(self.nvars, by.clone());
        self.compose(&images, self.nvars)
    }

    /// Replace every variable `x_k` by `images[k]`, a polynomial in `out_vars` variables.
    pub fn compose(&self, images: &[Self], out_vars: usize) -> Self {
        assert_eq!(images.len(), self.nvars, "one image per variable required");
        // cache powers of each image
        let mut powers: Vec<Vec<Self>> = images.iter().map(|p| vec![Self::one(out_vars), p.clone()]).collect();
        let mut out = Self::zero(out_vars);
        for (e, c) in &self.terms {
            let mut term = Self::constant(out_vars, c.clone());
            for (k, &deg) in e.iter().enumerate() {
                if deg == 0 {
                    continue;
                }
                while powers[k].len() <= deg as usize {
                    let next = &powers[k][powers[k].len() - 1] * &images[k];
                    powers[k].push(next);
                }
                term = &term * &powers[k][deg as usize];
            }
            out = &out + &term;
        }
        out
    }

    /// Re-index into a larger variable set: variable `k` becomes `target[k]`.
    pub fn embed(&self, out_vars: usize, target: &[usize]) -> Self {
        assert_eq!(target.len(), self.nvars);
        let mut out = Self::zero(out_vars);
        for (e, c) in &self.terms {
            let mut e2 = vec![0; out_vars];
            for (k, &deg) in e.iter().enumerate() {
                e2[target[k]] += deg;
            }
            out.add_term(e2, c.clone());
        }
        out
    }

    pub fn map_coeffs<T: Field>(&self, f: impl Fn(&S) -> T) -> Poly<T> {
        let mut out = Poly::zero(self.nvars);
        for (e, c) in &self.terms {
            out.add_term(e.clone(), f(c));
        }
        out
    }

    /// Drop coefficients whose magnitude is at most `tol`.
    pub fn prune(&self, tol: &S) -> Self {
        let mut out = Self::zero(self.nvars);
        for (e, c) in &self.terms {
            let mag = if c.is_negative_value() { -c.clone() } else { c.clone() };
            if mag > *tol {
                out.add_term(e.clone(), c.clone());
            }
        }
        out
    }
}

impl<S: Field> Add for &Poly<S> {
    type Output = Poly<S>;
    fn add(self, rhs: &Poly<S>) -> Poly<S> {
        assert_eq!(self.nvars, rhs.nvars, "polynomial variable count mismatch");
        let mut out = self.clone();
        for (e, c) in &rhs.terms {
            out.add_term(e.clone(), c.clone());
        }
        out
    }
}

impl<S: Field> Sub for &Poly<S> {
    type Output = Poly<S>;
    fn sub(self, rhs: &Poly<S>) -> Poly<S> {
        assert_eq!(self.nvars, rhs.nvars, "polynomial variable count mismatch");
        let mut out = self.clone();
        for (e, c) in &rhs.terms {
            out.add_term(e.clone(), -c.clone());
        }
        out
    }
}

impl<S: Field> Neg for &Poly<S> {
    type Output = Poly<S>;
    fn neg(self) -> Poly<S> {
        self.scale(&-S::one())
    }
}

impl<S: Field> Mul for &Poly<S> {
    type Output = Poly<S>;
    fn mul(self, rhs: &Poly<S>) -> Poly<S> {
        assert_eq!(self.nvars, rhs.nvars, "polynomial variable count mismatch");
        let mut out = Poly::zero(self.nvars);
        for (ea, ca) in &self.terms {
            for (eb, cb) in &rhs.terms {
                let e: Exponents = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                out.add_term(e, ca.clone() * cb.clone());
            }
        }
        out
    }
}

/// Univariate coefficient list (lowest degree first) lifted into variable `i`.
pub fn univariate<S: Field>(nvars: usize, i: usize, coeffs: &[S]) -> Poly<S> {
    let mut p = Poly::zero(nvars);
    for (k, c) in coeffs.iter().enumerate() {
        let mut e = vec![0; nvars];
        e[i] = k as u32;
        p.add_term(e, c.clone());
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn small_poly(nvars: usize) -> impl Strategy<Value = Poly<f64>> {
        prop::collection::vec((prop::collection::vec(0u32..3, nvars), -3i32..4), 0..6).prop_map(move |ts| {
            Poly::from_terms(nvars, ts.into_iter().map(|(e, c)| (e, f64::from(c))))
        })
    }

    #[test]
    fn derivative_and_shift() {
        // p = x^2 y + 3
        let p = Poly::from_terms(2, [(vec![2, 1], 1.0), (vec![0, 0], 3.0)]);
        assert_eq!(p.derivative(0), Poly::from_terms(2, [(vec![1, 1], 2.0)]));
        // p(x+1, y) = x^2 y + 2xy + y + 3
        let s = p.shift(0, &1.0);
        assert_eq!(s.eval(&[2.0, 5.0]), p.eval(&[3.0, 5.0]));
        assert_eq!(p.total_degree(), 3);
        assert_eq!(p.degree_in(1..2), 1);
    }

    #[test]
    fn cancellation_removes_terms() {
        let x = Poly::<f64>::var(1, 0);
        assert!((&x - &x).is_zero());
    }

    proptest! {
        #[test]
        fn eval_is_ring_homomorphism(a in small_poly(2), b in small_poly(2), x in -2i32..3, y in -2i32..3) {
            let pt = [f64::from(x), f64::from(y)];
            prop_assert_eq!((&a * &b).eval(&pt), a.eval(&pt) * b.eval(&pt));
            prop_assert_eq!((&a + &b).eval(&pt), a.eval(&pt) + b.eval(&pt));
        }

        #[test]
        fn compose_matches_substituted_evaluation(a in small_poly(2), u in small_poly(1), v in small_poly(1), t in -2i32..3) {
            let t = f64::from(t);
            let c = a.compose(&[u.clone(), v.clone()], 1);
            prop_assert_eq!(c.eval(&[t]), a.eval(&[u.eval(&[t]), v.eval(&[t])]));
        }
    }
}
