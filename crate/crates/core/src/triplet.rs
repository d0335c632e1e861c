//! Lévy–Khintchine triplets with finite atomic Lévy measures.
//!
//! A triplet `(drift, cov, jumps)` describes the law of
//! `drift + G + Σ_k (N_k − w_k·[‖x_k‖≤1])·x_k` with `G ~ N(0, cov)` and
//! independent `N_k ~ Poisson(w_k)`. The truncation is the closed Euclidean
//! unit ball: atoms exactly on the unit sphere are compensated.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use thiserror::Error;

use crate::linalg;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TripletError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid Lévy measure: {0}")]
    InvalidMeasure(String),
    #[error("invalid Gaussian covariance: {0}")]
    InvalidCovariance(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Atom<R: Real> {
    pub point: DVector<R>,
    pub weight: R,
}

/// Finite atomic Lévy measure on `R^d \ {0}`.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomicMeasure<R: Real> {
    dim: usize,
    atoms: Vec<Atom<R>>,
}

pub(crate) fn is_small<R: Real>(x: &DVector<R>) -> bool {
    x.norm() <= R::one()
}

fn indicator<R: Real>(b: bool) -> R {
    if b {
        R::one()
    } else {
        R::zero()
    }
}

impl<R: Real> AtomicMeasure<R> {
    pub fn empty(dim: usize) -> Self {
        Self { dim, atoms: Vec::new() }
    }

    /// Validating constructor: rejects origin atoms, non-positive weights and
    /// duplicate points.
    pub fn new(dim: usize, atoms: Vec<Atom<R>>) -> Result<Self, TripletError> {
        for (i, a) in atoms.iter().enumerate() {
            if a.point.len() != dim {
                return Err(TripletError::DimensionMismatch { expected: dim, found: a.point.len() });
            }
            if a.weight.partial_cmp(&R::zero()) != Some(std::cmp::Ordering::Greater) || !a.weight.is_finite() {
                return Err(TripletError::InvalidMeasure(format!("atoms[{i}].w must be a positive finite weight")));
            }
            if a.point.norm() <= R::snap_tol() {
                return Err(TripletError::InvalidMeasure(format!("atoms[{i}].x is the origin")));
            }
            if a.point.iter().any(|v| !v.is_finite()) {
                return Err(TripletError::InvalidMeasure(format!("atoms[{i}].x is not finite")));
            }
            if let Some(j) = atoms[..i].iter().position(|b| (&b.point - &a.point).norm() <= R::snap_tol()) {
                return Err(TripletError::InvalidMeasure(format!("atoms[{i}].x duplicates atoms[{j}].x")));
            }
        }
        Ok(Self { dim, atoms })
    }

    /// Builds a measure from arbitrary weighted points: coincident points are
    /// merged (first occurrence keeps its location), origin points and
    /// weights with magnitude at most `weight_tol` are dropped. Negative
    /// weights survive so callers can inspect them.
    pub fn merged(dim: usize, points: impl IntoIterator<Item = (DVector<R>, R)>) -> Self {
        let mut m = Self::merged_unpruned(dim, points);
        m.atoms.retain(|a| a.weight.abs() > R::weight_tol());
        m
    }

    /// Like [`AtomicMeasure::merged`] but keeps tiny and zero weights.
    pub fn merged_unpruned(dim: usize, points: impl IntoIterator<Item = (DVector<R>, R)>) -> Self {
        let mut atoms: Vec<Atom<R>> = Vec::new();
        for (x, w) in points {
            debug_assert_eq!(x.len(), dim);
            if x.norm() <= R::snap_tol() {
                continue;
            }
            match atoms.iter_mut().find(|a| (&a.point - &x).norm() <= R::snap_tol()) {
                Some(a) => a.weight += w,
                None => atoms.push(Atom { point: x, weight: w }),
            }
        }
        Self { dim, atoms }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn atoms(&self) -> &[Atom<R>] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_mass(&self) -> R {
        self.atoms.iter().fold(R::zero(), |s, a| s + a.weight)
    }

    /// Weight at `x` (within the snap tolerance), zero if absent.
    pub fn weight_at(&self, x: &DVector<R>) -> R {
        self.atoms
            .iter()
            .find(|a| (&a.point - x).norm() <= R::snap_tol())
            .map_or(R::zero(), |a| a.weight)
    }

    pub fn add(&self, other: &Self) -> Self {
        Self::merged(
            self.dim,
            self.atoms.iter().chain(&other.atoms).map(|a| (a.point.clone(), a.weight)),
        )
    }

    /// Signed difference `self − other`, atomwise, without pruning small weights.
    pub fn sub(&self, other: &Self) -> Self {
        Self::merged_unpruned(
            self.dim,
            self.atoms
                .iter()
                .map(|a| (a.point.clone(), a.weight))
                .chain(other.atoms.iter().map(|a| (a.point.clone(), -a.weight))),
        )
    }

    /// Image measure under `t`, with collisions merged and origin images dropped.
    pub fn image(&self, t: &DMatrix<R>) -> Self {
        Self::merged(t.nrows(), self.atoms.iter().map(|a| (t * &a.point, a.weight)))
    }
}

/// `(drift, Gaussian covariance, Lévy measure)` of an infinitely divisible law on `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct LevyTriplet<R: Real> {
    drift: DVector<R>,
    cov: DMatrix<R>,
    jumps: AtomicMeasure<R>,
}

impl<R: Real> LevyTriplet<R> {
    pub fn new(drift: DVector<R>, cov: DMatrix<R>, jumps: AtomicMeasure<R>) -> Result<Self, TripletError> {
        let d = drift.len();
        if cov.nrows() != d || cov.ncols() != d {
            return Err(TripletError::DimensionMismatch { expected: d, found: cov.nrows().max(cov.ncols()) });
        }
        if jumps.dim() != d {
            return Err(TripletError::DimensionMismatch { expected: d, found: jumps.dim() });
        }
        if drift.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(TripletError::InvalidCovariance("non-finite entry".into()));
        }
        let asym = linalg::asymmetry(&cov);
        if asym > R::snap_tol() {
            return Err(TripletError::InvalidCovariance(format!("asymmetry {asym} exceeds tolerance")));
        }
        let min_eig = linalg::min_eigenvalue(&cov);
        if min_eig < -R::psd_tol() {
            return Err(TripletError::InvalidCovariance(format!("minimum eigenvalue {min_eig} is negative")));
        }
        Ok(Self { drift, cov: linalg::symmetrize(&cov), jumps })
    }

    /// The point mass `δ_0` in dimension `d`.
    pub fn zero(d: usize) -> Self {
        Self { drift: DVector::zeros(d), cov: DMatrix::zeros(d, d), jumps: AtomicMeasure::empty(d) }
    }

    pub fn dirac(x: DVector<R>) -> Self {
        let d = x.len();
        Self { drift: x, cov: DMatrix::zeros(d, d), jumps: AtomicMeasure::empty(d) }
    }

    pub fn gaussian(cov: DMatrix<R>) -> Result<Self, TripletError> {
        let d = cov.nrows();
        Self::new(DVector::zeros(d), cov, AtomicMeasure::empty(d))
    }

    pub fn dim(&self) -> usize {
        self.drift.len()
    }

    pub fn drift(&self) -> &DVector<R> {
        &self.drift
    }

    pub fn cov(&self) -> &DMatrix<R> {
        &self.cov
    }

    pub fn jumps(&self) -> &AtomicMeasure<R> {
        &self.jumps
    }

    /// Gaussian component `(0, Q, 0)`.
    pub fn gaussian_part(&self) -> Self {
        let d = self.dim();
        Self { drift: DVector::zeros(d), cov: self.cov.clone(), jumps: AtomicMeasure::empty(d) }
    }

    /// Drift-plus-jump component `(ξ, 0, ν)`.
    pub fn jump_part(&self) -> Self {
        let d = self.dim();
        Self { drift: self.drift.clone(), cov: DMatrix::zeros(d, d), jumps: self.jumps.clone() }
    }

    fn check_dim(&self, found: usize) -> Result<(), TripletError> {
        if found != self.dim() {
            return Err(TripletError::DimensionMismatch { expected: self.dim(), found });
        }
        Ok(())
    }

    /// Characteristic exponent `ψ(u)`; the Fourier transform of the law is `exp ψ(u)`.
    pub fn char_exponent(&self, u: &DVector<R>) -> Result<Complex<R>, TripletError> {
        self.check_dim(u.len())?;
        let mut re = -(u.dot(&(&self.cov * u))) * R::lit(0.5);
        let mut im = self.drift.dot(u);
        for a in self.jumps.atoms() {
            let s = a.point.dot(u);
            re += a.weight * (s.cos() - R::one());
            im += a.weight * (s.sin() - s * indicator::<R>(is_small(&a.point)));
        }
        Ok(Complex::new(re, im))
    }

    pub fn convolve(&self, other: &Self) -> Result<Self, TripletError> {
        self.check_dim(other.dim())?;
        Ok(Self {
            drift: &self.drift + &other.drift,
            cov: &self.cov + &other.cov,
            jumps: self.jumps.add(&other.jumps),
        })
    }

    /// Triplet of the image law under the linear map `t` (rows = target dimension).
    ///
    /// The drift picks up `Σ w·Tx·([‖Tx‖≤1] − [‖x‖≤1])` so that the exponent of
    /// the image is exactly `ψ(Tᵀu)`.
    pub fn pushforward(&self, t: &DMatrix<R>) -> Result<Self, TripletError> {
        self.check_dim(t.ncols())?;
        let mut drift = t * &self.drift;
        for a in self.jumps.atoms() {
            let tx = t * &a.point;
            let shift = indicator::<R>(is_small(&tx)) - indicator::<R>(is_small(&a.point));
            if shift != R::zero() {
                drift += tx * (a.weight * shift);
            }
        }
        Ok(Self {
            drift,
            cov: linalg::symmetrize(&(t * &self.cov * t.transpose())),
            jumps: self.jumps.image(t),
        })
    }

    /// First `n_max` cumulants of `⟨X, u⟩`.
    pub fn cumulants(&self, u: &DVector<R>, n_max: usize) -> Result<Vec<R>, TripletError> {
        self.check_dim(u.len())?;
        let mut out = vec![R::zero(); n_max];
        if n_max == 0 {
            return Ok(out);
        }
        out[0] = self.drift.dot(u);
        if n_max >= 2 {
            out[1] = u.dot(&(&self.cov * u));
        }
        for a in self.jumps.atoms() {
            let s = a.point.dot(u);
            if !is_small(&a.point) {
                out[0] += a.weight * s;
            }
            let mut p = s;
            for o in out.iter_mut().take(n_max).skip(1) {
                p *= s;
                *o += a.weight * p;
            }
        }
        Ok(out)
    }

    /// Joint cumulant of the coordinates indexed by the multi-index `alpha`
    /// (`alpha[i]` copies of coordinate `i`).
    pub fn joint_cumulant(&self, alpha: &[u32]) -> Result<R, TripletError> {
        self.check_dim(alpha.len())?;
        let order: u32 = alpha.iter().sum();
        let mut k = R::zero();
        match order {
            0 => return Ok(R::zero()),
            1 => {
                let i = alpha.iter().position(|&a| a == 1).unwrap();
                k += self.drift[i];
            }
            2 => {
                let idx: Vec<usize> =
                    alpha.iter().enumerate().flat_map(|(i, &a)| std::iter::repeat_n(i, a as usize)).collect();
                k += self.cov[(idx[0], idx[1])];
            }
            _ => {}
        }
        for a in self.jumps.atoms() {
            if order == 1 && is_small(&a.point) {
                continue;
            }
            let mut m = a.weight;
            for (i, &e) in alpha.iter().enumerate() {
                for _ in 0..e {
                    m *= a.point[i];
                }
            }
            k += m;
        }
        Ok(k)
    }

    /// Largest componentwise discrepancy between two triplets; atoms are
    /// matched by location and unmatched atoms count with their full weight.
    pub fn distance(&self, other: &Self) -> R {
        if self.dim() != other.dim() {
            return R::max_value().unwrap();
        }
        let mut worst = R::zero();
        let mut bump = |v: R| {
            if v > worst {
                worst = v;
            }
        };
        for (a, b) in self.drift.iter().zip(other.drift.iter()) {
            bump((*a - *b).abs());
        }
        for (a, b) in self.cov.iter().zip(other.cov.iter()) {
            bump((*a - *b).abs());
        }
        for a in self.jumps.atoms() {
            bump((a.weight - other.jumps.weight_at(&a.point)).abs());
        }
        for b in other.jumps.atoms() {
            bump((b.weight - self.jumps.weight_at(&b.point)).abs());
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(xs)
    }

    fn one_atom(x: &[f64], w: f64) -> LevyTriplet<f64> {
        let d = x.len();
        LevyTriplet::new(
            DVector::zeros(d),
            DMatrix::zeros(d, d),
            AtomicMeasure::new(d, vec![Atom { point: v(x), weight: w }]).unwrap(),
        )
        .unwrap()
    }

    /// Direct summation of the Lévy–Khintchine formula, written out independently.
    fn exponent_oracle(t: &LevyTriplet<f64>, u: &DVector<f64>) -> Complex<f64> {
        let i = Complex::new(0.0, 1.0);
        let mut psi = i * t.drift().dot(u) - 0.5 * (u.transpose() * t.cov() * u)[(0, 0)];
        for a in t.jumps().atoms() {
            let s = a.point.dot(u);
            let comp = if a.point.norm() <= 1.0 { i * s } else { Complex::new(0.0, 0.0) };
            psi += a.weight * ((i * s).exp() - 1.0 - comp);
        }
        psi
    }

    #[test]
    fn exponent_of_pure_drift_and_gaussian() {
        let t = LevyTriplet::dirac(v(&[1.0, -2.0]));
        let psi = t.char_exponent(&v(&[0.5, 0.25])).unwrap();
        assert_eq!(psi, Complex::new(0.0, 0.0));
        let g = LevyTriplet::gaussian(DMatrix::identity(2, 2)).unwrap();
        let psi = g.char_exponent(&v(&[3.0, 4.0])).unwrap();
        assert_eq!(psi, Complex::new(-12.5, 0.0));
    }

    #[test]
    fn exponent_single_large_atom() {
        let t = one_atom(&[2.0, 0.0], 3.0);
        let psi = t.char_exponent(&v(&[1.0, 0.0])).unwrap();
        let expect = (Complex::new(0.0, 2.0).exp() - 1.0) * 3.0;
        assert!((psi - expect).norm() < 1e-15);
        assert!((psi - exponent_oracle(&t, &v(&[1.0, 0.0]))).norm() < 1e-15);
    }

    #[test]
    fn unit_sphere_atom_is_compensated() {
        let t = one_atom(&[1.0], 1.0);
        let psi = t.char_exponent(&v(&[0.3])).unwrap();
        assert!((psi.im - (0.3f64.sin() - 0.3)).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let t = LevyTriplet::<f64>::zero(2);
        assert_eq!(
            t.char_exponent(&v(&[1.0])),
            Err(TripletError::DimensionMismatch { expected: 2, found: 1 })
        );
        assert!(t.convolve(&LevyTriplet::zero(3)).is_err());
        assert!(t.pushforward(&DMatrix::identity(2, 3)).is_err());
    }

    #[test]
    fn invalid_inputs_rejected() {
        assert!(AtomicMeasure::new(1, vec![Atom { point: v(&[0.0]), weight: 1.0 }]).is_err());
        assert!(AtomicMeasure::new(1, vec![Atom { point: v(&[1.0]), weight: 0.0 }]).is_err());
        assert!(AtomicMeasure::new(
            1,
            vec![Atom { point: v(&[1.0]), weight: 1.0 }, Atom { point: v(&[1.0]), weight: 2.0 }]
        )
        .is_err());
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(LevyTriplet::gaussian(bad).is_err());
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(LevyTriplet::gaussian(asym).is_err());
    }

    #[test]
    fn dirac_convolution_and_atom_merge() {
        let a = LevyTriplet::dirac(v(&[1.0]));
        let b = LevyTriplet::dirac(v(&[2.5]));
        let c = a.convolve(&b).unwrap();
        assert_eq!(c.drift(), &v(&[3.5]));
        assert!(c.jumps().is_empty());
        let x = one_atom(&[0.5], 1.25).convolve(&one_atom(&[0.5], 2.0)).unwrap();
        assert_eq!(x.jumps().len(), 1);
        assert_eq!(x.jumps().atoms()[0].weight, 3.25);
    }

    #[test]
    fn pushforward_identity_and_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t: LevyTriplet<f64> = gen::random_triplet(&mut rng, 3, 5);
        let id = t.pushforward(&DMatrix::identity(3, 3)).unwrap();
        assert!(id.distance(&t) < 1e-15);
        let z = t.pushforward(&DMatrix::zeros(2, 3)).unwrap();
        assert_eq!(z.dim(), 2);
        assert!(z.jumps().is_empty());
        assert!(z.cov().iter().all(|&x| x == 0.0));
        // large atoms contribute nothing, small atoms are recentred by −w·0
        assert!(z.drift().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn pushforward_half_scaling_recentres() {
        let t = one_atom(&[2.0, 0.0], 1.0);
        let half = DMatrix::identity(2, 2) * 0.5;
        let p = t.pushforward(&half).unwrap();
        assert_eq!(p.jumps().atoms()[0].point, v(&[1.0, 0.0]));
        // the image atom is now compensated, so its mean moves into the drift
        assert_eq!(p.drift(), &v(&[1.0, 0.0]));
        for u in [v(&[0.7, -0.2]), v(&[-3.0, 1.0])] {
            let lhs = p.char_exponent(&u).unwrap();
            let rhs = exponent_oracle(&t, &(half.transpose() * &u));
            assert!((lhs - rhs).norm() < 1e-12);
        }
    }

    #[test]
    fn cumulants_examples() {
        let g = LevyTriplet::gaussian(DMatrix::identity(2, 2)).unwrap();
        assert_eq!(g.cumulants(&v(&[1.0, 0.0]), 4).unwrap(), vec![0.0, 1.0, 0.0, 0.0]);
        let d = LevyTriplet::dirac(v(&[1.0, 2.0]));
        assert_eq!(d.cumulants(&v(&[1.0, 1.0]), 3).unwrap(), vec![3.0, 0.0, 0.0]);
        let a = one_atom(&[2.0], 3.0);
        let k = a.cumulants(&v(&[1.0]), 6).unwrap();
        for (n, kn) in k.iter().enumerate() {
            assert_eq!(*kn, 3.0 * 2f64.powi(n as i32 + 1));
        }
    }

    #[test]
    fn cumulants_match_finite_differences_of_exponent() {
        // κ_n = (−i)^n dⁿ/dsⁿ ψ(s·u) at s = 0, Richardson-extrapolated central differences
        let t = one_atom(&[2.0], 3.0);
        let u = v(&[1.0]);
        let psi = |s: f64| t.char_exponent(&(&u * s)).unwrap();
        let d1 = |h: f64| (psi(h) - psi(-h)) / (2.0 * h);
        let d2 = |h: f64| (psi(h) - psi(0.0) * 2.0 + psi(-h)) / (h * h);
        let d3 = |h: f64| (psi(2.0 * h) - psi(h) * 2.0 + psi(-h) * 2.0 - psi(-2.0 * h)) / (2.0 * h * h * h);
        let rich = |d: &dyn Fn(f64) -> Complex<f64>, h: f64| (d(h / 2.0) * 4.0 - d(h)) / 3.0;
        let i = Complex::new(0.0, 1.0);
        let k = t.cumulants(&u, 3).unwrap();
        let fd = [(-i) * rich(&d1, 1e-2), (-i * -i) * rich(&d2, 1e-2), (-i * -i * -i) * rich(&d3, 1e-2)];
        for (n, (approx, exact)) in fd.iter().zip(&k).enumerate() {
            assert!((approx - exact).norm() < 1e-6 * exact, "order {}: {approx} vs {exact}", n + 1);
        }
    }

    #[test]
    fn joint_cumulants_agree_with_directional() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let t = gen::random_triplet(&mut rng, 2, 4);
        let u = v(&[0.3, -1.1]);
        let k = t.cumulants(&u, 4).unwrap();
        for n in 1..=4u32 {
            let mut total = 0.0;
            for a in 0..=n {
                let alpha = [a, n - a];
                let multi = crate::scalar::binomial::<f64>(n as usize, a as usize);
                total += multi * u[0].powi(a as i32) * u[1].powi((n - a) as i32) * t.joint_cumulant(&alpha).unwrap();
            }
            assert!((total - k[n as usize - 1]).abs() < 1e-12, "order {n}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn exponent_is_additive_under_convolution(seed in any::<u64>(), d in 1usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a: LevyTriplet<f64> = gen::random_triplet(&mut rng, d, 6);
            let b = gen::random_triplet(&mut rng, d, 6);
            let u = gen::random_vector(&mut rng, d, 2.0);
            let ab = a.convolve(&b).unwrap();
            let lhs = ab.char_exponent(&u).unwrap();
            let rhs = a.char_exponent(&u).unwrap() + b.char_exponent(&u).unwrap();
            prop_assert!((lhs - rhs).norm() < 1e-12);
            prop_assert!((lhs - exponent_oracle(&ab, &u)).norm() < 1e-12);
        }

        #[test]
        fn pushforward_fourier_identity(seed in any::<u64>(), d1 in 1usize..4, d2 in 1usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t: LevyTriplet<f64> = gen::random_triplet(&mut rng, d1, 6);
            let map = gen::random_matrix(&mut rng, d2, d1, 1.0);
            let u = gen::random_vector(&mut rng, d2, 2.0);
            let p = t.pushforward(&map).unwrap();
            let lhs = p.char_exponent(&u).unwrap();
            let rhs = exponent_oracle(&t, &(map.transpose() * &u));
            prop_assert!((lhs - rhs).norm() < 1e-12);
        }
    }
}
