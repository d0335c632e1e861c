//! Seeded Monte-Carlo sampling of ID laws and Poisson random measures.
//!
//! Every parallel draw goes through [`par_draw`]: the index range `0..n` is
//! split into `workers` contiguous chunks and chunk `i` uses the ChaCha stream
//! `i` of the master seed. For a fixed `(seed, n, workers)` the output is
//! bit-identical however rayon schedules the chunks.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use thiserror::Error;

use crate::linalg;
use crate::scalar::Real;
use crate::triplet::{is_small, LevyTriplet};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SamplerError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid ground space: {0}")]
    InvalidGroundSpace(String),
}

/// Random stream for worker `worker` of master seed `seed`.
pub fn substream(seed: u64, worker: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(worker as u64);
    rng
}

/// Draw `n` values in parallel, deterministically for a fixed worker count.
pub fn par_draw<T, F>(seed: u64, n: usize, workers: usize, draw: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng) -> T + Sync,
{
    let workers = workers.max(1);
    let chunks: Vec<Vec<T>> = (0..workers)
        .into_par_iter()
        .map(|w| {
            let lo = w * n / workers;
            let hi = (w + 1) * n / workers;
            let mut rng = substream(seed, w);
            (lo..hi).map(|_| draw(&mut rng)).collect()
        })
        .collect();
    chunks.into_iter().flatten().collect()
}

/// Poisson variate: inversion below intensity 30, rejection sampling above.
pub fn poisson<G: Rng + ?Sized>(rng: &mut G, lambda: f64) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    if lambda < 30.0 {
        let u: f64 = rng.random();
        let mut k = 0u64;
        let mut p = (-lambda).exp();
        let mut cdf = p;
        while u > cdf && k < 10_000 {
            k += 1;
            p *= lambda / k as f64;
            cdf += p;
            if p == 0.0 {
                break;
            }
        }
        k
    } else {
        rand_distr::Poisson::new(lambda).expect("positive finite intensity").sample(rng) as u64
    }
}

/// Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub estimate: f64,
    pub se: f64,
    pub n: usize,
}

impl McEstimate {
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { estimate: f64::NAN, se: f64::NAN, n };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = if n > 1 { values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
        Self { estimate: mean, se: (var / n as f64).sqrt(), n }
    }

    /// `|self − other| ≤ k·√(se₁² + se₂²)`.
    pub fn agrees_with(&self, other: &Self, k: f64) -> bool {
        (self.estimate - other.estimate).abs() <= k * (self.se.powi(2) + other.se.powi(2)).sqrt()
    }

    /// `|self − value| ≤ k·se`.
    pub fn contains(&self, value: f64, k: f64) -> bool {
        (self.estimate - value).abs() <= k * self.se
    }
}

/// Finite ground space of jump atoms with Poisson intensities.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundSpace<R: Real> {
    points: Vec<DVector<R>>,
    intensities: Vec<R>,
}

impl<R: Real> GroundSpace<R> {
    pub fn new(points: Vec<DVector<R>>, intensities: Vec<R>) -> Result<Self, SamplerError> {
        if points.len() != intensities.len() {
            return Err(SamplerError::InvalidGroundSpace("one intensity per atom required".into()));
        }
        for (i, (x, w)) in points.iter().zip(&intensities).enumerate() {
            if w.partial_cmp(&R::zero()) != Some(std::cmp::Ordering::Greater) {
                return Err(SamplerError::InvalidGroundSpace(format!("intensity {i} is not positive")));
            }
            if x.norm() <= R::snap_tol() {
                return Err(SamplerError::InvalidGroundSpace(format!("atom {i} is the origin")));
            }
            if points[..i].iter().any(|y| (y - x).norm() <= R::snap_tol()) {
                return Err(SamplerError::InvalidGroundSpace(format!("atom {i} is repeated")));
            }
        }
        Ok(Self { points, intensities })
    }

    /// Ground space carried by the Lévy measure of `t`.
    pub fn of_triplet(t: &LevyTriplet<R>) -> Self {
        let atoms = t.jumps().atoms();
        Self {
            points: atoms.iter().map(|a| a.point.clone()).collect(),
            intensities: atoms.iter().map(|a| a.weight).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[DVector<R>] {
        &self.points
    }

    pub fn intensities(&self) -> &[R] {
        &self.intensities
    }

    pub fn total_intensity(&self) -> R {
        self.intensities.iter().fold(R::zero(), |a, b| a + *b)
    }

    /// Index of the atom at `x` (within the snap tolerance).
    pub fn index_of(&self, x: &DVector<R>) -> Option<usize> {
        self.points.iter().position(|y| (y - x).norm() <= R::snap_tol())
    }
}

/// Atom counts `η({y_k})` of a Poisson random measure on a ground space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoissonConfiguration {
    pub counts: Vec<u64>,
}

pub fn sample_prm<R: Real, G: Rng + ?Sized>(g: &GroundSpace<R>, rng: &mut G) -> PoissonConfiguration {
    PoissonConfiguration { counts: g.intensities.iter().map(|w| poisson(rng, w.as_f64())).collect() }
}

pub fn standard_normals<G: Rng + ?Sized>(rng: &mut G, r: usize) -> Vec<f64> {
    (0..r).map(|_| StandardNormal.sample(rng)).collect()
}

/// Precomputed pieces of the Lévy–Itô representation of a triplet.
#[derive(Debug, Clone)]
pub struct IdSampler<R: Real> {
    drift: DVector<R>,
    factor: DMatrix<R>,
    ground: GroundSpace<R>,
    compensators: Vec<R>,
}

impl<R: Real> IdSampler<R> {
    pub fn new(t: &LevyTriplet<R>) -> Self {
        let ground = GroundSpace::of_triplet(t);
        let compensators = t
            .jumps()
            .atoms()
            .iter()
            .map(|a| if is_small(&a.point) { a.weight } else { R::zero() })
            .collect();
        Self { drift: t.drift().clone(), factor: linalg::pivoted_cholesky(t.cov(), R::psd_tol()), ground, compensators }
    }

    /// Assemble `ξ + R·g + Σ_k (count_k − compensator_k)·x_k`.
    pub fn assemble(&self, gaussian: &[f64], counts: &[u64]) -> DVector<R> {
        let mut x = self.drift.clone();
        for (j, g) in gaussian.iter().enumerate() {
            x += self.factor.column(j) * R::lit(*g);
        }
        for ((p, c), comp) in self.ground.points().iter().zip(counts).zip(&self.compensators) {
            let coef = R::lit(*c as f64) - *comp;
            if coef != R::zero() {
                x += p * coef;
            }
        }
        x
    }

    pub fn draw<G: Rng + ?Sized>(&self, rng: &mut G) -> DVector<R> {
        let g = standard_normals(rng, self.factor.ncols());
        let eta = sample_prm(&self.ground, rng);
        self.assemble(&g, &eta.counts)
    }
}

/// `n` samples of the law with triplet `t`.
pub fn sample_id<R: Real>(t: &LevyTriplet<R>, seed: u64, n: usize, workers: usize) -> Vec<DVector<R>> {
    let s = IdSampler::new(t);
    par_draw(seed, n, workers, |rng| s.draw(rng))
}

/// Mean of `e^{i⟨x,u⟩}` over the batch.
pub fn empirical_char<R: Real>(batch: &[DVector<R>], u: &DVector<R>) -> Result<Complex<f64>, SamplerError> {
    if batch.is_empty() {
        return Err(SamplerError::EmptyBatch);
    }
    let mut acc = Complex::new(0.0, 0.0);
    for x in batch {
        if x.len() != u.len() {
            return Err(SamplerError::DimensionMismatch { expected: u.len(), found: x.len() });
        }
        let s = x.dot(u).as_f64();
        acc += Complex::new(s.cos(), s.sin());
    }
    Ok(acc / batch.len() as f64)
}

/// `exp ψ(u)` as a complex number.
pub fn char_function<R: Real>(t: &LevyTriplet<R>, u: &DVector<R>) -> Complex<f64> {
    let psi = t.char_exponent(u).expect("dimension checked by caller");
    Complex::new(psi.re.as_f64(), psi.im.as_f64()).exp()
}

/// `points` evenly spaced multiples of `direction` from `−half_width` to `half_width`.
pub fn line_grid<R: Real>(direction: &DVector<R>, half_width: f64, points: usize) -> Vec<DVector<R>> {
    if points == 1 {
        return vec![DVector::zeros(direction.len())];
    }
    let step = 2.0 * half_width / (points - 1) as f64;
    (0..points).map(|i| direction * R::lit(-half_width + step * i as f64)).collect()
}

/// Sup over `grid` of `|empirical − exp ψ|`.
pub fn char_sup_distance<R: Real>(t: &LevyTriplet<R>, batch: &[DVector<R>], grid: &[DVector<R>]) -> Result<f64, SamplerError> {
    let mut worst: f64 = 0.0;
    for u in grid {
        let e = empirical_char(batch, u)?;
        worst = worst.max((e - char_function(t, u)).norm());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::triplet::{Atom, AtomicMeasure};

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(xs)
    }

    #[test]
    fn pure_drift_samples_are_constant() {
        let t = LevyTriplet::dirac(v(&[1.5, -0.5]));
        for x in sample_id(&t, 3, 100, 4) {
            assert_eq!(x, v(&[1.5, -0.5]));
        }
    }

    #[test]
    fn reruns_are_bit_identical() {
        let t = LevyTriplet::new(
            v(&[0.2]),
            DMatrix::from_element(1, 1, 0.5),
            AtomicMeasure::new(1, vec![Atom { point: v(&[0.4]), weight: 1.3 }]).unwrap(),
        )
        .unwrap();
        assert_eq!(sample_id(&t, 9, 1000, 3), sample_id(&t, 9, 1000, 3));
        assert_ne!(sample_id(&t, 9, 1000, 3), sample_id(&t, 10, 1000, 3));
    }

    #[test]
    fn small_jumps_are_compensated() {
        let t = LevyTriplet::new(
            v(&[0.0, 0.0]),
            DMatrix::zeros(2, 2),
            AtomicMeasure::new(
                2,
                vec![Atom { point: v(&[0.5, 0.1]), weight: 2.0 }, Atom { point: v(&[-0.3, 0.6]), weight: 0.7 }],
            )
            .unwrap(),
        )
        .unwrap();
        let xs = sample_id(&t, 5, 100_000, 4);
        for c in 0..2 {
            let vals: Vec<f64> = xs.iter().map(|x| x[c]).collect();
            assert!(McEstimate::from_values(&vals).contains(0.0, 4.0));
        }
    }

    #[test]
    fn poisson_mean_in_both_regimes() {
        for lambda in [0.3, 4.0, 29.5, 45.0] {
            let xs = par_draw(1, 100_000, 4, |rng| poisson(rng, lambda) as f64);
            let est = McEstimate::from_values(&xs);
            assert!(est.contains(lambda, 4.0), "lambda {lambda}: {est:?}");
        }
    }

    #[test]
    fn empirical_char_trivial_batches() {
        assert_eq!(empirical_char::<f64>(&[], &v(&[1.0])), Err(SamplerError::EmptyBatch));
        assert_eq!(empirical_char(&[v(&[0.0])], &v(&[2.0])).unwrap(), Complex::new(1.0, 0.0));
        let e = empirical_char(&[v(&[1.0, 2.0])], &v(&[0.5, 0.25])).unwrap();
        assert!((e - Complex::new(0.0, 1.0).exp()).norm() < 1e-15);
    }

    #[test]
    fn empty_ground_space_gives_empty_configuration() {
        let g = GroundSpace::<f64>::new(vec![], vec![]).unwrap();
        let mut rng = substream(0, 0);
        assert!(sample_prm(&g, &mut rng).counts.is_empty());
        assert!(GroundSpace::new(vec![v(&[0.0])], vec![1.0]).is_err());
        assert!(GroundSpace::new(vec![v(&[1.0])], vec![0.0]).is_err());
    }
}
