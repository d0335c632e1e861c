//! Seeded generators for randomized checks and forward-constructed scenarios.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::poly::Poly;
use crate::scalar::Real;
use crate::triplet::{Atom, AtomicMeasure, LevyTriplet};

pub fn random_vector<R: Real, G: Rng + ?Sized>(rng: &mut G, d: usize, scale: f64) -> DVector<R> {
    DVector::from_fn(d, |_, _| R::lit(rng.random_range(-scale..scale)))
}

pub fn random_matrix<R: Real, G: Rng + ?Sized>(rng: &mut G, rows: usize, cols: usize, scale: f64) -> DMatrix<R> {
    DMatrix::from_fn(rows, cols, |_, _| R::lit(rng.random_range(-scale..scale)))
}

/// Random PSD matrix of rank at most `rank`.
pub fn random_psd<R: Real, G: Rng + ?Sized>(rng: &mut G, d: usize, rank: usize) -> DMatrix<R> {
    let f: DMatrix<R> = random_matrix(rng, d, rank, 1.0);
    let q = &f * f.transpose();
    (&q + q.transpose()) * R::lit(0.5)
}

/// Random atoms with points in a box of half-width 2.5, mixing small and large
/// jumps, none within 0.1 of the origin.
pub fn random_atoms<R: Real, G: Rng + ?Sized>(rng: &mut G, d: usize, count: usize) -> AtomicMeasure<R> {
    let mut atoms: Vec<Atom<R>> = Vec::new();
    while atoms.len() < count {
        let x: DVector<R> = random_vector(rng, d, 2.5);
        if x.norm() < R::lit(0.1) || atoms.iter().any(|a| (&a.point - &x).norm() < R::lit(0.05)) {
            continue;
        }
        atoms.push(Atom { point: x, weight: R::lit(rng.random_range(0.1..2.0)) });
    }
    AtomicMeasure::new(d, atoms).expect("generated atoms are valid")
}

/// Random triplet with a random-rank Gaussian part and up to `max_atoms` atoms.
pub fn random_triplet<R: Real, G: Rng + ?Sized>(rng: &mut G, d: usize, max_atoms: usize) -> LevyTriplet<R> {
    let rank = rng.random_range(0..=d);
    let count = rng.random_range(0..=max_atoms);
    LevyTriplet::new(random_vector(rng, d, 1.5), random_psd(rng, d, rank), random_atoms(rng, d, count))
        .expect("generated triplet is valid")
}

/// Polynomial with up to `terms` monomials of total degree at most `max_degree`.
pub fn random_poly<R: Real, G: Rng + ?Sized>(rng: &mut G, nvars: usize, max_degree: u32, terms: usize) -> Poly<R> {
    let mut p = Poly::zero(nvars);
    for _ in 0..terms {
        let mut e = vec![0u32; nvars];
        if nvars > 0 {
            for _ in 0..rng.random_range(0..=max_degree) {
                e[rng.random_range(0..nvars)] += 1;
            }
        }
        p.add_term(e, R::lit(rng.random_range(-1.0..1.0)));
    }
    p
}
