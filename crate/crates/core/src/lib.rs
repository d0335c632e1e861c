//! Infinitely divisible laws on desk-scale state spaces.
//!
//! The numerical core is generic over the scalar type: exact rational
//! arithmetic for lattice measures, `f32`/`f64` for everything that needs
//! linear algebra. The aliases below fix the usual choices.

pub mod chaos;
pub mod fock;
pub mod gen;
pub mod io;
pub mod lattice;
pub mod linalg;
pub mod poly;
pub mod report;
pub mod sampler;
pub mod scalar;
pub mod skew;
pub mod triplet;
pub mod verify;

pub use scalar::{Field, Real};

/// Exact rational scalar.
pub type Rational = num_rational::BigRational;

pub type Triplet = triplet::LevyTriplet<f64>;
pub type Triplet32 = triplet::LevyTriplet<f32>;
pub type LatticeMeasure = lattice::LatticeSignedMeasure<Rational>;
