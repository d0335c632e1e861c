//! Scalar traits shared by every module.
//!
//! Exact algebra (lattice measures, polynomial bookkeeping) only needs a
//! [`Field`]; the floating-point machinery (triplets, chaos, Fock space) needs
//! a [`Real`], which adds the nalgebra linear-algebra surface and the numeric
//! tolerances appropriate for its precision.

use std::fmt::{Debug, Display};
use std::ops::Neg;

use nalgebra::RealField;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Num, ToPrimitive};

/// A commutative field with an order, usable for exact or approximate algebra.
pub trait Field:
    Clone + Num + Neg<Output = Self> + PartialOrd + FromPrimitive + Debug + Send + Sync + 'static
{
    fn from_usize_exact(n: usize) -> Self {
        Self::from_usize(n).expect("integer representable in scalar")
    }

    fn is_negative_value(&self) -> bool {
        *self < Self::zero()
    }

    /// Lossy conversion used only for reporting.
    fn to_f64_lossy(&self) -> f64;
}

impl Field for f64 {
    fn to_f64_lossy(&self) -> f64 {
        *self
    }
}

impl Field for f32 {
    fn to_f64_lossy(&self) -> f64 {
        f64::from(*self)
    }
}

impl Field for BigRational {
    fn to_f64_lossy(&self) -> f64 {
        self.to_f64().unwrap_or_else(|| {
            // ratio of huge integers: scale down before dividing
            let shift = self.numer().bits().max(self.denom().bits()).saturating_sub(1000);
            let n = (self.numer() >> shift).to_f64().unwrap_or(f64::NAN);
            let d = (self.denom() >> shift).to_f64().unwrap_or(f64::NAN);
            n / d
        })
    }
}

/// Floating-point scalar (`f32` or `f64`).
pub trait Real: Field + RealField + Copy + ToPrimitive + Display {
    /// Proximity under which two atom locations are considered the same point.
    fn snap_tol() -> Self;
    /// Smallest eigenvalue still accepted as positive semidefinite.
    fn psd_tol() -> Self;
    /// Largest negative residual atom weight clamped to zero.
    fn weight_tol() -> Self;
    /// Slack allowed on operator norms that should be at most one.
    fn norm_tol() -> Self;

    fn lit(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("finite literal")
    }

    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

impl Real for f64 {
    fn snap_tol() -> Self {
        1e-12
    }
    fn psd_tol() -> Self {
        1e-10
    }
    fn weight_tol() -> Self {
        1e-12
    }
    fn norm_tol() -> Self {
        1e-10
    }
}

impl Real for f32 {
    fn snap_tol() -> Self {
        1e-5
    }
    fn psd_tol() -> Self {
        1e-4
    }
    fn weight_tol() -> Self {
        1e-5
    }
    fn norm_tol() -> Self {
        1e-4
    }
}

/// `n!` in the scalar type.
pub fn factorial<S: Field>(n: usize) -> S {
    (1..=n).fold(S::one(), |acc, k| acc * S::from_usize_exact(k))
}

/// Binomial coefficient as an exact integer-valued scalar.
pub fn binomial<S: Field>(n: usize, k: usize) -> S {
    if k > n {
        return S::zero();
    }
    let k = k.min(n - k);
    let mut acc = S::one();
    for i in 0..k {
        acc = acc * S::from_usize_exact(n - i) / S::from_usize_exact(i + 1);
    }
    acc
}

/// Parse `"p/q"` or `"p"` into a rational.
pub fn parse_rational(s: &str) -> Option<BigRational> {
    let s = s.trim();
    match s.split_once('/') {
        Some((p, q)) => {
            let p: BigInt = p.trim().parse().ok()?;
            let q: BigInt = q.trim().parse().ok()?;
            if q == BigInt::from(0) {
                return None;
            }
            Some(BigRational::new(p, q))
        }
        None => Some(BigRational::from_integer(s.parse().ok()?)),
    }
}

/// Render a rational as `"p/q"`, always with an explicit denominator.
pub fn format_rational(r: &BigRational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factorial_and_binomial() {
        assert_eq!(factorial::<f64>(5), 120.0);
        assert_eq!(binomial::<f64>(6, 2), 15.0);
        assert_eq!(binomial::<f64>(3, 5), 0.0);
        let r: BigRational = binomial(30, 15);
        assert_eq!(r, BigRational::from_integer(155117520.into()));
    }

    #[test]
    fn rational_strings() {
        let r = parse_rational("-6/4").unwrap();
        assert_eq!(format_rational(&r), "-3/2");
        assert_eq!(format_rational(&parse_rational("7").unwrap()), "7/1");
        assert!(parse_rational("1/0").is_none());
        assert!(parse_rational("x").is_none());
    }

    #[test]
    fn huge_rational_to_f64() {
        let big = BigInt::from(10).pow(400);
        let r = BigRational::new(big.clone() * 3, big);
        assert!((r.to_f64_lossy() - 3.0).abs() < 1e-12);
    }
}
