//! Skew factors: given `T`, `λ₁`, `λ₂`, find the ID law `ρ` with `Tλ₁ ∗ ρ = λ₂`.
//!
//! Triplet components add under convolution, so the candidate factor is a
//! componentwise difference. It is a genuine triplet exactly when the
//! covariance gap is PSD and the residual Lévy measure is non-negative; the
//! two conditions are independent, which is what makes the Gaussian/jump
//! splitting work.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::linalg;
use crate::scalar::Real;
use crate::triplet::{AtomicMeasure, LevyTriplet, TripletError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SkewError {
    #[error(transparent)]
    Triplet(#[from] TripletError),
    #[error("covariance gap Q2 − T Q1 Tᵀ is indefinite (minimum eigenvalue {min_eigenvalue})")]
    NotSkewGaussian { min_eigenvalue: f64 },
    #[error("residual Lévy measure has weight {weight} at {point:?}")]
    NotSkewJump { point: Vec<f64>, weight: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkewDiagnostics<R: Real> {
    /// Minimum eigenvalue of `Q2 − T Q1 Tᵀ` before projection.
    pub min_cov_gap_eigenvalue: R,
    /// Most negative residual atom weight before clamping (zero if none).
    pub most_negative_jump_weight: R,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkewSolution<R: Real> {
    pub rho: LevyTriplet<R>,
    pub rho_gaussian: LevyTriplet<R>,
    pub rho_jump: LevyTriplet<R>,
    pub diagnostics: SkewDiagnostics<R>,
}

fn witness_point<R: Real>(x: &DVector<R>) -> Vec<f64> {
    x.iter().map(|v| v.as_f64()).collect()
}

/// Solve `T t1 ∗ ρ = t2` for an infinitely divisible `ρ`.
pub fn skew_solve<R: Real>(
    t: &DMatrix<R>,
    t1: &LevyTriplet<R>,
    t2: &LevyTriplet<R>,
) -> Result<SkewSolution<R>, SkewError> {
    let image = t1.pushforward(t)?;
    if image.dim() != t2.dim() {
        return Err(TripletError::DimensionMismatch { expected: t2.dim(), found: image.dim() }.into());
    }
    let d = t2.dim();

    let gap = t2.cov() - image.cov();
    let min_eig = linalg::min_eigenvalue(&gap);
    if min_eig < -R::psd_tol() {
        return Err(SkewError::NotSkewGaussian { min_eigenvalue: min_eig.as_f64() });
    }
    let q_rho = linalg::project_psd(&gap);

    let residual = t2.jumps().sub(image.jumps());
    let mut most_negative = R::zero();
    let mut witness = None;
    for a in residual.atoms() {
        if a.weight < most_negative {
            most_negative = a.weight;
            witness = Some(a.point.clone());
        }
    }
    if most_negative < -R::weight_tol() {
        return Err(SkewError::NotSkewJump {
            point: witness_point(&witness.expect("negative weight has a location")),
            weight: most_negative.as_f64(),
        });
    }
    let nu_rho = AtomicMeasure::merged(
        d,
        residual.atoms().iter().filter(|a| a.weight > R::weight_tol()).map(|a| (a.point.clone(), a.weight)),
    );
    let xi_rho = t2.drift() - image.drift();

    let rho_gaussian = LevyTriplet::new(DVector::zeros(d), q_rho.clone(), AtomicMeasure::empty(d))?;
    let rho_jump = LevyTriplet::new(xi_rho.clone(), DMatrix::zeros(d, d), nu_rho.clone())?;
    let rho = LevyTriplet::new(xi_rho, q_rho, nu_rho)?;
    Ok(SkewSolution {
        rho,
        rho_gaussian,
        rho_jump,
        diagnostics: SkewDiagnostics { min_cov_gap_eigenvalue: min_eig, most_negative_jump_weight: most_negative },
    })
}

/// Outcome of one of the three solves in [`skew_equivalence_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome {
    pub succeeded: bool,
    pub error: Option<SkewError>,
}

impl<R: Real> From<&Result<SkewSolution<R>, SkewError>> for SolveOutcome {
    fn from(r: &Result<SkewSolution<R>, SkewError>) -> Self {
        Self { succeeded: r.is_ok(), error: r.as_ref().err().cloned() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkewEquivalenceReport {
    pub combined: SolveOutcome,
    pub gaussian: SolveOutcome,
    pub jump: SolveOutcome,
    /// combined succeeds ⇔ both components succeed
    pub equivalence_holds: bool,
    /// `ρ_γ ∗ ρ_π = ρ` on success, and the component solves reproduce the
    /// split factors; `None` when the combined solve failed.
    pub factorisation_error: Option<f64>,
    pub passed: bool,
}

/// Cross-check the combined solve against separate Gaussian and jump solves.
pub fn skew_equivalence_check<R: Real>(t: &DMatrix<R>, t1: &LevyTriplet<R>, t2: &LevyTriplet<R>) -> SkewEquivalenceReport {
    let combined = skew_solve(t, t1, t2);
    let gaussian = skew_solve(t, &t1.gaussian_part(), &t2.gaussian_part());
    let jump = skew_solve(t, &t1.jump_part(), &t2.jump_part());
    let equivalence_holds = combined.is_ok() == (gaussian.is_ok() && jump.is_ok());

    let factorisation_error = match (&combined, &gaussian, &jump) {
        (Ok(c), Ok(g), Ok(j)) => {
            let recombined = c.rho_gaussian.convolve(&c.rho_jump).expect("same dimension");
            let e = recombined
                .distance(&c.rho)
                .max(g.rho.distance(&c.rho_gaussian))
                .max(j.rho.distance(&c.rho_jump));
            Some(e.as_f64())
        }
        (Ok(c), _, _) => Some(
            c.rho_gaussian.convolve(&c.rho_jump).expect("same dimension").distance(&c.rho).as_f64(),
        ),
        _ => None,
    };
    let passed = equivalence_holds && factorisation_error.is_none_or(|e| e <= 1e-12);
    SkewEquivalenceReport {
        combined: (&combined).into(),
        gaussian: (&gaussian).into(),
        jump: (&jump).into(),
        equivalence_holds,
        factorisation_error,
        passed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen;
    use crate::triplet::Atom;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar(q: f64, atoms: &[(f64, f64)]) -> LevyTriplet<f64> {
        LevyTriplet::new(
            DVector::from_element(1, 0.0),
            DMatrix::from_element(1, 1, q),
            AtomicMeasure::new(
                1,
                atoms.iter().map(|&(x, w)| Atom { point: DVector::from_element(1, x), weight: w }).collect(),
            )
            .unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn identical_laws_give_trivial_factor() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let t1: LevyTriplet<f64> = gen::random_triplet(&mut rng, 3, 6);
        let s = skew_solve(&DMatrix::identity(3, 3), &t1, &t1).unwrap();
        assert!(s.rho.distance(&LevyTriplet::zero(3)) < 1e-12);
    }

    #[test]
    fn gaussian_failure_witness() {
        let err = skew_solve(&DMatrix::identity(1, 1), &scalar(2.0, &[]), &scalar(1.0, &[])).unwrap_err();
        assert_eq!(err, SkewError::NotSkewGaussian { min_eigenvalue: -1.0 });
    }

    #[test]
    fn jump_failure_witness() {
        let err = skew_solve(&DMatrix::identity(1, 1), &scalar(0.0, &[(2.0, 1.0)]), &scalar(0.0, &[(3.0, 1.0)]))
            .unwrap_err();
        assert_eq!(err, SkewError::NotSkewJump { point: vec![2.0], weight: -1.0 });
    }

    #[test]
    fn small_negative_residue_is_clamped() {
        let t1 = scalar(0.0, &[(2.0, 1.0)]);
        let t2 = scalar(0.0, &[(2.0, 1.0 - 5e-13)]);
        let s = skew_solve(&DMatrix::identity(1, 1), &t1, &t2).unwrap();
        assert!(s.rho.jumps().is_empty());
        assert!(s.diagnostics.most_negative_jump_weight < 0.0);
    }

    #[test]
    fn engineered_failures_are_localised() {
        let t = DMatrix::identity(1, 1);
        let g_fail = skew_equivalence_check(&t, &scalar(2.0, &[(0.5, 1.0)]), &scalar(1.0, &[(0.5, 1.5)]));
        assert!(g_fail.passed);
        assert!(!g_fail.combined.succeeded && !g_fail.gaussian.succeeded && g_fail.jump.succeeded);

        let j_fail = skew_equivalence_check(&t, &scalar(1.0, &[(0.5, 1.0)]), &scalar(1.5, &[(0.7, 1.0)]));
        assert!(j_fail.passed);
        assert!(!j_fail.combined.succeeded && j_fail.gaussian.succeeded && !j_fail.jump.succeeded);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn forward_construction_round_trip(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d1 = rng.random_range(1..=4);
            let d2 = rng.random_range(1..=4);
            let t = gen::random_matrix(&mut rng, d2, d1, 1.0);
            let t1: LevyTriplet<f64> = gen::random_triplet(&mut rng, d1, 8);
            let rho = gen::random_triplet(&mut rng, d2, 8);
            let t2 = t1.pushforward(&t).unwrap().convolve(&rho).unwrap();
            let s = skew_solve(&t, &t1, &t2).unwrap();
            prop_assert!(s.rho.distance(&rho) < 1e-12);
            let report = skew_equivalence_check(&t, &t1, &t2);
            prop_assert!(report.passed, "{report:?}");
        }
    }
}
