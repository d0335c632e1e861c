//! End-to-end checks of the chaos expansion and the second-quantisation diagram
//! on forward-constructed scenarios.
//!
//! Every check compares two independently computed quantities. The
//! distributional half of the diagram is only a partial check: moments up to
//! order four and the characteristic function on a grid.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use serde::Serialize;
use thiserror::Error;

use crate::chaos::{expand, joint_coeff, l2_error, reconstruct_poly, ChaosError, Mode, OrthoBasis, TestFunction};
use crate::fock::{apply_pt_exact, gamma_apply, ContractionPair, FockError};
use crate::poly::Poly;
use crate::sampler::{par_draw, IdSampler, McEstimate};
use crate::skew::{skew_solve, SkewError, SkewSolution};
use crate::triplet::{Atom, AtomicMeasure, LevyTriplet, TripletError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Triplet(#[from] TripletError),
    #[error(transparent)]
    Skew(#[from] SkewError),
    #[error(transparent)]
    Fock(#[from] FockError),
    #[error(transparent)]
    Chaos(#[from] ChaosError),
}

/// `T`, `λ₁`, `ρ` and everything derived from them.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub t: DMatrix<f64>,
    pub t1: LevyTriplet<f64>,
    pub rho: LevyTriplet<f64>,
    pub t2: LevyTriplet<f64>,
    pub solution: SkewSolution<f64>,
    pub basis1: OrthoBasis<f64>,
    pub basis2: OrthoBasis<f64>,
    pub pair: ContractionPair<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    One,
    Two,
}

impl Scenario {
    pub fn basis(&self, side: Side) -> &OrthoBasis<f64> {
        match side {
            Side::One => &self.basis1,
            Side::Two => &self.basis2,
        }
    }

    pub fn law(&self, side: Side) -> &LevyTriplet<f64> {
        match side {
            Side::One => &self.t1,
            Side::Two => &self.t2,
        }
    }
}

/// Build `λ₂ = Tλ₁ ∗ ρ` and all side data.
pub fn make_scenario(
    name: &str,
    t: DMatrix<f64>,
    t1: LevyTriplet<f64>,
    rho: LevyTriplet<f64>,
) -> Result<Scenario, VerifyError> {
    let t2 = t1.pushforward(&t)?.convolve(&rho)?;
    let solution = skew_solve(&t, &t1, &t2)?;
    let pair = ContractionPair::new(&t, &t1, &t2)?;
    Ok(Scenario {
        name: name.to_string(),
        basis1: OrthoBasis::of_triplet(&t1),
        basis2: OrthoBasis::of_triplet(&t2),
        t,
        t1,
        rho,
        t2,
        solution,
        pair,
    })
}

fn atoms(d: usize, list: &[(&[f64], f64)]) -> AtomicMeasure<f64> {
    AtomicMeasure::new(d, list.iter().map(|(x, w)| Atom { point: DVector::from_row_slice(x), weight: *w }).collect())
        .expect("literal atoms are valid")
}

pub fn identity_scenario() -> Scenario {
    let t1 = LevyTriplet::new(
        DVector::from_row_slice(&[0.2, -0.1]),
        DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.5]),
        atoms(2, &[(&[0.5, 0.5], 0.8), (&[1.5, -1.0], 0.4)]),
    )
    .expect("valid triplet");
    make_scenario("identity", DMatrix::identity(2, 2), t1, LevyTriplet::zero(2)).expect("identity scenario")
}

/// One-dimensional Ornstein–Uhlenbeck step with `T = 0.5`.
pub fn mehler_scenario() -> Scenario {
    let t1 = LevyTriplet::new(DVector::zeros(1), DMatrix::from_element(1, 1, 1.0), atoms(1, &[(&[2.0], 1.0)]))
        .expect("valid triplet");
    let rho = LevyTriplet::new(DVector::zeros(1), DMatrix::from_element(1, 1, 0.75), atoms(1, &[(&[1.0], 0.5)]))
        .expect("valid triplet");
    make_scenario("mehler", DMatrix::from_element(1, 1, 0.5), t1, rho).expect("mehler scenario")
}

/// Rank-one `T` on the plane: one atom is killed, two collide.
pub fn rank_deficient_scenario() -> Scenario {
    let t = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.0, 0.0]);
    let t1 = LevyTriplet::new(
        DVector::zeros(2),
        DMatrix::identity(2, 2),
        atoms(2, &[(&[1.0, -1.0], 0.7), (&[2.0, 0.0], 0.4), (&[0.0, 2.0], 0.6), (&[0.3, 0.1], 1.0)]),
    )
    .expect("valid triplet");
    let rho = LevyTriplet::new(
        DVector::from_row_slice(&[0.1, -0.2]),
        DMatrix::from_row_slice(2, 2, &[0.25, 0.0, 0.0, 0.0]),
        atoms(2, &[(&[0.0, 1.0], 0.5)]),
    )
    .expect("valid triplet");
    make_scenario("rank-deficient", t, t1, rho).expect("rank-deficient scenario")
}

pub fn canonical_scenarios() -> Vec<Scenario> {
    vec![identity_scenario(), mehler_scenario(), rank_deficient_scenario()]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerances {
    /// Coefficient and Parseval agreement on the exact path.
    pub exact: f64,
    /// Relative L² reconstruction residual.
    pub residual: f64,
    /// Width of Monte-Carlo acceptance bands in standard errors.
    pub mc_sigma: f64,
    /// Characteristic-function sup-distance.
    pub ecf: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { exact: 1e-8, residual: 1e-6, mc_sigma: 4.0, ecf: 0.01 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct McConfig {
    pub samples: usize,
    pub seed: u64,
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McCheck {
    pub samples: usize,
    pub norm_sq: f64,
    pub norm_sq_se: f64,
    pub residual_sq: f64,
    pub residual_sq_se: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlpReport {
    pub side: Side,
    pub degree: usize,
    pub horizon: usize,
    pub relative_residual: f64,
    /// `E F²` by direct moments.
    pub norm_sq: f64,
    /// `Σ_n ‖c_n‖²/n!`.
    pub fock_norm_sq: f64,
    pub parseval_gap: f64,
    pub mc: Option<McCheck>,
    pub passed: bool,
}

fn scale_of(v: f64) -> f64 {
    v.abs().max(1.0)
}

/// Stroock / Last–Penrose expansion of an ambient polynomial on one side.
pub fn verify_slp(
    scenario: &Scenario,
    side: Side,
    f: &Poly<f64>,
    horizon: usize,
    tol: &Tolerances,
    mc: Option<McConfig>,
) -> Result<SlpReport, VerifyError> {
    let basis = scenario.basis(side);
    let lifted = basis.lift(f)?;
    Ok(slp_on(basis, side, &lifted, horizon, tol, mc))
}

fn slp_on(
    basis: &OrthoBasis<f64>,
    side: Side,
    lifted: &TestFunction<f64>,
    horizon: usize,
    tol: &Tolerances,
    mc: Option<McConfig>,
) -> SlpReport {
    let degree = lifted.degree();
    let coeffs = expand(lifted, basis, horizon);
    let exact = l2_error(lifted, &coeffs, basis, Mode::Exact);
    let norm_sq = exact.norm_sq.estimate;
    let fock_norm_sq = coeffs.fock_norm_sq();
    let parseval_gap = (fock_norm_sq - norm_sq).abs();

    let mc = mc.map(|c| {
        let e = l2_error(lifted, &coeffs, basis, Mode::MonteCarlo { samples: c.samples, seed: c.seed, workers: c.workers });
        let residual_ok = e.residual_sq.contains(exact.residual_sq.estimate, tol.mc_sigma)
            || (e.residual_sq.estimate - exact.residual_sq.estimate).abs() <= tol.exact * scale_of(norm_sq);
        let target = if horizon >= degree { fock_norm_sq } else { norm_sq };
        McCheck {
            samples: c.samples,
            norm_sq: e.norm_sq.estimate,
            norm_sq_se: e.norm_sq.se,
            residual_sq: e.residual_sq.estimate,
            residual_sq_se: e.residual_sq.se,
            passed: residual_ok && e.norm_sq.contains(target, tol.mc_sigma),
        }
    });

    let passed = if horizon >= degree {
        exact.relative <= tol.residual && parseval_gap <= tol.exact * scale_of(norm_sq)
    } else {
        exact.relative > 0.0
    } && mc.as_ref().is_none_or(|m| m.passed);
    SlpReport { side, degree, horizon, relative_residual: exact.relative, norm_sq, fock_norm_sq, parseval_gap, mc, passed }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockGap {
    pub j: usize,
    pub k: usize,
    pub max_abs_diff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CommuteReport {
    pub order: usize,
    pub blocks: Vec<BlockGap>,
    pub max_abs_diff: f64,
    pub passed: bool,
}

/// `E₁ Dⁿ F_{P_T f}` against the pair applied to `E₂ Dⁿ F_f`, block by block.
pub fn verify_commute(scenario: &Scenario, f: &Poly<f64>, n: usize, tol: &Tolerances) -> Result<CommuteReport, VerifyError> {
    let pt = apply_pt_exact(f, &scenario.t, &scenario.solution.rho)?;
    let lhs = joint_coeff(&scenario.basis1.lift(&pt)?, &scenario.basis1, n);
    let rhs_src = joint_coeff(&scenario.basis2.lift(f)?, &scenario.basis2, n);
    let blocks: Vec<BlockGap> = lhs
        .iter()
        .zip(&rhs_src)
        .map(|(l, r)| BlockGap { j: l.j, k: l.k, max_abs_diff: l.max_abs_diff(&scenario.pair.apply_block(r)) })
        .collect();
    let max_abs_diff = blocks.iter().fold(0.0, |a: f64, b| a.max(b.max_abs_diff));
    Ok(CommuteReport { order: n, blocks, max_abs_diff, passed: max_abs_diff <= tol.exact })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentCheck {
    pub order: u32,
    pub direct: f64,
    pub direct_se: f64,
    pub chaos: f64,
    pub chaos_se: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistributionCheck {
    /// Moment and characteristic-function matching only; not a full test of equality in law.
    pub partial: bool,
    pub samples: usize,
    pub moments: Vec<MomentCheck>,
    pub ecf_sup_distance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SideCheck {
    pub side: Side,
    pub slp: SlpReport,
    pub distribution: Option<DistributionCheck>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagramReport {
    pub horizon: usize,
    /// Largest coefficient gap between the chaos of `P_T f` and `Γ(pair)` of the chaos of `f`.
    pub coefficient_max_abs_diff: f64,
    /// Same gap in isometric (`1/√(n!)`) coordinates.
    pub isometric_max_abs_diff: f64,
    pub coefficients_passed: bool,
    pub sides: Vec<SideCheck>,
    pub passed: bool,
}

fn moments_of(values: &[f64], order: u32) -> McEstimate {
    McEstimate::from_values(&values.iter().map(|v| v.powi(order as i32)).collect::<Vec<_>>())
}

fn ecf(values: &[f64], u: f64) -> Complex<f64> {
    let (c, s) = values.iter().fold((0.0, 0.0), |(c, s), v| (c + (u * v).cos(), s + (u * v).sin()));
    Complex::new(c, s) / values.len() as f64
}

/// Law of `F` at the noise (via the ambient sampler) against the law of `Σ I_n/n!`
/// at an independent draw of the chaos coordinates.
pub fn distribution_check(
    law: &LevyTriplet<f64>,
    basis: &OrthoBasis<f64>,
    f: &Poly<f64>,
    recon: &TestFunction<f64>,
    mc: McConfig,
    tol: &Tolerances,
) -> DistributionCheck {
    let sampler = IdSampler::new(law);
    let direct = par_draw(mc.seed, mc.samples, mc.workers, |rng| f.eval(sampler.draw(rng).as_slice()));
    let chaos = par_draw(mc.seed.wrapping_add(1), mc.samples, mc.workers, |rng| {
        let (g, n) = basis.draw(rng);
        recon.eval(&g, &n)
    });
    let moments: Vec<MomentCheck> = (1..=4)
        .map(|order| {
            let a = moments_of(&direct, order);
            let b = moments_of(&chaos, order);
            let spread = (a.estimate - b.estimate).abs();
            MomentCheck {
                order,
                direct: a.estimate,
                direct_se: a.se,
                chaos: b.estimate,
                chaos_se: b.se,
                passed: a.agrees_with(&b, tol.mc_sigma) || spread <= tol.exact * scale_of(a.estimate),
            }
        })
        .collect();
    let sd = moments_of(&direct, 2).estimate - moments_of(&direct, 1).estimate.powi(2);
    let scale = if sd > 0.0 { sd.sqrt() } else { 1.0 };
    let ecf_sup_distance = (0..21)
        .map(|i| {
            let u = (-2.0 + 0.2 * i as f64) / scale;
            (ecf(&direct, u) - ecf(&chaos, u)).norm()
        })
        .fold(0.0, f64::max);
    let passed = moments.iter().all(|m| m.passed) && ecf_sup_distance <= tol.ecf;
    DistributionCheck { partial: true, samples: mc.samples, moments, ecf_sup_distance, passed }
}

/// Both diagrams: chaos coefficients of `P_T f` against `Γ(pair)`, then the
/// expansion and its law on each side.
pub fn verify_diagram(
    scenario: &Scenario,
    f: &Poly<f64>,
    horizon: usize,
    tol: &Tolerances,
    mc: Option<McConfig>,
) -> Result<DiagramReport, VerifyError> {
    let pt = apply_pt_exact(f, &scenario.t, &scenario.solution.rho)?;
    let lifted1 = scenario.basis1.lift(&pt)?;
    let lifted2 = scenario.basis2.lift(f)?;
    let c1 = expand(&lifted1, &scenario.basis1, horizon);
    let c2 = expand(&lifted2, &scenario.basis2, horizon);
    let image = gamma_apply(&scenario.pair, &c2)?;
    let coefficient_max_abs_diff = (0..=horizon).fold(0.0, |a: f64, n| a.max(c1.level_max_diff(&image, n)));
    let isometric_max_abs_diff = c1.isometric_max_diff(&image);
    let coefficients_passed = coefficient_max_abs_diff <= tol.exact;

    let mut sides = Vec::new();
    for (side, ambient, lifted, coeffs) in [(Side::Two, f, &lifted2, &c2), (Side::One, &pt, &lifted1, &c1)] {
        let basis = scenario.basis(side);
        let slp = slp_on(basis, side, lifted, horizon, tol, None);
        let distribution = mc.map(|c| {
            let recon = reconstruct_poly(coeffs);
            let seed = if side == Side::One { c.seed.wrapping_add(2) } else { c.seed };
            distribution_check(scenario.law(side), basis, ambient, &recon, McConfig { seed, ..c }, tol)
        });
        let passed = slp.passed && distribution.as_ref().is_none_or(|d| d.passed);
        sides.push(SideCheck { side, slp, distribution, passed });
    }
    let passed = coefficients_passed && sides.iter().all(|s| s.passed);
    Ok(DiagramReport { horizon, coefficient_max_abs_diff, isometric_max_abs_diff, coefficients_passed, sides, passed })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioReport {
    pub scenario: String,
    pub slp: Vec<SlpReport>,
    pub commute: Vec<CommuteReport>,
    pub diagram: DiagramReport,
    pub passed: bool,
}

/// Everything for one scenario and one `f` on the `λ₂` side: expansion on both
/// sides, the derivative identity for `n ≤ min(3, horizon)`, and both diagrams.
pub fn verify_all(
    scenario: &Scenario,
    f: &Poly<f64>,
    horizon: usize,
    tol: &Tolerances,
    mc: Option<McConfig>,
) -> Result<ScenarioReport, VerifyError> {
    let pt = apply_pt_exact(f, &scenario.t, &scenario.solution.rho)?;
    let slp = vec![
        verify_slp(scenario, Side::Two, f, horizon, tol, mc)?,
        verify_slp(scenario, Side::One, &pt, horizon, tol, mc)?,
    ];
    let commute = (0..=horizon.min(3)).map(|n| verify_commute(scenario, f, n, tol)).collect::<Result<Vec<_>, _>>()?;
    let diagram = verify_diagram(scenario, f, horizon, tol, mc)?;
    let passed = slp.iter().all(|r| r.passed) && commute.iter().all(|r| r.passed) && diagram.passed;
    Ok(ScenarioReport { scenario: scenario.name.clone(), slp, commute, diagram, passed })
}
