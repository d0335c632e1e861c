use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Context;
use levykit::fock::ContractionPair;
use levykit::io::{self, TripletWire};
use levykit::lattice::{
    grouping_identity_check, is_infinitely_divisible, positivity_inequalities, rosinski_nu, IdStatus, IdVerdict,
    LatticeSignedMeasure,
};
use levykit::poly::Poly;
use levykit::report::{Check, Report};
use levykit::sampler::{char_sup_distance, line_grid, sample_id};
use levykit::scalar::format_rational;
use levykit::skew::{skew_equivalence_check, skew_solve, SkewError, SolveOutcome};
use levykit::verify::{self, McConfig, Scenario, ScenarioReport, Tolerances};
use levykit::Rational;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::config::{RunConfig, RunMode};

pub type CommandReport = Report<RunConfig, serde_json::Value>;

fn finish<B: Serialize>(command: &str, config: RunConfig, checks: Vec<Check>, result: B) -> anyhow::Result<CommandReport> {
    let value = serde_json::to_value(result).context("serialising report body")?;
    Ok(Report::new(command, config, checks, value))
}

type Table = BTreeMap<u64, String>;

fn table(m: &LatticeSignedMeasure<Rational>) -> Table {
    m.iter().map(|(k, q)| (k, format_rational(q))).collect()
}

fn ints(pairs: &[(u64, i64)]) -> LatticeSignedMeasure<Rational> {
    LatticeSignedMeasure::from_pairs(pairs.iter().map(|&(k, v)| (k, Rational::from_integer(v.into()))))
}

#[derive(Serialize)]
struct VerdictOut {
    label: String,
    witness: Option<(u64, String)>,
    recovered_levy: Table,
}

impl From<&IdVerdict<Rational>> for VerdictOut {
    fn from(v: &IdVerdict<Rational>) -> Self {
        Self {
            label: v.label(),
            witness: v.witness.as_ref().map(|(k, q)| (*k, format_rational(q))),
            recovered_levy: table(&v.recovered_levy),
        }
    }
}

#[derive(Serialize)]
struct InequalityOut {
    name: String,
    holds: bool,
    counterexample: Option<(u64, String)>,
}

#[derive(Serialize)]
struct GroupingOut {
    horizon: u64,
    identity_holds: bool,
    first_mismatch: Option<u64>,
    groups_nonnegative: bool,
    group_count: usize,
}

#[derive(Serialize)]
struct RosinskiOut {
    nu: Table,
    nu_2: Table,
    nu_3: Table,
    exp_measure: Table,
    inequalities: Vec<InequalityOut>,
    grouping: GroupingOut,
    z: VerdictOut,
    x_plus_z: VerdictOut,
}

pub fn cmd_rosinski(config: RunConfig) -> anyhow::Result<CommandReport> {
    let n = config.horizon as u64;
    let nu = rosinski_nu();
    let nu2 = nu.power(2);
    let nu3 = nu.power(3);
    let expect2 = ints(&[(2, 4), (3, 8), (5, 4), (6, 17), (7, 4), (9, 8), (10, 4)]);
    let expect3 = ints(&[
        (3, 8),
        (4, 24),
        (5, 12),
        (6, 8),
        (7, 66),
        (8, 54),
        (9, -1),
        (10, 54),
        (11, 66),
        (12, 8),
        (13, 12),
        (14, 24),
        (15, 8),
    ]);
    let e = nu.exp_measure(n)?;
    let grouping = grouping_identity_check(&nu, n)?;
    let inequalities = positivity_inequalities(&nu);

    let levy = ints(&[(1, 2), (2, 2), (4, 2), (5, 2)]);
    let x = ints(&[(3, 1)]).exp_measure(n)?;
    let z_verdict = is_infinitely_divisible(&e, n)?;
    let xz_verdict = is_infinitely_divisible(&e.convolve(&x).truncate(n), n)?;

    let z_ok = if n >= 3 {
        z_verdict.status == IdStatus::NotId && z_verdict.witness == Some((3, Rational::from_integer((-1).into())))
    } else {
        z_verdict.status == IdStatus::IdUpTo
    };
    let xz_ok = xz_verdict.status == IdStatus::IdUpTo && xz_verdict.recovered_levy == levy.truncate(n);

    let mut checks = vec![
        Check::new("nu^2 matches table", nu2 == expect2),
        Check::new("nu^3 matches table", nu3 == expect3),
        Check::new(format!("e(nu) >= 0 on 0..={n}"), e.is_nonnegative()),
        Check::new(format!("grouping identity on 0..={n}"), grouping.identity_holds),
        Check::new("grouped terms >= 0", grouping.groups_nonnegative),
    ];
    checks.extend(inequalities.iter().map(|c| Check::new(c.name.clone(), c.holds)));
    checks.push(Check::with_detail("Z verdict", z_ok, z_verdict.label()));
    checks.push(Check::with_detail("X+Z verdict", xz_ok, xz_verdict.label()));

    let out = RosinskiOut {
        nu: table(&nu),
        nu_2: table(&nu2),
        nu_3: table(&nu3),
        exp_measure: table(&e),
        inequalities: inequalities
            .iter()
            .map(|c| InequalityOut {
                name: c.name.clone(),
                holds: c.holds,
                counterexample: c.counterexample.as_ref().map(|(k, q)| (*k, format_rational(q))),
            })
            .collect(),
        grouping: GroupingOut {
            horizon: grouping.horizon,
            identity_holds: grouping.identity_holds,
            first_mismatch: grouping.first_mismatch,
            groups_nonnegative: grouping.groups_nonnegative,
            group_count: grouping.group_count,
        },
        z: (&z_verdict).into(),
        x_plus_z: (&xz_verdict).into(),
    };
    finish("rosinski", config, checks, out)
}

#[derive(Serialize)]
struct SolveOut {
    succeeded: bool,
    error: Option<String>,
}

impl From<&SolveOutcome> for SolveOut {
    fn from(o: &SolveOutcome) -> Self {
        Self { succeeded: o.succeeded, error: o.error.as_ref().map(ToString::to_string) }
    }
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum SkewWitness {
    Gaussian { min_eigenvalue: f64 },
    Jump { point: Vec<f64>, weight: f64 },
    Other { message: String },
}

#[derive(Serialize)]
struct SkewOut {
    rho: Option<TripletWire>,
    rho_gaussian: Option<TripletWire>,
    rho_jump: Option<TripletWire>,
    min_cov_gap_eigenvalue: Option<f64>,
    most_negative_jump_weight: Option<f64>,
    witness: Option<SkewWitness>,
    combined: SolveOut,
    gaussian: SolveOut,
    jump: SolveOut,
    factorisation_error: Option<f64>,
}

pub fn cmd_skew(config: RunConfig, t: &Path, t1: &Path, t2: &Path) -> anyhow::Result<CommandReport> {
    let t = io::read_matrix(t)?;
    let t1 = io::read_triplet(t1)?;
    let t2 = io::read_triplet(t2)?;
    let solved = skew_solve(&t, &t1, &t2);
    let eq = skew_equivalence_check(&t, &t1, &t2);
    let witness = solved.as_ref().err().map(|e| match e {
        SkewError::NotSkewGaussian { min_eigenvalue } => SkewWitness::Gaussian { min_eigenvalue: *min_eigenvalue },
        SkewError::NotSkewJump { point, weight } => SkewWitness::Jump { point: point.clone(), weight: *weight },
        other => SkewWitness::Other { message: other.to_string() },
    });
    let checks = vec![
        match &solved {
            Ok(_) => Check::new("skew factor exists", true),
            Err(e) => Check::with_detail("skew factor exists", false, e.to_string()),
        },
        Check::new("gaussian/jump equivalence", eq.passed),
    ];
    let ok = solved.as_ref().ok();
    let out = SkewOut {
        rho: ok.map(|s| TripletWire::from_triplet(&s.rho)),
        rho_gaussian: ok.map(|s| TripletWire::from_triplet(&s.rho_gaussian)),
        rho_jump: ok.map(|s| TripletWire::from_triplet(&s.rho_jump)),
        min_cov_gap_eigenvalue: ok.map(|s| s.diagnostics.min_cov_gap_eigenvalue),
        most_negative_jump_weight: ok.map(|s| s.diagnostics.most_negative_jump_weight),
        witness,
        combined: (&eq.combined).into(),
        gaussian: (&eq.gaussian).into(),
        jump: (&eq.jump).into(),
        factorisation_error: eq.factorisation_error,
    };
    finish("skew", config, checks, out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Expectation {
    Id,
    Notid,
}

pub fn cmd_idtest(config: RunConfig, measure: &Path, expect: Option<Expectation>) -> anyhow::Result<CommandReport> {
    let law = io::read_lattice(measure)?;
    let verdict = is_infinitely_divisible(&law, config.horizon as u64)?;
    let mut checks = vec![Check::with_detail("verdict computed", true, verdict.label())];
    if let Some(e) = expect {
        let want = match e {
            Expectation::Id => IdStatus::IdUpTo,
            Expectation::Notid => IdStatus::NotId,
        };
        checks.push(Check::new("verdict matches expectation", verdict.status == want));
    }
    finish("idtest", config, checks, VerdictOut::from(&verdict))
}

#[derive(Serialize)]
struct SampleOut {
    dim: usize,
    samples: usize,
    grid_points: usize,
    ecf_sup_distance: f64,
    samples_csv: Option<String>,
}

pub fn cmd_sample(config: RunConfig, triplet: &Path, csv_out: Option<&Path>) -> anyhow::Result<CommandReport> {
    let t = io::read_triplet(triplet)?;
    let batch = sample_id(&t, config.seed, config.mc_samples, config.worker_count);
    let d = t.dim();
    let direction = DVector::from_element(d, 1.0 / (d.max(1) as f64).sqrt());
    let grid = line_grid(&direction, 2.0, 21);
    let sup = char_sup_distance(&t, &batch, &grid)?;
    if let Some(path) = csv_out {
        let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
        w.write_record((0..d).map(|i| format!("x{i}")))?;
        for x in &batch {
            w.write_record(x.iter().map(|v| format!("{v:.16e}")))?;
        }
        w.flush()?;
    }
    let checks = vec![Check::with_detail(
        "empirical characteristic function",
        sup <= config.tolerances.ecf_tol,
        format!("sup distance {sup:.3e} on 21 points"),
    )];
    let out = SampleOut {
        dim: d,
        samples: config.mc_samples,
        grid_points: grid.len(),
        ecf_sup_distance: sup,
        samples_csv: csv_out.map(|p| p.display().to_string()),
    };
    finish("sample", config, checks, out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Builtin {
    Identity,
    Mehler,
    RankDeficient,
}

pub struct DiagramInputs {
    pub scenario: Option<PathBuf>,
    pub builtin: Option<Builtin>,
    pub f: Option<PathBuf>,
    pub blocks_csv: Option<PathBuf>,
    pub coeffs_out: Option<PathBuf>,
}

fn load_scenario(inputs: &DiagramInputs) -> anyhow::Result<Scenario> {
    match (&inputs.scenario, inputs.builtin) {
        (Some(path), None) => {
            let s = io::read_scenario(path)?;
            Ok(verify::make_scenario(&s.name, s.t, s.t1, s.rho)?)
        }
        (None, Some(Builtin::Identity)) => Ok(verify::identity_scenario()),
        (None, Some(Builtin::Mehler)) => Ok(verify::mehler_scenario()),
        (None, Some(Builtin::RankDeficient)) => Ok(verify::rank_deficient_scenario()),
        (None, None) => anyhow::bail!("one of --scenario or --builtin is required"),
        (Some(_), Some(_)) => anyhow::bail!("--scenario and --builtin are mutually exclusive"),
    }
}

/// `Σ_i (x_i² + x_i)`, used when no `--f` is given.
pub fn default_test_function(dim: usize) -> Poly<f64> {
    let mut p = Poly::zero(dim);
    for i in 0..dim {
        let mut e = vec![0; dim];
        e[i] = 2;
        p.add_term(e.clone(), 1.0);
        e[i] = 1;
        p.add_term(e, 1.0);
    }
    p
}

fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> anyhow::Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for row in m.row_iter() {
        w.write_record(row.iter().map(|v| format!("{v:.16e}")))?;
    }
    w.flush()?;
    Ok(())
}

pub fn export_pair(dir: &Path, pair: &ContractionPair<f64>) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write_matrix_csv(&dir.join("gaussian_block.csv"), &pair.gaussian_block)?;
    write_matrix_csv(&dir.join("poisson_block.csv"), &pair.poisson_block)
}

#[derive(Serialize)]
struct DiagramOut {
    gaussian_block: Vec<Vec<f64>>,
    poisson_block: Vec<Vec<f64>>,
    gaussian_block_norm: f64,
    poisson_block_norm: f64,
    transition: io::PolyWire,
    #[serde(flatten)]
    report: ScenarioReport,
}

pub fn cmd_diagram(config: RunConfig, inputs: &DiagramInputs) -> anyhow::Result<CommandReport> {
    let scenario = load_scenario(inputs)?;
    let f = match &inputs.f {
        Some(path) => io::read_poly(path)?,
        None => default_test_function(scenario.t2.dim()),
    };
    anyhow::ensure!(
        f.nvars() == scenario.t2.dim(),
        "test function has {} variables but the target side has dimension {}",
        f.nvars(),
        scenario.t2.dim()
    );
    let tol = Tolerances {
        exact: config.tolerances.exact_tol,
        residual: 1e-6,
        mc_sigma: config.tolerances.mc_sigma,
        ecf: config.tolerances.ecf_tol,
    };
    let mc = (config.mode == RunMode::Mc).then_some(McConfig {
        samples: config.mc_samples,
        seed: config.seed,
        workers: config.worker_count,
    });
    let horizon = config.horizon;
    let report = verify::verify_all(&scenario, &f, horizon, &tol, mc)?;

    if let Some(dir) = &inputs.blocks_csv {
        export_pair(dir, &scenario.pair)?;
    }
    if let Some(path) = &inputs.coeffs_out {
        let lifted = scenario.basis2.lift(&f)?;
        let coeffs = levykit::chaos::expand(&lifted, &scenario.basis2, horizon);
        let text = levykit::report::to_json_string(&io::ChaosWire::from_coeffs(&coeffs));
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    }

    let pt = levykit::fock::apply_pt_exact(&f, &scenario.t, &scenario.solution.rho)?;
    let mut checks = Vec::new();
    for s in &report.slp {
        checks.push(Check::with_detail(
            format!("expansion side {:?}", s.side).to_lowercase(),
            s.passed,
            format!("relative residual {:.3e}, horizon {}, degree {}", s.relative_residual, s.horizon, s.degree),
        ));
    }
    for c in &report.commute {
        checks.push(Check::with_detail(format!("derivative identity n={}", c.order), c.passed, format!("max gap {:.3e}", c.max_abs_diff)));
    }
    checks.push(Check::with_detail(
        "coefficient diagram",
        report.diagram.coefficients_passed,
        format!("max gap {:.3e}", report.diagram.coefficient_max_abs_diff),
    ));
    for s in &report.diagram.sides {
        if let Some(d) = &s.distribution {
            checks.push(Check::with_detail(
                format!("distribution side {:?} (partial: moments <= 4, ecf)", s.side).to_lowercase(),
                d.passed,
                format!("ecf sup {:.3e}", d.ecf_sup_distance),
            ));
        }
    }
    let out = DiagramOut {
        gaussian_block: io::matrix_rows(&scenario.pair.gaussian_block),
        poisson_block: io::matrix_rows(&scenario.pair.poisson_block),
        gaussian_block_norm: scenario.pair.gaussian_norm(),
        poisson_block_norm: scenario.pair.poisson_norm(),
        transition: io::PolyWire::from_poly(&pt),
        report,
    };
    finish("diagram-check", config, checks, out)
}

/// Degree of `f`: the horizon at which the expansion of a polynomial is exact.
pub fn default_horizon(inputs: &DiagramInputs) -> anyhow::Result<usize> {
    Ok(match &inputs.f {
        Some(path) => io::read_poly(path)?.total_degree(),
        None => 2,
    })
}
