use clap::{Args, ValueEnum};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RunMode {
    Exact,
    Mc,
}

/// Flags shared by every subcommand. Each can also come from an `APP_*` variable.
#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Master seed for every random stream
    #[arg(long, global = true, env = "APP_SEED", default_value_t = 20_240_611)]
    pub seed: u64,

    /// Monte-Carlo sample count
    #[arg(long = "n", global = true, env = "APP_SAMPLES", default_value_t = 100_000)]
    pub samples: usize,

    /// Horizon: lattice truncation or top chaos level (default depends on the command)
    #[arg(long = "N", global = true, env = "APP_HORIZON")]
    pub horizon: Option<usize>,

    /// Worker count; part of the reproducibility key together with the seed
    #[arg(long, global = true, env = "APP_WORKERS", default_value_t = 4)]
    pub workers: usize,

    /// Write the JSON report here instead of stdout
    #[arg(long, global = true, env = "APP_OUT")]
    pub out: Option<std::path::PathBuf>,

    #[arg(long, global = true, env = "APP_MODE", value_enum, default_value_t = RunMode::Exact)]
    pub mode: RunMode,

    /// Absolute tolerance for exact-path comparisons
    #[arg(long, global = true, env = "APP_EXACT_TOL", default_value_t = 1e-8)]
    pub exact_tol: f64,

    /// Width of Monte-Carlo acceptance bands, in standard errors
    #[arg(long, global = true, env = "APP_MC_SIGMA", default_value_t = 4.0)]
    pub mc_sigma: f64,

    /// Characteristic-function sup-distance tolerance
    #[arg(long, global = true, env = "APP_ECF_TOL", default_value_t = 0.01)]
    pub ecf_tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ToleranceConfig {
    pub exact_tol: f64,
    pub mc_sigma: f64,
    pub ecf_tol: f64,
}

/// Validated run configuration, echoed into every report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub seed: u64,
    pub mc_samples: usize,
    pub horizon: usize,
    pub worker_count: usize,
    pub mode: RunMode,
    pub tolerances: ToleranceConfig,
}

impl RunConfig {
    pub fn from_args(a: &GlobalArgs, default_horizon: usize) -> anyhow::Result<Self> {
        anyhow::ensure!(a.samples >= 1, "--n must be at least 1");
        anyhow::ensure!(a.workers >= 1, "--workers must be at least 1");
        for (name, v) in [("--exact-tol", a.exact_tol), ("--mc-sigma", a.mc_sigma), ("--ecf-tol", a.ecf_tol)] {
            anyhow::ensure!(v.is_finite() && v > 0.0, "{name} must be positive, got {v}");
        }
        Ok(Self {
            seed: a.seed,
            mc_samples: a.samples,
            horizon: a.horizon.unwrap_or(default_horizon),
            worker_count: a.workers,
            mode: a.mode,
            tolerances: ToleranceConfig { exact_tol: a.exact_tol, mc_sigma: a.mc_sigma, ecf_tol: a.ecf_tol },
        })
    }
}
