use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;

use commands::{Builtin, CommandReport, DiagramInputs, Expectation};
use config::{GlobalArgs, RunConfig};

/// Exact and Monte-Carlo checks for finite-activity Lévy laws and their chaos expansions.
#[derive(Debug, Parser)]
#[command(name = "levykit", version)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Lattice example: powers, exp-measure, grouping, and ID verdicts for Z and X+Z
    Rosinski,
    /// Solve for the skew factor ρ with T λ₁ ∗ ρ = λ₂
    Skew {
        #[arg(long = "T")]
        t: PathBuf,
        #[arg(long)]
        t1: PathBuf,
        #[arg(long)]
        t2: PathBuf,
    },
    /// Infinite-divisibility test for a lattice law
    Idtest {
        #[arg(long)]
        measure: PathBuf,
        /// Fail unless the verdict matches
        #[arg(long, value_enum)]
        expect: Option<Expectation>,
    },
    /// Draw from a triplet; `--out` receives the samples as CSV
    Sample {
        #[arg(long)]
        triplet: PathBuf,
    },
    /// Chaos expansion, derivative identity and second-quantisation diagram
    #[command(alias = "verify")]
    DiagramCheck {
        #[arg(long, conflicts_with = "builtin")]
        scenario: Option<PathBuf>,
        #[arg(long, value_enum)]
        builtin: Option<Builtin>,
        /// Polynomial on the λ₂ side (default Σ xᵢ² + xᵢ)
        #[arg(long)]
        f: Option<PathBuf>,
        /// Write the contraction blocks as CSV files into this directory
        #[arg(long)]
        blocks_csv: Option<PathBuf>,
        /// Write the chaos coefficients of f as JSON
        #[arg(long)]
        coeffs_out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> anyhow::Result<(CommandReport, Option<PathBuf>)> {
    let g = &cli.global;
    let report_out = g.out.clone();
    match cli.command {
        Command::Rosinski => Ok((commands::cmd_rosinski(RunConfig::from_args(g, 60)?)?, report_out)),
        Command::Skew { t, t1, t2 } => Ok((commands::cmd_skew(RunConfig::from_args(g, 0)?, &t, &t1, &t2)?, report_out)),
        Command::Idtest { measure, expect } => {
            Ok((commands::cmd_idtest(RunConfig::from_args(g, 60)?, &measure, expect)?, report_out))
        }
        Command::Sample { triplet } => {
            let config = RunConfig::from_args(g, 0)?;
            Ok((commands::cmd_sample(config, &triplet, g.out.as_deref())?, None))
        }
        Command::DiagramCheck { scenario, builtin, f, blocks_csv, coeffs_out } => {
            let inputs = DiagramInputs { scenario, builtin, f, blocks_csv, coeffs_out };
            let horizon = commands::default_horizon(&inputs)?;
            Ok((commands::cmd_diagram(RunConfig::from_args(g, horizon)?, &inputs)?, report_out))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok((report, out)) => {
            let text = report.to_json();
            match out {
                Some(path) => {
                    if let Err(e) = std::fs::write(&path, &text) {
                        eprintln!("error: writing {}: {e}", path.display());
                        return ExitCode::from(2);
                    }
                }
                None => print!("{text}"),
            }
            for c in report.checks.iter().filter(|c| !c.passed) {
                eprintln!("FAIL {}{}", c.name, c.detail.as_deref().map(|d| format!(": {d}")).unwrap_or_default());
            }
            if report.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
