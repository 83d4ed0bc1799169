//! `apgw`: fit, compare, simulate and plot-ready curves for APGW survival
//! regression models.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 validation error, 3 convergence
//! failure (outputs are still written).

mod bundle;
mod commands;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use run::Failure;

#[derive(Debug, Parser)]
#[command(name = "apgw", version, about = "APGW survival regression: fit, compare, simulate, curves")]
struct Cli {
    /// Directory for all outputs.
    #[arg(long, global = true, env = "APGW_OUT_DIR", default_value = "apgw-out")]
    out_dir: PathBuf,

    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Seed for multi-start perturbations and simulations.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
struct DataArgs {
    /// CSV file with a header row.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Time column.
    #[arg(long)]
    time: Option<String>,
    /// Event-status column (1 = event, 0 = censored).
    #[arg(long)]
    status: Option<String>,
    /// Covariate columns, comma-separated; text columns become indicators.
    #[arg(long, value_delimiter = ',')]
    covariates: Option<Vec<String>>,
}

#[derive(Debug, Clone, Args)]
struct ModelArgs {
    /// Model spec such as `M(tau,alpha)`.
    #[arg(long)]
    model: Option<String>,
    /// Fix a coefficient, e.g. `--fix nu0=0.6931`; repeatable.
    #[arg(long = "fix", value_name = "KEY=VALUE")]
    fix: Vec<String>,
    /// Permit tau and beta in the same spec.
    #[arg(long)]
    allow_two_scales: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit one model and write a coefficient report.
    Fit {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        /// Confidence level for Wald intervals.
        #[arg(long, default_value_t = 0.95)]
        level: f64,
    },
    /// Fit several models to one dataset and tabulate AIC/BIC.
    Compare {
        #[command(flatten)]
        data: DataArgs,
        /// Model specs; repeatable. Defaults to the six single-shape-block models.
        #[arg(long = "model")]
        models: Vec<String>,
        #[arg(long = "fix", value_name = "KEY=VALUE")]
        fix: Vec<String>,
        #[arg(long)]
        allow_two_scales: bool,
    },
    /// Evaluate survivor, hazard or ratio curves from a fitted model.
    Curves {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        /// survivor | hazard | hazard-ratio | quantile-ratio
        #[arg(long)]
        kind: String,
        /// Covariate profile, comma-separated, in model column order.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        profile: Option<Vec<f64>>,
        /// Covariate switched 0 -> 1 for ratio curves.
        #[arg(long)]
        covariate: Option<String>,
        /// Explicit grid (times, or probabilities for quantile-ratio).
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
        /// Number of grid points when no grid is given.
        #[arg(long, default_value_t = 100)]
        points: usize,
    },
    /// Run a simulation study from a scenario file.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        /// Write one simulated dataset per nu value instead of fitting.
        #[arg(long)]
        emit_dataset: bool,
    },
    /// Run a bundled simulation design.
    ReplicatePaper {
        /// 3 | 4 | B1 | B2
        #[arg(long)]
        table: String,
        #[arg(long, default_value_t = 200)]
        replicates: usize,
        /// Sample size; defaults to the design's own.
        #[arg(long)]
        n: Option<usize>,
        /// Restrict to these nu values, comma-separated (`inf` allowed).
        #[arg(long, value_delimiter = ',')]
        nu: Option<Vec<f64>>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.exit_code())
        }
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Io(_) => 1,
            Failure::Validation(_) => 2,
            Failure::Convergence(_) => 3,
        }
    }
}
