//! `urnlab`: validate, analyze and simulate multiple-drawing urn schemes.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use urnlab::SamplingMode;

#[derive(Debug, Parser)]
#[command(name = "urnlab", version, about = "Affine multiple-drawing urn schemes")]
pub struct Cli {
    /// Worker threads for Monte Carlo (0 picks the number of cores).
    #[arg(long, global = true, env = "URNLAB_THREADS", default_value_t = 0)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct SpecSource {
    /// Urn specification in JSON.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Built-in urn: table, small, defective, critical or large.
    #[arg(long)]
    pub preset: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a specification against the model rules; exits 1 when it fails.
    Validate {
        #[command(flatten)]
        source: SpecSource,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the full replacement matrix as CSV, one row per sample.
    Expand {
        #[command(flatten)]
        source: SpecSource,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Eigenvalue groups, projections and the core-index regime.
    Classify {
        #[command(flatten)]
        source: SpecSource,
        /// Relative eigenvalue clustering tolerance.
        #[arg(long, default_value_t = urnlab::spectral::DEFAULT_CLUSTER_TOL)]
        tol: f64,
        /// Half-width of the critical band around index 1/2.
        #[arg(long, default_value_t = urnlab::spectral::DEFAULT_TOL_HALF)]
        tol_half: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact mean and covariance for n = 0..=N as CSV.
    Moments {
        #[command(flatten)]
        source: SpecSource,
        #[arg(long)]
        n: u64,
        /// Emit every m-th step (the last step is always written).
        #[arg(long, default_value_t = 1)]
        every: u64,
        #[arg(long)]
        mode: Option<SamplingMode>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Limiting matrices and covariance scale.
    Asymptotics {
        #[command(flatten)]
        source: SpecSource,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo summary of the composition at step n.
    Simulate {
        #[command(flatten)]
        source: SpecSource,
        #[command(flatten)]
        run: RunArgs,
        /// Also follow one extra path and check the martingale differences exactly.
        #[arg(long)]
        record_y: bool,
        /// Per-replication terminal states.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare Monte Carlo against exact and limiting moments; exits 5 on failure.
    Verify {
        #[command(flatten)]
        source: SpecSource,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 5.0)]
        z_max: f64,
        #[arg(long, default_value_t = 0.1)]
        skew_max: f64,
        #[arg(long, default_value_t = 0.2)]
        kurtosis_max: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a built-in specification as JSON.
    Preset { name: String },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long, default_value_t = 1000)]
    pub n: u64,
    #[arg(long, default_value_t = 1000)]
    pub reps: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub mode: Option<SamplingMode>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("urnlab: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
