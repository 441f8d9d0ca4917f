//! `qgraph` command-line front end.

mod commands;
mod io;
mod record;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

/// Exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_HYPOTHESIS: i32 = 3;
pub const EXIT_DIVERGED: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("input error: {0}")]
    Input(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Internal(_) => EXIT_INTERNAL,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "qgraph", version, about = "Spectra, gaps and bilinear control on compact quantum graphs")]
pub struct Cli {
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Directory receiving artifacts and runs.jsonl.
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Eigenvalues and eigenfunction coefficients.
    Spectrum {
        /// Graph document path or `preset:NAME`.
        #[arg(long)]
        graph: String,
        #[arg(short = 'k', long = "k", default_value_t = 100)]
        k: usize,
    },
    /// Uniform and polynomial gap constants.
    Gaps {
        #[arg(long)]
        graph: String,
        #[arg(short = 'k', long = "k", default_value_t = 500)]
        k: usize,
        /// Gap window; the smallest admissible one up to 6 when absent.
        #[arg(short = 'm', long = "m")]
        m: Option<usize>,
    },
    /// Control matrix elements and their checks.
    Operator {
        #[arg(long)]
        graph: String,
        #[arg(short = 'k', long = "k", default_value_t = 40)]
        k: usize,
        /// Control preset overriding the one in the document.
        #[arg(long)]
        field: Option<String>,
    },
    /// Real control with prescribed moments at the spectral frequencies.
    Moments {
        #[arg(long)]
        graph: String,
        #[arg(short = 'k', long = "k", default_value_t = 40)]
        k: usize,
        /// Horizon; `4π/δ` when absent.
        #[arg(long)]
        horizon: Option<f64>,
    },
    /// Local steering experiment.
    Steer {
        /// Experiment config path or `preset:NAME`.
        #[arg(long)]
        config: String,
    },
    /// Dimension of the Lie algebra generated by the rotation pairs.
    LieRank {
        #[arg(long)]
        n1: usize,
        /// 1-based pairs such as `1-2,2-3`; every pair when absent and no graph is given.
        #[arg(long)]
        pairs: Option<String>,
        /// Derive the pairs from the resonances of this graph and its control.
        #[arg(long)]
        graph: Option<String>,
        #[arg(short = 'k', long = "k", default_value_t = 20)]
        k: usize,
    },
    /// Summary of the recorded runs in the output directory.
    Report,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
            eprintln!("qgraph: {e}");
            return ExitCode::from(EXIT_INTERNAL as u8);
        }
    }
    let code = commands::run(&cli);
    ExitCode::from(code as u8)
}
