//! `infodesign` command-line interface.

mod commands;
mod config;
mod error;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::Context;
use crate::error::{CliError, CliResult};

#[derive(Parser)]
#[command(name = "infodesign", version, about = "Information-optimal input signal design")]
struct Cli {
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides `seed` in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Cap on worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory; overrides `out_dir` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize the input signal and report the bound at the optimum.
    Design,
    /// Simulate observations under a signal.
    Simulate { signal: PathBuf },
    /// MAP estimate of θ from a signal and its observations.
    Estimate { signal: PathBuf, observations: PathBuf },
    /// Paired Monte Carlo MAP error for one or more signals
    /// (files, or `builtin:zero|constant|harmonic|random`).
    Montecarlo {
        #[arg(required = true)]
        signals: Vec<String>,
    },
    /// Tabulate the information-theoretic and Bayesian Cramér-Rao floors on the scalar channel.
    DemoItbGap {
        /// Comma-separated smoothing parameters; defaults to the config's `gap.alphas`.
        #[arg(long, value_delimiter = ',')]
        alpha: Option<Vec<f64>>,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    let mut loaded = config::load(cli.config.as_deref(), cli.seed)?;
    if loaded.seed.is_none() && matches!(cli.command, Command::DemoItbGap { .. }) {
        // the gap demo draws no random numbers
        loaded.seed = Some(0);
    }
    let seed = loaded.seed.ok_or_else(|| CliError::Config("no seed: set `seed` in the config or pass --seed".into()))?;
    let out = cli.out.or_else(|| loaded.config.out_dir.clone()).unwrap_or_else(|| PathBuf::from("out"));
    let ctx = Context { loaded, seed, out };
    match cli.command {
        Command::Design => commands::design(&ctx),
        Command::Simulate { signal } => commands::simulate_cmd(&ctx, &signal),
        Command::Estimate { signal, observations } => commands::estimate(&ctx, &signal, &observations),
        Command::Montecarlo { signals } => commands::montecarlo(&ctx, &signals),
        Command::DemoItbGap { alpha } => commands::demo_itb_gap(&ctx, alpha),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("infodesign: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
