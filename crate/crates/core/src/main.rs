use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use modgp::cli::{exit_code_for, run, Command, RunOptions};

/// Modulated stationary Gaussian processes: warping validation, spectral
/// transport checks and zero-count experiments.
#[derive(Parser)]
#[command(name = "modgp", version)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Check that the configured warping is strictly increasing
    Validate(Common),
    /// Eigenvalue invariance, eigenfunction transport and conjugation checks
    Eigen(Common),
    /// Expected zero count: closed forms against Monte Carlo
    Zeros(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON)
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config's output_dir
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write directly into the output directory instead of a new run folder
    #[arg(long)]
    overwrite: bool,
    /// Monte Carlo / test-function seed; overrides the config
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let (command, common) = match cli.command {
        Sub::Validate(c) => (Command::Validate, c),
        Sub::Eigen(c) => (Command::Eigen, c),
        Sub::Zeros(c) => (Command::Zeros, c),
    };
    let opts = RunOptions {
        config: common.config,
        out: common.out,
        overwrite: common.overwrite,
        seed: common.seed,
    };
    match run(command, &opts) {
        Ok(outcome) => {
            for line in &outcome.summary {
                println!("{line}");
            }
            println!("reports written to {}", outcome.output_dir.display());
            ExitCode::from(outcome.exit_code as u8)
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err) as u8)
        }
    }
}
