use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use uncertain_vol_cli::{report, run_text, Command, Format, RunOptions, EXIT_CONFIG};

#[derive(Parser)]
#[command(name = "uvol", version, about = "Option quotes and hedging P&L under uncertain volatility")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(clap::Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Directory for artifacts.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Overrides `simulation.seed`.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Worker threads for the simulation commands; results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Sub {
    /// Bid, mid and ask for a list of calls.
    Quote(Common),
    /// Implied volatility surface of the quotes and its curvature.
    Smile(Common),
    /// Λ₁, Λ₂ and Ψ of the hedging P&L law.
    EstimateLaw(Common),
    /// Outer/inner Monte Carlo check of the P&L expansion.
    Validate(Common),
    /// Delta-hedging P&L statistics.
    Simulate(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, common) = match cli.command {
        Sub::Quote(c) => (Command::Quote, c),
        Sub::Smile(c) => (Command::Smile, c),
        Sub::EstimateLaw(c) => (Command::EstimateLaw, c),
        Sub::Validate(c) => (Command::Validate, c),
        Sub::Simulate(c) => (Command::Simulate, c),
    };
    let text = match std::fs::read_to_string(&common.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("cannot read {}: {e}", common.config.display());
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    };
    let opts = RunOptions {
        out_dir: common.out,
        seed: common.seed,
        format: common.format,
        workers: common.workers,
    };
    match run_text(command, &text, &opts) {
        Ok(outcome) => {
            let _ = report(std::io::stdout().lock(), &outcome);
            ExitCode::from(outcome.status as u8)
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
