mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::CliError;

/// Kernel-bridge synthetic time-series pipeline.
#[derive(Parser)]
#[command(name = "sbts", version, about)]
struct Cli {
    /// Worker threads; defaults to available parallelism. Results do not
    /// depend on this value.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a reference panel from a named process.
    Simulate { config: PathBuf },
    /// Scale a panel (log-return rescale, standardize, or min-max).
    Scale { config: PathBuf },
    /// Grid-search bandwidth and Markov order on held-out terminals.
    Select { config: PathBuf },
    /// Generate synthetic paths from a reference panel.
    Generate { config: PathBuf },
    /// Score a generated panel against a real one.
    Evaluate { config: PathBuf },
    /// Real-vs-synthetic parameter-recovery comparison.
    Robustness { config: PathBuf },
}

fn run(cli: &Cli) -> Result<serde_json::Value, CliError> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Validation(format!("cannot size thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Simulate { config } => commands::cmd_simulate(config),
        Command::Scale { config } => commands::cmd_scale(config),
        Command::Select { config } => commands::cmd_select(config),
        Command::Generate { config } => commands::cmd_generate(config),
        Command::Evaluate { config } => commands::cmd_evaluate(config),
        Command::Robustness { config } => commands::cmd_robustness(config),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
