//! Command line front end: optimal observation-time designs and simultaneous
//! confidence bands for comparing two regression curves with correlated
//! errors.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical error.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use error::CliError;
use output::Format;

#[derive(Parser)]
#[command(name = "bandopt", version, about = "Optimal designs and confidence bands for comparing two regression curves with correlated errors")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Output directory for generated files.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Override the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (0 = automatic). Results do not depend on this.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    /// Format for tabular output files.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize the observation times for a scenario config.
    Optimize {
        /// Scenario configuration (JSON).
        #[arg(long)]
        config: PathBuf,
    },
    /// Evaluate the design criterion for a user-supplied design.
    Evaluate {
        /// Scenario configuration (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated design points, endpoints included (e.g. "1,4,7,10").
        #[arg(long)]
        design: String,
    },
    /// Recompute the bundled nine-scenario reference table.
    ReproduceTables {
        /// Directory holding the nine scenario configs
        /// ({ab,ac,bc}_rho{02,05,07}.json).
        #[arg(long, value_name = "DIR")]
        config_dir: PathBuf,
    },
    /// Simulate averaged confidence bands under the optimized and the
    /// uniform design.
    Bands {
        /// Scenario configuration (JSON).
        #[arg(long)]
        config: PathBuf,
    },
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| CliError::config(format!("--threads: {e}")))?;
    }
    match &cli.command {
        Command::Optimize { config } => {
            commands::run_optimize(config, &cli.out, cli.seed, cli.format)
        }
        Command::Evaluate { config, design } => {
            commands::run_evaluate(config, design, &cli.out, cli.seed, cli.format)
        }
        Command::ReproduceTables { config_dir } => {
            commands::run_reproduce_tables(config_dir, &cli.out, cli.seed, cli.format)
        }
        Command::Bands { config } => commands::run_bands(config, &cli.out, cli.seed, cli.format),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{err}");
            ExitCode::from(err.exit_code())
        }
    }
}
