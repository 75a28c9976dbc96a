//! `nlc2` command-line driver.
//!
//! Exit codes: 0 success, 1 file or I/O problem, 2 configuration error,
//! 3 numerical failure, 4 inconclusive concentration segment.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nlc2_core::Error;

#[derive(Parser, Debug)]
#[command(
    name = "nlc2",
    version,
    about = "Non-isothermal nematic liquid crystal flow on the 2D torus"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a configuration from its initial data.
    Run {
        config: PathBuf,
        /// Diagnostics CSV path, overriding `[output]`.
        #[arg(long)]
        diagnostics: Option<PathBuf>,
        /// Restart after each concentration flag and report the energy
        /// bookkeeping of every event (constrained mode only).
        #[arg(long)]
        continuation: bool,
    },
    /// Continue a run from a checkpoint written under the same configuration.
    Resume {
        checkpoint: PathBuf,
        config: PathBuf,
        #[arg(long)]
        diagnostics: Option<PathBuf>,
    },
    /// Summarize a checkpoint or a diagnostics CSV.
    Diagnose {
        file: PathBuf,
        /// Configuration supplying viscosity and thresholds for a checkpoint.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run a convergence study over one approximation parameter.
    Study {
        config: PathBuf,
        /// Where to write the per-level table.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Build the initial data of a configuration and report its checks.
    IcPreview {
        config: PathBuf,
        /// Also write the initial state as a checkpoint.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Print every configuration key with its default.
    ConfigReference,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InconclusiveSegment { .. } => 4,
        e if e.is_numerical() => 3,
        Error::Io { .. } | Error::Format { .. } => 1,
        _ => 2,
    }
}

fn init_threads() -> Result<(), Error> {
    let Ok(raw) = std::env::var("NLC2_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Error::Config(format!("NLC2_THREADS must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("cannot start {n} worker threads: {e}")))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = init_threads().and_then(|()| match cli.command {
        Command::Run {
            config,
            diagnostics,
            continuation,
        } => commands::run(&config, diagnostics.as_deref(), continuation),
        Command::Resume {
            checkpoint,
            config,
            diagnostics,
        } => commands::resume(&checkpoint, &config, diagnostics.as_deref()),
        Command::Diagnose { file, config } => commands::diagnose(&file, config.as_deref()),
        Command::Study { config, csv } => commands::study(&config, csv.as_deref()),
        Command::IcPreview { config, checkpoint } => commands::ic_preview(&config, checkpoint.as_deref()),
        Command::ConfigReference => {
            print!("{}", nlc2_core::config::reference_text());
            Ok(())
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("nlc2: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
