//! `tirefit`: preprocess telemetry, fit Magic Formula coefficients, run the
//! excitation study and the Sobol sensitivity analysis.

mod commands;
mod error;
mod files;

use std::io::Write;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::LevelFilter;
use tirefit::exec::Execution;

use crate::commands::{FitArgs, PreprocessArgs, SobolArgs, StudyArgs};
use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "tirefit", version, about = "Tire parameter and uncertainty estimation")]
struct Cli {
    /// Only log errors.
    #[arg(long, global = true)]
    quiet: bool,
    /// Emit log records as JSON lines on stderr.
    #[arg(long, global = true)]
    json_logs: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Telemetry CSV to per-axle fitting datasets.
    Preprocess(PreprocessArgs),
    /// Fit one dataset with SVI or Nelder-Mead.
    Fit(FitArgs),
    /// Synthetic excitation study over increasing slip levels.
    Study(StudyArgs),
    /// Total Sobol indices of the tire curve over a slip grid.
    Sobol(SobolArgs),
}

fn init_logging(quiet: bool, json: bool) {
    let mut builder = env_logger::Builder::new();
    builder.filter_level(if quiet { LevelFilter::Error } else { LevelFilter::Info });
    builder.parse_env("TIREFIT_LOG");
    if json {
        builder.format(|buf, record| {
            let line = serde_json::json!({
                "level": record.level().as_str(),
                "target": record.target(),
                "message": record.args().to_string(),
            });
            writeln!(buf, "{line}")
        });
    }
    let _ = builder.try_init();
}

/// Honor `TIREFIT_THREADS`; a value of 1 also selects the sequential code path.
fn execution() -> CliResult<Execution> {
    let threads = match std::env::var("TIREFIT_THREADS") {
        Ok(v) => Some(
            v.trim()
                .parse::<usize>()
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| CliError::Usage(format!("TIREFIT_THREADS must be a positive integer, got `{v}`")))?,
        ),
        Err(_) => None,
    };
    #[cfg(feature = "parallel")]
    if let Some(n) = threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("cannot size thread pool: {e}");
        }
    }
    Ok(match threads {
        Some(1) => Execution::Sequential,
        _ => Execution::default(),
    })
}

fn run(cli: &Cli) -> CliResult<()> {
    let exec = execution()?;
    match &cli.command {
        Command::Preprocess(a) => commands::preprocess(&a.resolve()?, exec),
        Command::Fit(a) => commands::fit(&a.resolve()?),
        Command::Study(a) => commands::study(&a.resolve()?, exec),
        Command::Sobol(a) => commands::sobol(&a.resolve()?, exec),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.quiet, cli.json_logs);
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
