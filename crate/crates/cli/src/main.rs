//! Command-line front end wiring the forecasting library into
//! reproducible workflows: ingest, train, forecast, compare, synth.

mod commands;
mod manifest;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use std::process::ExitCode;

/// Failure routed to an exit code: 1 for usage problems, 2 for data
/// problems, 3 for numerical failures (0 is success).
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Run(occucast::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Run(e) if e.is_numerical() => 3,
            CliError::Run(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "{msg}"),
            CliError::Run(e) => write!(f, "{e}"),
        }
    }
}

impl From<occucast::Error> for CliError {
    fn from(e: occucast::Error) -> Self {
        CliError::Run(e)
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Parser)]
#[command(
    name = "occucast",
    version,
    about = "Occupancy forecasting from Wi-Fi session logs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Turn a raw session log into an occupancy time series.
    Ingest(commands::IngestArgs),
    /// Fit an ARIMA or LSTM forecaster to occupancy series.
    Train(commands::TrainArgs),
    /// Roll a fitted model forward past the end of recorded history.
    Forecast(commands::ForecastArgs),
    /// Train and score every model family over a dataset directory.
    Compare(commands::CompareArgs),
    /// Generate a synthetic session log with ground-truth series.
    Synth(commands::SynthArgs),
}

/// Cap the global worker pool when OCCU_THREADS is a positive count.
fn configure_threads() {
    if let Ok(raw) = std::env::var("OCCU_THREADS") {
        if let Ok(threads) = raw.parse::<usize>() {
            if threads >= 1 {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build_global();
            }
        }
    }
}

fn main() -> ExitCode {
    configure_threads();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Ingest(args) => commands::cmd_ingest(&args),
        Command::Train(args) => commands::cmd_train(&args),
        Command::Forecast(args) => commands::cmd_forecast(&args),
        Command::Compare(args) => commands::cmd_compare(&args),
        Command::Synth(args) => commands::cmd_synth(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_declaration_is_internally_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn exit_codes_follow_the_failure_taxonomy() {
        assert_eq!(CliError::Usage("bad flag".to_string()).exit_code(), 1);
        assert_eq!(
            CliError::Run(occucast::Error::invalid("bad data")).exit_code(),
            2
        );
        assert_eq!(
            CliError::Run(occucast::Error::Parse {
                line: 3,
                reason: "junk".to_string()
            })
            .exit_code(),
            2
        );
        assert_eq!(
            CliError::Run(occucast::Error::Numerical("overflow".to_string())).exit_code(),
            3
        );
        assert_eq!(
            CliError::Run(occucast::Error::NonConvergence {
                iterations: 500,
                best_loss: 1.0
            })
            .exit_code(),
            3
        );
        assert_eq!(
            CliError::Run(occucast::Error::ModelFormat("junk".to_string())).exit_code(),
            2
        );
    }
}
