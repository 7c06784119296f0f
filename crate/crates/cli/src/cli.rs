//! Command-line surface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::commands::{self, Context, Overrides, TableFormat};
use crate::config::parse_list;
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "gridsentry",
    version,
    about = "Fault and cyber-attack classification on streamed substation waveforms"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Run configuration (`key = value` and event lines).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overwrite existing outputs.
    #[arg(long)]
    pub force: bool,
    /// Format of tabular reports.
    #[arg(long, value_enum, default_value = "csv")]
    pub format: FormatArg,
}

#[derive(Debug, Args, Default)]
pub struct Selection {
    /// Comma-separated model names.
    #[arg(long)]
    pub models: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize the training and streaming records.
    Generate {
        #[command(flatten)]
        common: Common,
        /// Training record duration in seconds.
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Fit models and write the offline report.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        selection: Selection,
        /// Comma-separated models to grid-search.
        #[arg(long)]
        tune: Option<String>,
    },
    /// Stream the held-out record through fitted models.
    Stream {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        selection: Selection,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long = "n-cyc")]
        n_cyc: Option<usize>,
    },
    /// Compare offline and streaming results.
    Report {
        #[command(flatten)]
        common: Common,
    },
    /// generate, train, stream and report.
    Run {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        selection: Selection,
        #[arg(long)]
        tune: Option<String>,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long = "n-cyc")]
        n_cyc: Option<usize>,
        #[arg(long)]
        duration: Option<f64>,
    },
}

fn context(common: &Common, overrides: Overrides) -> Result<Context, CliError> {
    let format = match common.format {
        FormatArg::Csv => TableFormat::Csv,
        FormatArg::Json => TableFormat::Json,
    };
    let overrides = Overrides {
        seed: common.seed,
        ..overrides
    };
    Context::load(
        common.config.as_deref(),
        &common.out,
        &overrides,
        common.force,
        format,
    )
}

impl Cli {
    pub fn execute(&self) -> Result<(), CliError> {
        let list = |s: &Option<String>| s.as_deref().map(parse_list);
        match &self.command {
            Command::Generate { common, duration } => commands::generate(&context(
                common,
                Overrides {
                    duration: *duration,
                    ..Overrides::default()
                },
            )?),
            Command::Train {
                common,
                selection,
                tune,
            } => commands::train(&context(
                common,
                Overrides {
                    models: list(&selection.models),
                    tune: list(tune),
                    ..Overrides::default()
                },
            )?),
            Command::Stream {
                common,
                selection,
                tau,
                n_cyc,
            } => commands::stream(&context(
                common,
                Overrides {
                    models: list(&selection.models),
                    tau: *tau,
                    n_cyc: *n_cyc,
                    ..Overrides::default()
                },
            )?),
            Command::Report { common } => commands::report(&context(common, Overrides::default())?),
            Command::Run {
                common,
                selection,
                tune,
                tau,
                n_cyc,
                duration,
            } => commands::run_all(&context(
                common,
                Overrides {
                    models: list(&selection.models),
                    tune: list(tune),
                    tau: *tau,
                    n_cyc: *n_cyc,
                    duration: *duration,
                    ..Overrides::default()
                },
            )?),
        }
    }
}

/// Applies `GRIDSENTRY_THREADS` to the global worker pool.
pub fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("GRIDSENTRY_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| {
            CliError::Validation(format!(
                "GRIDSENTRY_THREADS must be a positive integer, got `{value}`"
            ))
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Validation(format!("thread pool: {e}")))
}
