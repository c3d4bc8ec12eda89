//! `ppg`: simulate plot imagery, train the GAN, generate, evaluate and run the
//! downstream classifier experiments.

mod commands;
mod config;
mod error;
mod meta;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ppgan::raster::Health;

use crate::error::CliError;

#[derive(Parser, Debug)]
#[command(name = "ppg", version, about = "Physics-informed GAN pipeline for multispectral plot imagery")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every subcommand; flags override the config file.
#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// JSON run config (the full run config, or just this subcommand's section)
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Seed for every random stream of the run
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; must be empty or absent
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Training epochs
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Train the baseline without the spectral discriminator and regularizer
    #[arg(long)]
    pub ablation: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a labelled multi-date plot dataset
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Fit the red-edge/NIR coefficients on the training split
    FitCoeff {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "DIR")]
        dataset: PathBuf,
    },
    /// Train the GAN on the training split
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "DIR")]
        dataset: PathBuf,
        /// coeffs.json from fit-coeff; uncorrelated latents when omitted
        #[arg(long, value_name = "FILE")]
        coeffs: Option<PathBuf>,
        /// Train on one class only
        #[arg(long)]
        class: Option<Health>,
    },
    /// Sample synthetic images from a trained bundle
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "DIR")]
        bundle: PathBuf,
        #[arg(long)]
        count: Option<usize>,
        /// Label for the samples; defaults to the bundle's training class
        #[arg(long)]
        class: Option<Health>,
    },
    /// Score synthetic images against the real test split
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "DIR")]
        real: PathBuf,
        #[arg(long, value_name = "DIR")]
        synthetic: PathBuf,
        /// Compare against the whole real dataset instead of its test split
        #[arg(long)]
        no_split: bool,
        /// Name of this run in the metrics chart
        #[arg(long, default_value = "synthetic")]
        label: String,
    },
    /// Extract vegetation indices, or list the available ones
    Indices {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "DIR", required_unless_present = "list")]
        dataset: Option<PathBuf>,
        /// JSON array of {name, formula, description} replacing the built-ins
        #[arg(long, value_name = "FILE")]
        registry: Option<PathBuf>,
        /// Print the index registry and exit
        #[arg(long)]
        list: bool,
    },
    /// Compare real-only against synthetic-augmented classifier training
    Predict {
        #[command(flatten)]
        common: Common,
        /// features.csv of the real dataset
        #[arg(long, value_name = "FILE")]
        features: PathBuf,
        /// features.csv of synthetic samples; repeatable, one per generated set
        #[arg(long, value_name = "FILE", required = true)]
        synthetic_features: Vec<PathBuf>,
    },
    /// Unhealthy-class F1 per observation date
    Timeseries {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "FILE")]
        features: PathBuf,
        /// features.csv of synthetic samples; repeatable
        #[arg(long, value_name = "FILE")]
        synthetic_features: Vec<PathBuf>,
    },
    /// Collect eval, predict and timeseries outputs into a summary and charts
    Report {
        #[command(flatten)]
        common: Common,
        /// LABEL=DIR of an eval output; repeatable
        #[arg(long = "eval", value_name = "LABEL=DIR")]
        evals: Vec<String>,
        #[arg(long, value_name = "DIR")]
        predict: Option<PathBuf>,
        #[arg(long, value_name = "DIR")]
        timeseries: Option<PathBuf>,
    },
}

fn init_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("PPG_THREADS") else { return Ok(()) };
    let n: usize = value
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::validation("environment", format!("PPG_THREADS=`{value}` is not a positive integer")))?;
    ppgan::par::init_threads(n);
    Ok(())
}

fn run(command: Command) -> Result<(), CliError> {
    init_threads()?;
    use commands as c;
    match command {
        Command::Simulate { common } => c::simulate(&common),
        Command::FitCoeff { common, dataset } => c::fit_coeff(&common, &dataset),
        Command::Train { common, dataset, coeffs, class } => c::train(&common, &dataset, coeffs.as_deref(), class),
        Command::Generate { common, bundle, count, class } => c::generate(&common, &bundle, count, class),
        Command::Eval { common, real, synthetic, no_split, label } => {
            c::eval(&common, &real, &synthetic, !no_split, &label)
        }
        Command::Indices { common, dataset, registry, list } => {
            c::indices(&common, dataset.as_deref(), registry.as_deref(), list)
        }
        Command::Predict { common, features, synthetic_features } => {
            c::predict(&common, &features, &synthetic_features)
        }
        Command::Timeseries { common, features, synthetic_features } => {
            c::timeseries(&common, &features, &synthetic_features)
        }
        Command::Report { common, evals, predict, timeseries } => {
            c::report(&common, &evals, predict.as_deref(), timeseries.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
