use std::path::PathBuf;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "epiecon",
    version,
    about = "Coupled epidemic and labour-market simulation lab",
    arg_required_else_help = true
)]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Input directory: raw sources for `ingest`, `panel.csv` and
    /// `demographics.json` for every other subcommand.
    #[arg(long, global = true, default_value = "data")]
    pub data_dir: PathBuf,
    /// Directory for reports, checkpoints and tables.
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every random stream.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// First date of the command's date range (YYYY-MM-DD).
    #[arg(long, global = true)]
    pub start: Option<NaiveDate>,
    /// Last date of the command's date range (YYYY-MM-DD).
    #[arg(long, global = true)]
    pub end: Option<NaiveDate>,
    /// Simulation horizon in days.
    #[arg(long, global = true)]
    pub horizon: Option<usize>,
    /// Trained bundle checkpoint; defaults to `<out-dir>/bundle.json`.
    #[arg(long, global = true)]
    pub bundle: Option<PathBuf>,
    /// Listen address for `serve`.
    #[arg(long, global = true)]
    pub bind: Option<String>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Build the daily panel from raw source files.
    Ingest,
    /// Write a synthetic panel and the bundle that generated it.
    Synth {
        /// Panel length in days.
        #[arg(long, default_value_t = 140)]
        days: usize,
    },
    /// Fit the SEIR parameters to the panel's cumulative counts.
    Calibrate,
    /// Jointly train the three forecasters and save a bundle checkpoint.
    Train,
    /// Rolling out-of-sample evaluation.
    Forecast,
    /// Sweep all reopening combinations; write the frontier and marginal effects.
    Policy,
    /// Protest counterfactual and its employment equivalent.
    Blm,
    /// Serve the scenario API over HTTP.
    Serve,
}
