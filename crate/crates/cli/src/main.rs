//! `bloodflow`: generate datasets, run allocation scenarios, forecast
//! acceptance ratios and compare runs.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 1 runtime failure.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use bloodflow_core::simengine::Policy;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

/// A bad flag, config file or input shape. Exits with code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser)]
#[command(name = "bloodflow", version, about = "Blood-bank network simulator and analysis toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset (banks, users, inventory, transactions).
    Generate(GenerateArgs),
    /// Run one allocation scenario over a dataset.
    Simulate(SimulateArgs),
    /// Predict each bank's acceptance ratio from a simulated series.
    Forecast(ForecastArgs),
    /// Marginal performance, distance reduction and z-test of two runs.
    Compare(CompareArgs),
    /// Side-by-side table of several runs.
    Report(ReportArgs),
}

#[derive(Args)]
pub struct GenerateArgs {
    /// JSON config with schema "bloodflow.generate.v1".
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, env = "BLOODFLOW_DATA_DIR")]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub banks: Option<u32>,
    #[arg(long)]
    pub users: Option<u32>,
    /// Number of seed donation transactions.
    #[arg(long)]
    pub transactions: Option<u32>,
}

fn parse_policy(s: &str) -> Result<Policy, String> {
    s.parse::<Policy>().map_err(|e| e.to_string())
}

#[derive(Args)]
pub struct SimulateArgs {
    /// Dataset directory written by `generate`.
    #[arg(long, env = "BLOODFLOW_DATA_DIR")]
    pub dataset: Option<PathBuf>,
    /// JSON config with schema "bloodflow.simulate.v1".
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// random, heuristic_proximity_expiry or heuristic_rarity.
    #[arg(long, value_parser = parse_policy)]
    pub policy: Option<Policy>,
    #[arg(long)]
    pub days: Option<u32>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    /// Replace a store left in the output directory by an earlier run.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelChoice {
    #[default]
    Linear,
    Arima,
    Lstm,
    All,
}

#[derive(Args)]
pub struct ForecastArgs {
    /// acceptance_series.csv from `simulate`.
    pub series: PathBuf,
    /// JSON config with schema "bloodflow.forecast.v1".
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub model: Option<ModelChoice>,
    /// ARIMA order as p,d,q.
    #[arg(long)]
    pub arima_order: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub lookback: Option<usize>,
    #[arg(long)]
    pub learn_rate: Option<f64>,
    /// LSTM weight initialization seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct CompareArgs {
    /// Baseline report.json (or a summary with the same fields).
    pub baseline: PathBuf,
    pub treatment: PathBuf,
    /// Write comparison.json and a manifest here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct ReportArgs {
    #[arg(required = true)]
    pub reports: Vec<PathBuf>,
    /// Write the table and a manifest here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn is_usage(err: &anyhow::Error) -> bool {
    err.chain().any(|e| {
        e.downcast_ref::<UsageError>().is_some()
            || matches!(
                e.downcast_ref::<bloodflow_core::Error>(),
                Some(bloodflow_core::Error::Validation(_) | bloodflow_core::Error::Parse(_))
            )
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let result = match cli.command {
        Command::Generate(a) => commands::generate(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Forecast(a) => commands::forecast(a),
        Command::Compare(a) => commands::compare(a),
        Command::Report(a) => commands::report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(if is_usage(&err) { 2 } else { 1 })
        }
    }
}
