use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use bloodflow_core::forecast::{
    eval_csv, evaluate_models, tasks_from_csv, ArimaOrder, LstmConfig, ModelConfig,
    DEFAULT_HORIZON, DEFAULT_TRAIN_LEN,
};
use bloodflow_core::simengine::{run_on_store, ScenarioConfig};
use bloodflow_core::stats::{compare as compare_runs, marginal_performance, RunSummary};
use bloodflow_core::store::Store;
use bloodflow_core::synthgen::{
    generate_dataset, Dataset, GenConfig, BANKS_FILE, INVENTORY_FILE, TRANSACTIONS_FILE,
    USERS_FILE,
};
use serde::{Deserialize, Serialize};

use crate::config::{self, FORECAST_SCHEMA, GENERATE_SCHEMA, SIMULATE_SCHEMA};
use crate::manifest::{hash_files, sha256_hex, Outputs};
use crate::{CompareArgs, ForecastArgs, GenerateArgs, ModelChoice, ReportArgs, SimulateArgs, UsageError};

const DATASET_FILES: [&str; 4] = [BANKS_FILE, USERS_FILE, INVENTORY_FILE, TRANSACTIONS_FILE];
const STORE_DIR: &str = "store";

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn require_dir(path: Option<PathBuf>, what: &str) -> Result<PathBuf, UsageError> {
    path.ok_or_else(|| UsageError(format!("no {what} given (flag or BLOODFLOW_DATA_DIR)")))
}

pub fn generate(args: GenerateArgs) -> Result<()> {
    let mut cfg: GenConfig = config::load(args.config.as_deref(), GENERATE_SCHEMA)?;
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.banks {
        cfg.n_banks = v;
    }
    if let Some(v) = args.users {
        cfg.n_users = v;
    }
    if let Some(v) = args.transactions {
        cfg.n_seed_transactions = v;
    }
    cfg.validate()?;
    let out = require_dir(args.out, "output directory")?;

    let dataset = generate_dataset(&cfg)?;
    let mut outputs = Outputs::create(&out)?;
    dataset.write_dir(outputs.dir())?;
    for name in DATASET_FILES {
        outputs.record_existing(name)?;
    }
    outputs.write("generate_config.json", &json_bytes(&cfg)?)?;
    let hash = hash_files(&out, &DATASET_FILES)?;
    outputs.finish(args.config.as_deref(), Some(cfg.seed), Some(hash.clone()))?;
    println!(
        "{}",
        serde_json::json!({
            "banks": dataset.banks.len(),
            "users": dataset.users.len(),
            "inventory": dataset.inventory.len(),
            "transactions": dataset.transactions.len(),
            "dataset_hash": hash,
        })
    );
    Ok(())
}

pub fn simulate(args: SimulateArgs) -> Result<()> {
    let mut cfg: ScenarioConfig = config::load(args.config.as_deref(), SIMULATE_SCHEMA)?;
    if let Some(v) = args.policy {
        cfg.policy = v;
    }
    if let Some(v) = args.days {
        cfg.n_days = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    cfg.validate()?;
    let dataset_dir = require_dir(args.dataset, "dataset directory")?;
    if !dataset_dir.is_dir() {
        return Err(UsageError(format!("dataset directory {} not found", dataset_dir.display())).into());
    }
    let dataset = Dataset::read_dir(&dataset_dir)
        .with_context(|| format!("loading dataset from {}", dataset_dir.display()))?;
    let hash = hash_files(&dataset_dir, &DATASET_FILES)?;

    let mut outputs = Outputs::create(&args.out)?;
    let store_dir = args.out.join(STORE_DIR);
    if store_dir.exists() {
        if !args.force {
            return Err(UsageError(format!(
                "{} already exists (pass --force to replace it)",
                store_dir.display()
            ))
            .into());
        }
        fs::remove_dir_all(&store_dir)?;
    }
    let mut store = Store::from_dataset(&dataset, Some(&store_dir))?;
    let report = run_on_store(&cfg, &mut store)?;
    store.close()?;

    outputs.write("report.json", &json_bytes(&report)?)?;
    outputs.write("acceptance_series.csv", report.acceptance_csv().as_bytes())?;
    outputs.write("simulate_config.json", &json_bytes(&cfg)?)?;
    let mut store_files: Vec<String> = fs::read_dir(&store_dir)?
        .map(|e| Ok(e?.file_name().to_string_lossy().into_owned()))
        .collect::<Result<_>>()?;
    store_files.sort();
    for name in store_files {
        outputs.record_existing(&format!("{STORE_DIR}/{name}"))?;
    }
    outputs.finish(args.config.as_deref(), Some(cfg.seed), Some(hash))?;
    println!("{}", serde_json::to_string(&report.summary())?);
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ForecastSettings {
    pub model: ModelChoice,
    pub arima_order: ArimaOrder,
    pub lstm: LstmConfig,
    pub train_len: usize,
    pub horizon: usize,
}

impl Default for ForecastSettings {
    fn default() -> Self {
        ForecastSettings {
            model: ModelChoice::Linear,
            arima_order: ArimaOrder::default(),
            lstm: LstmConfig::default(),
            train_len: DEFAULT_TRAIN_LEN,
            horizon: DEFAULT_HORIZON,
        }
    }
}

impl ForecastSettings {
    fn models(&self) -> Vec<ModelConfig> {
        let linear = ModelConfig::Linear;
        let arima = ModelConfig::Arima { order: self.arima_order };
        let lstm = ModelConfig::Lstm(self.lstm.clone());
        match self.model {
            ModelChoice::Linear => vec![linear],
            ModelChoice::Arima => vec![arima],
            ModelChoice::Lstm => vec![lstm],
            ModelChoice::All => vec![linear, arima, lstm],
        }
    }
}

pub fn forecast(args: ForecastArgs) -> Result<()> {
    let mut s: ForecastSettings = config::load(args.config.as_deref(), FORECAST_SCHEMA)?;
    if let Some(v) = args.model {
        s.model = v;
    }
    if let Some(v) = &args.arima_order {
        s.arima_order = v.parse()?;
    }
    if let Some(v) = args.epochs {
        s.lstm.epochs = v;
    }
    if let Some(v) = args.hidden {
        s.lstm.hidden = v;
    }
    if let Some(v) = args.lookback {
        s.lstm.lookback = v;
    }
    if let Some(v) = args.learn_rate {
        s.lstm.learn_rate = v;
    }
    if let Some(v) = args.seed {
        s.lstm.init_seed = v;
    }

    let text = fs::read_to_string(&args.series)
        .with_context(|| format!("reading {}", args.series.display()))?;
    let mut tasks = tasks_from_csv(&text)?;
    if tasks.is_empty() {
        return Err(UsageError(format!("{} holds no series rows", args.series.display())).into());
    }
    for t in &mut tasks {
        t.train_len = s.train_len;
        t.horizon = s.horizon;
        t.validate()?;
    }

    let results = evaluate_models(&tasks, &s.models())?;
    let mut outputs = Outputs::create(&args.out)?;
    for r in &results {
        outputs.write(&format!("forecast_{}.csv", r.model), eval_csv(r).as_bytes())?;
        let fallbacks = r.per_bank.iter().filter(|b| b.fallback).count();
        println!(
            "{}",
            serde_json::json!({
                "model": r.model,
                "mean_percent_difference": r.mean_percent_difference,
                "banks": r.per_bank.len(),
                "excluded": r.excluded_banks.len(),
                "fallbacks": fallbacks,
            })
        );
    }
    outputs.write("forecast_eval.json", &json_bytes(&results)?)?;
    outputs.write("forecast_config.json", &json_bytes(&s)?)?;
    let seed = matches!(s.model, ModelChoice::Lstm | ModelChoice::All).then_some(s.lstm.init_seed);
    outputs.finish(args.config.as_deref(), seed, Some(sha256_hex(text.as_bytes())))?;
    Ok(())
}

fn load_summary(path: &Path) -> Result<(RunSummary, Vec<u8>)> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let summary = serde_json::from_slice(&bytes)
        .map_err(|e| UsageError(format!("{}: not a run report: {e}", path.display())))?;
    Ok((summary, bytes))
}

fn inputs_hash(inputs: &[Vec<u8>]) -> String {
    let mut all = Vec::new();
    for bytes in inputs {
        all.extend_from_slice(&(bytes.len() as u64).to_le_bytes());
        all.extend_from_slice(bytes);
    }
    sha256_hex(&all)
}

pub fn compare(args: CompareArgs) -> Result<()> {
    let (base, base_bytes) = load_summary(&args.baseline)?;
    let (treat, treat_bytes) = load_summary(&args.treatment)?;
    let cmp = compare_runs(&base, &treat)?;
    let table = cmp.to_table();
    print!("{table}");
    if let Some(out) = &args.out {
        let mut outputs = Outputs::create(out)?;
        outputs.write("comparison.json", &json_bytes(&cmp)?)?;
        outputs.write("comparison.txt", table.as_bytes())?;
        outputs.finish(None, None, Some(inputs_hash(&[base_bytes, treat_bytes])))?;
    }
    Ok(())
}

fn report_table(runs: &[RunSummary]) -> Result<String> {
    let mut out = format!("{:<26}", "Metric");
    for r in runs {
        out.push_str(&format!("{:>28}", r.policy));
    }
    out.push('\n');
    let mut row = |label: &str, cell: &dyn Fn(&RunSummary) -> String| {
        out.push_str(&format!("{label:<26}"));
        for r in runs {
            out.push_str(&format!("{:>28}", cell(r)));
        }
        out.push('\n');
    };
    row("Total Accepted Requests", &|r| r.accepted.to_string());
    row("Total Denied Requests", &|r| r.denied.to_string());
    row("Overall Acceptance Ratio", &|r| format!("{:.4}", r.acceptance_ratio));
    row("Total Units Traveled", &|r| format!("{:.0}", r.total_distance));
    row("Expired Units", &|r| r.expired_units.to_string());
    let base = &runs[0];
    let mps = runs
        .iter()
        .map(|r| marginal_performance(r.acceptance_ratio, base.acceptance_ratio))
        .collect::<Result<Vec<_>, _>>()?;
    out.push_str(&format!("{:<26}", "dMP vs first run"));
    for mp in mps {
        out.push_str(&format!("{:>27.2}%", mp * 100.0));
    }
    out.push('\n');
    Ok(out)
}

pub fn report(args: ReportArgs) -> Result<()> {
    let mut runs = Vec::new();
    let mut inputs = Vec::new();
    for path in &args.reports {
        let (summary, bytes) = load_summary(path)?;
        runs.push(summary);
        inputs.push(bytes);
    }
    let table = report_table(&runs)?;
    print!("{table}");
    if let Some(out) = &args.out {
        let mut outputs = Outputs::create(out)?;
        outputs.write("report_table.txt", table.as_bytes())?;
        outputs.finish(None, None, Some(inputs_hash(&inputs)))?;
    }
    Ok(())
}
