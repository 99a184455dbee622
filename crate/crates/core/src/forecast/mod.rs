//! Per-bank acceptance-ratio forecasting: fit on the first 170 days and
//! predict day 180.

pub mod arima;
pub mod linear;
pub mod lstm;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use arima::{fit_predict_arima, ArimaOrder};
pub use linear::fit_predict_linear;
pub use lstm::{fit_predict_lstm, LstmConfig};

pub const DEFAULT_TRAIN_LEN: usize = 170;
pub const DEFAULT_HORIZON: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastTask {
    pub bank_id: u32,
    pub series: Vec<f64>,
    pub train_len: usize,
    pub horizon: usize,
}

impl ForecastTask {
    pub fn new(bank_id: u32, series: Vec<f64>) -> Self {
        ForecastTask {
            bank_id,
            series,
            train_len: DEFAULT_TRAIN_LEN,
            horizon: DEFAULT_HORIZON,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.train_len < 2 || self.horizon < 1 {
            return Err(Error::Validation("need train_len >= 2 and horizon >= 1".into()));
        }
        let needed = self.train_len + self.horizon;
        if self.series.len() < needed {
            return Err(Error::Validation(format!(
                "bank {}: series has {} days, need at least {needed}",
                self.bank_id,
                self.series.len()
            )));
        }
        if let Some(v) = self.series.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Validation(format!(
                "bank {}: value {v} outside [0,1]",
                self.bank_id
            )));
        }
        Ok(())
    }

    pub fn train(&self) -> &[f64] {
        &self.series[..self.train_len]
    }

    /// 1-based day being predicted.
    pub fn target_day(&self) -> usize {
        self.train_len + self.horizon
    }

    pub fn actual(&self) -> f64 {
        self.series[self.target_day() - 1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelConfig {
    Linear,
    Arima { order: ArimaOrder },
    Lstm(LstmConfig),
}

impl ModelConfig {
    pub fn name(&self) -> &'static str {
        match self {
            ModelConfig::Linear => "linear",
            ModelConfig::Arima { .. } => "arima",
            ModelConfig::Lstm(_) => "lstm",
        }
    }
}

/// `|predicted - actual| / actual * 100`.
pub fn percent_difference(predicted: f64, actual: f64) -> Result<f64> {
    if actual <= 0.0 {
        return Err(Error::Undefined("percent difference with zero actual".into()));
    }
    Ok((predicted - actual).abs() / actual * 100.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankForecast {
    pub bank_id: u32,
    pub predicted: f64,
    pub actual: f64,
    pub percent_difference: f64,
    /// ARIMA only: the fit failed and the linear prediction was used.
    #[serde(skip_serializing_if = "std::ops::Not::not", default)]
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub model: String,
    pub config: ModelConfig,
    pub per_bank: Vec<BankForecast>,
    pub mean_percent_difference: f64,
    /// Banks left out because their actual value is zero.
    pub excluded_banks: Vec<u32>,
}

fn predict(task: &ForecastTask, cfg: &ModelConfig) -> Result<(f64, bool)> {
    match cfg {
        ModelConfig::Linear => Ok((fit_predict_linear(task)?, false)),
        ModelConfig::Arima { order } => {
            let f = fit_predict_arima(task, *order)?;
            Ok((f.predicted, f.fallback))
        }
        ModelConfig::Lstm(c) => Ok((fit_predict_lstm(task, c)?, false)),
    }
}

/// Runs one model over every task, banks fitted in parallel threads,
/// results ordered by bank id.
pub fn evaluate_model(tasks: &[ForecastTask], cfg: &ModelConfig) -> Result<EvalResult> {
    if tasks.is_empty() {
        return Err(Error::Validation("no forecast tasks".into()));
    }
    let mut sorted: Vec<&ForecastTask> = tasks.iter().collect();
    sorted.sort_by_key(|t| t.bank_id);
    let results: Vec<Result<(f64, bool)>> = std::thread::scope(|scope| {
        let handles: Vec<_> = sorted
            .iter()
            .map(|t| scope.spawn(move || predict(t, cfg)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("forecast thread panicked"))
            .collect()
    });

    let mut per_bank = Vec::new();
    let mut excluded_banks = Vec::new();
    for (task, result) in sorted.iter().zip(results) {
        let (predicted, fallback) = result?;
        let actual = task.actual();
        match percent_difference(predicted, actual) {
            Ok(pd) => per_bank.push(BankForecast {
                bank_id: task.bank_id,
                predicted,
                actual,
                percent_difference: pd,
                fallback,
            }),
            Err(_) => excluded_banks.push(task.bank_id),
        }
    }
    let mean_percent_difference = if per_bank.is_empty() {
        return Err(Error::Undefined("every bank has a zero actual value".into()));
    } else {
        per_bank.iter().map(|b| b.percent_difference).sum::<f64>() / per_bank.len() as f64
    };
    Ok(EvalResult {
        model: cfg.name().to_string(),
        config: cfg.clone(),
        per_bank,
        mean_percent_difference,
        excluded_banks,
    })
}

pub fn evaluate_models(tasks: &[ForecastTask], configs: &[ModelConfig]) -> Result<Vec<EvalResult>> {
    configs.iter().map(|c| evaluate_model(tasks, c)).collect()
}

/// Parses `bank_id,day,ratio` rows (header optional) into one task per
/// bank, days sorted ascending.
pub fn tasks_from_csv(text: &str) -> Result<Vec<ForecastTask>> {
    let mut by_bank: BTreeMap<u32, Vec<(u32, f64)>> = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (lineno == 0 && line.starts_with("bank_id")) {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let bad = || Error::Parse(format!("line {}: expected bank_id,day,ratio: {line:?}", lineno + 1));
        let [bank, day, ratio] = fields.as_slice() else {
            return Err(bad());
        };
        let bank: u32 = bank.parse().map_err(|_| bad())?;
        let day: u32 = day.parse().map_err(|_| bad())?;
        let ratio: f64 = ratio.parse().map_err(|_| bad())?;
        by_bank.entry(bank).or_default().push((day, ratio));
    }
    let mut tasks = Vec::with_capacity(by_bank.len());
    for (bank_id, mut rows) in by_bank {
        rows.sort_by_key(|r| r.0);
        for (expected, (day, _)) in (1u32..).zip(&rows) {
            if *day != expected {
                return Err(Error::Parse(format!(
                    "bank {bank_id}: days must run 1..n without gaps (found day {day} at position {expected})"
                )));
            }
        }
        tasks.push(ForecastTask::new(bank_id, rows.into_iter().map(|r| r.1).collect()));
    }
    Ok(tasks)
}

/// `bank_id,predicted,actual,percent_difference` rows for one model.
pub fn eval_csv(result: &EvalResult) -> String {
    let mut out = String::from("bank_id,predicted,actual,percent_difference\n");
    for b in &result.per_bank {
        out.push_str(&format!(
            "{},{},{},{}\n",
            b.bank_id, b.predicted, b.actual, b.percent_difference
        ));
    }
    out
}
