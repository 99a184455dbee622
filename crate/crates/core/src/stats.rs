//! Evaluation metrics: acceptance ratio, marginal performance, distance
//! reduction and the pooled two-proportion z-test.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn acceptance_ratio(accepted: u64, denied: u64) -> Result<f64> {
    let total = accepted + denied;
    if total == 0 {
        return Err(Error::Undefined("acceptance ratio with zero requests".into()));
    }
    Ok(accepted as f64 / total as f64)
}

/// Fraction of the baseline's remaining headroom captured by `acceptance`:
/// `(acceptance - baseline) / (1 - baseline)`.
pub fn marginal_performance(acceptance: f64, baseline: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&acceptance) {
        return Err(Error::Validation(format!("acceptance {acceptance} outside [0,1]")));
    }
    if !(0.0..1.0).contains(&baseline) {
        return Err(Error::Undefined(format!(
            "marginal performance needs baseline in [0,1), got {baseline}"
        )));
    }
    Ok((acceptance - baseline) / (1.0 - baseline))
}

pub fn distance_reduction(base: f64, new: f64) -> Result<f64> {
    if base.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
        return Err(Error::Validation(format!("base distance must be positive, got {base}")));
    }
    Ok((base - new) / base)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZTest {
    pub z: f64,
    /// Upper-tail probability P(Z >= z).
    pub p_one_sided: f64,
}

/// Pooled two-proportion z-test of sample 2 against sample 1, without
/// continuity correction. Positive `z` means sample 2 has the higher rate.
pub fn two_proportion_z_test(acc1: u64, n1: u64, acc2: u64, n2: u64) -> Result<ZTest> {
    if n1 == 0 || n2 == 0 {
        return Err(Error::Validation("sample sizes must be positive".into()));
    }
    if acc1 > n1 || acc2 > n2 {
        return Err(Error::Validation("successes exceed sample size".into()));
    }
    let (n1f, n2f) = (n1 as f64, n2 as f64);
    let pooled = (acc1 + acc2) as f64 / (n1f + n2f);
    let variance = pooled * (1.0 - pooled) * (1.0 / n1f + 1.0 / n2f);
    if variance <= 0.0 {
        return Err(Error::Undefined("zero pooled variance".into()));
    }
    let z = (acc2 as f64 / n2f - acc1 as f64 / n1f) / variance.sqrt();
    Ok(ZTest {
        z,
        p_one_sided: 1.0 - normal_cdf(z),
    })
}

/// Headline numbers of one simulation run, enough to recompute every
/// comparison metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub policy: String,
    pub accepted: u64,
    pub denied: u64,
    pub acceptance_ratio: f64,
    pub total_distance: f64,
    pub expired_units: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub baseline: RunSummary,
    pub treatment: RunSummary,
    pub delta_mp_acceptance: f64,
    pub distance_reduction_fraction: f64,
    pub z: f64,
    pub p_one_sided: f64,
}

/// Compares `treatment` against `baseline`. Ratios are recomputed from the
/// raw counts, not taken from the summaries.
pub fn compare(baseline: &RunSummary, treatment: &RunSummary) -> Result<ComparisonReport> {
    let base_ratio = acceptance_ratio(baseline.accepted, baseline.denied)?;
    let treat_ratio = acceptance_ratio(treatment.accepted, treatment.denied)?;
    let test = two_proportion_z_test(
        baseline.accepted,
        baseline.accepted + baseline.denied,
        treatment.accepted,
        treatment.accepted + treatment.denied,
    )?;
    Ok(ComparisonReport {
        baseline: baseline.clone(),
        treatment: treatment.clone(),
        delta_mp_acceptance: marginal_performance(treat_ratio, base_ratio)?,
        distance_reduction_fraction: distance_reduction(
            baseline.total_distance,
            treatment.total_distance,
        )?,
        z: test.z,
        p_one_sided: test.p_one_sided,
    })
}

impl ComparisonReport {
    /// Plain-text table in the layout of the simulation and marginal
    /// performance summaries.
    pub fn to_table(&self) -> String {
        let b = &self.baseline;
        let t = &self.treatment;
        let mut out = String::new();
        out.push_str(&format!("{:<26}{:>16}{:>16}\n", "Metric", b.policy, t.policy));
        out.push_str(&format!("{:<26}{:>16}{:>16}\n", "Total Accepted Requests", b.accepted, t.accepted));
        out.push_str(&format!("{:<26}{:>16}{:>16}\n", "Total Denied Requests", b.denied, t.denied));
        out.push_str(&format!(
            "{:<26}{:>16.4}{:>16.4}\n",
            "Overall Acceptance Ratio", b.acceptance_ratio, t.acceptance_ratio
        ));
        out.push_str(&format!(
            "{:<26}{:>16.0}{:>16.0}\n",
            "Total Units Traveled", b.total_distance, t.total_distance
        ));
        out.push_str(&format!("{:<26}{:>16}{:>16}\n", "Expired Units", b.expired_units, t.expired_units));
        out.push('\n');
        out.push_str(&format!(
            "dMP (accept ratio)   {:>8.2}%\n",
            self.delta_mp_acceptance * 100.0
        ));
        out.push_str(&format!(
            "distance reduced     {:>8.2}%\n",
            self.distance_reduction_fraction * 100.0
        ));
        out.push_str(&format!("z = {:.4}, one-sided p = {:.6}\n", self.z, self.p_one_sided));
        out
    }
}
