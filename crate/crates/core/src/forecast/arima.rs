//! ARIMA(p,d,q) fitted by conditional sum of squares.
//!
//! The series is differenced `d` times. Pure AR models are solved exactly
//! by least squares; models with an MA part minimise the conditional sum of
//! squared innovations with Nelder–Mead, starting from the least-squares AR
//! fit. An intercept is estimated only when `d == 0`.

use serde::{Deserialize, Serialize};

use super::linear::predict_line;
use super::ForecastTask;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArimaOrder {
    pub p: usize,
    pub d: usize,
    pub q: usize,
}

impl Default for ArimaOrder {
    fn default() -> Self {
        ArimaOrder { p: 1, d: 1, q: 1 }
    }
}

impl std::fmt::Display for ArimaOrder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{},{},{}", self.p, self.d, self.q)
    }
}

impl std::str::FromStr for ArimaOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let parse = |v: &str| {
            v.parse::<usize>()
                .map_err(|_| Error::Parse(format!("bad ARIMA order {s:?}, expected p,d,q")))
        };
        match parts.as_slice() {
            [p, d, q] => Ok(ArimaOrder {
                p: parse(p)?,
                d: parse(d)?,
                q: parse(q)?,
            }),
            _ => Err(Error::Parse(format!("bad ARIMA order {s:?}, expected p,d,q"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArimaModel {
    pub order: ArimaOrder,
    pub intercept: f64,
    pub ar: Vec<f64>,
    pub ma: Vec<f64>,
    /// Conditional sum of squared innovations at the optimum.
    pub css: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArimaForecast {
    pub predicted: f64,
    pub model: Option<ArimaModel>,
    /// The fit was unusable (explosive or non-invertible) and the linear
    /// prediction was returned instead.
    pub fallback: bool,
}

pub fn difference(series: &[f64]) -> Vec<f64> {
    series.windows(2).map(|w| w[1] - w[0]).collect()
}

/// Stationarity test for `1 - a1 z - ... - ap z^p` via the step-down
/// recursion: all partial autocorrelations must lie strictly inside (-1, 1).
pub fn is_stationary(coeffs: &[f64]) -> bool {
    let mut a: Vec<f64> = coeffs.to_vec();
    while let Some(&k) = a.last() {
        if !k.is_finite() || k.abs() >= 1.0 {
            return false;
        }
        let m = a.len();
        let denom = 1.0 - k * k;
        let prev: Vec<f64> = (0..m - 1)
            .map(|j| (a[j] + k * a[m - 2 - j]) / denom)
            .collect();
        a = prev;
    }
    true
}

/// Invertibility of the MA polynomial `1 + t1 z + ... + tq z^q`.
pub fn is_invertible(ma: &[f64]) -> bool {
    let neg: Vec<f64> = ma.iter().map(|t| -t).collect();
    is_stationary(&neg)
}

fn residuals(w: &[f64], intercept: f64, ar: &[f64], ma: &[f64]) -> Vec<f64> {
    let p = ar.len();
    let mut e = vec![0.0; w.len()];
    for t in p..w.len() {
        let mut pred = intercept;
        for (i, phi) in ar.iter().enumerate() {
            pred += phi * w[t - 1 - i];
        }
        for (j, theta) in ma.iter().enumerate() {
            if t > j {
                pred += theta * e[t - 1 - j];
            }
        }
        e[t] = w[t] - pred;
    }
    e
}

fn css(w: &[f64], intercept: f64, ar: &[f64], ma: &[f64]) -> f64 {
    residuals(w, intercept, ar, ma)[ar.len()..]
        .iter()
        .map(|e| e * e)
        .sum()
}

/// Solves `A x = b` for a small dense system by Gaussian elimination with
/// partial pivoting. Returns `None` when singular.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    let scale = a
        .iter()
        .flatten()
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1e-300);
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() <= 1e-12 * scale {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            let (upper, lower) = a.split_at_mut(row);
            for (x, p) in lower[0][col..].iter_mut().zip(&upper[col][col..]) {
                *x -= f * p;
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Least-squares AR(p) fit `w_t = c + Σ φ_i w_{t-i}`; returns `(c, φ)`.
fn ols_ar(w: &[f64], p: usize, with_intercept: bool) -> Option<(f64, Vec<f64>)> {
    let k = p + with_intercept as usize;
    if k == 0 {
        return Some((0.0, Vec::new()));
    }
    let mut xtx = vec![vec![0.0; k]; k];
    let mut xty = vec![0.0; k];
    for t in p..w.len() {
        let mut row = Vec::with_capacity(k);
        if with_intercept {
            row.push(1.0);
        }
        row.extend((0..p).map(|i| w[t - 1 - i]));
        for i in 0..k {
            xty[i] += row[i] * w[t];
            for j in 0..k {
                xtx[i][j] += row[i] * row[j];
            }
        }
    }
    let beta = solve(xtx, xty)?;
    Some(if with_intercept {
        (beta[0], beta[1..].to_vec())
    } else {
        (0.0, beta)
    })
}

/// Minimises `f` from `start` with the Nelder–Mead simplex method.
fn nelder_mead<F: Fn(&[f64]) -> f64>(f: F, start: &[f64], step: f64, max_iter: usize) -> Vec<f64> {
    let n = start.len();
    let mut simplex: Vec<Vec<f64>> = vec![start.to_vec()];
    for i in 0..n {
        let mut v = start.to_vec();
        v[i] += if v[i].abs() > 1e-8 { step * v[i].abs().max(0.1) } else { step };
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| f(v)).collect();
    let centroid = |simplex: &[Vec<f64>], skip: usize| -> Vec<f64> {
        let mut c = vec![0.0; n];
        for (i, v) in simplex.iter().enumerate() {
            if i != skip {
                for k in 0..n {
                    c[k] += v[k] / n as f64;
                }
            }
        }
        c
    };
    let along = |c: &[f64], v: &[f64], t: f64| -> Vec<f64> {
        c.iter().zip(v).map(|(ci, vi)| ci + t * (vi - ci)).collect()
    };
    for _ in 0..max_iter {
        let mut idx: Vec<usize> = (0..=n).collect();
        idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = idx.iter().map(|&i| simplex[i].clone()).collect();
        values = idx.iter().map(|&i| values[i]).collect();
        let spread = values[n] - values[0];
        if spread.is_finite() && spread.abs() <= 1e-14 * (values[0].abs() + 1e-14) {
            break;
        }
        let c = centroid(&simplex, n);
        let reflected = along(&c, &simplex[n], -1.0);
        let fr = f(&reflected);
        if fr < values[0] {
            let expanded = along(&c, &simplex[n], -2.0);
            let fe = f(&expanded);
            if fe < fr {
                simplex[n] = expanded;
                values[n] = fe;
            } else {
                simplex[n] = reflected;
                values[n] = fr;
            }
        } else if fr < values[n - 1] {
            simplex[n] = reflected;
            values[n] = fr;
        } else {
            let contracted = if fr < values[n] {
                along(&c, &simplex[n], -0.5)
            } else {
                along(&c, &simplex[n], 0.5)
            };
            let fc = f(&contracted);
            if fc < values[n].min(fr) {
                simplex[n] = contracted;
                values[n] = fc;
            } else {
                for i in 1..=n {
                    simplex[i] = along(&simplex[0], &simplex[i], 0.5);
                    values[i] = f(&simplex[i]);
                }
            }
        }
    }
    let best = (0..=n)
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .expect("non-empty simplex");
    simplex[best].clone()
}

/// Fits ARIMA to a raw series. Errors when the series is too short or the
/// fit is explosive or non-invertible.
pub fn fit_arima(series: &[f64], order: ArimaOrder) -> Result<ArimaModel> {
    let ArimaOrder { p, d, q } = order;
    if series.len() <= p + d + q + 10 {
        return Err(Error::Validation(format!(
            "ARIMA({order}) needs more than {} points, got {}",
            p + d + q + 10,
            series.len()
        )));
    }
    let mut w = series.to_vec();
    for _ in 0..d {
        w = difference(&w);
    }
    let with_intercept = d == 0;
    let mean = w.iter().sum::<f64>() / w.len() as f64;
    let variance = w.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / w.len() as f64;
    if variance <= 1e-24 * (1.0 + mean * mean) {
        // Degenerate differenced series: nothing to estimate.
        return Ok(ArimaModel {
            order,
            intercept: if with_intercept { mean } else { 0.0 },
            ar: vec![0.0; p],
            ma: vec![0.0; q],
            css: 0.0,
        });
    }

    let (mut intercept, mut ar) = ols_ar(&w, p, with_intercept)
        .ok_or_else(|| Error::Numerical("singular AR design matrix".into()))?;
    let mut ma = vec![0.0; q];
    if q > 0 {
        if !is_stationary(&ar) {
            ar = vec![0.0; p];
            intercept = if with_intercept { mean } else { 0.0 };
        }
        let k0 = with_intercept as usize;
        let unpack = |x: &[f64]| -> (f64, Vec<f64>, Vec<f64>) {
            let c = if with_intercept { x[0] } else { 0.0 };
            (c, x[k0..k0 + p].to_vec(), x[k0 + p..].to_vec())
        };
        let objective = |x: &[f64]| {
            let (c, a, m) = unpack(x);
            if !is_stationary(&a) || !is_invertible(&m) {
                return f64::INFINITY;
            }
            let v = css(&w, c, &a, &m);
            if v.is_finite() {
                v
            } else {
                f64::INFINITY
            }
        };
        let mut start = Vec::with_capacity(k0 + p + q);
        if with_intercept {
            start.push(intercept);
        }
        start.extend(&ar);
        start.extend(&ma);
        let mut best = start;
        // A restart from the first optimum refreshes a collapsed simplex.
        for _ in 0..3 {
            best = nelder_mead(objective, &best, 0.1, 2000);
        }
        let (c, a, m) = unpack(&best);
        intercept = c;
        ar = a;
        ma = m;
    }
    if !is_stationary(&ar) {
        return Err(Error::Numerical(format!("explosive AR fit {ar:?}")));
    }
    if !is_invertible(&ma) {
        return Err(Error::Numerical(format!("non-invertible MA fit {ma:?}")));
    }
    let css = css(&w, intercept, &ar, &ma);
    Ok(ArimaModel {
        order,
        intercept,
        ar,
        ma,
        css,
    })
}

impl ArimaModel {
    /// Recursive forecasts for the `horizon` steps after `series`, future
    /// innovations set to zero, integrated back to the original scale.
    pub fn forecast(&self, series: &[f64], horizon: usize) -> Vec<f64> {
        let d = self.order.d;
        let mut levels = vec![series.to_vec()];
        for k in 0..d {
            let next = difference(&levels[k]);
            levels.push(next);
        }
        let w = &levels[d];
        let mut e = residuals(w, self.intercept, &self.ar, &self.ma);
        let mut ext = w.clone();
        let mut out = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            let t = ext.len();
            let mut v = self.intercept;
            for (i, phi) in self.ar.iter().enumerate() {
                if t > i {
                    v += phi * ext[t - 1 - i];
                }
            }
            for (j, theta) in self.ma.iter().enumerate() {
                if t > j {
                    v += theta * e[t - 1 - j];
                }
            }
            ext.push(v);
            e.push(0.0);
            out.push(v);
        }
        for k in (0..d).rev() {
            let mut last = *levels[k].last().expect("non-empty level");
            for v in out.iter_mut() {
                last += *v;
                *v = last;
            }
        }
        out
    }
}

/// Fits on the training days and forecasts the target day, clamped to
/// [0,1]. A failed fit falls back to the linear prediction and is flagged.
pub fn fit_predict_arima(task: &ForecastTask, order: ArimaOrder) -> Result<ArimaForecast> {
    task.validate()?;
    let train = task.train();
    match fit_arima(train, order) {
        Ok(model) => {
            let path = model.forecast(train, task.horizon);
            let predicted = path.last().copied().unwrap_or(train[train.len() - 1]);
            if predicted.is_finite() {
                Ok(ArimaForecast {
                    predicted: predicted.clamp(0.0, 1.0),
                    model: Some(model),
                    fallback: false,
                })
            } else {
                Ok(linear_fallback(task))
            }
        }
        Err(Error::Numerical(_)) => Ok(linear_fallback(task)),
        Err(e) => Err(e),
    }
}

fn linear_fallback(task: &ForecastTask) -> ArimaForecast {
    ArimaForecast {
        predicted: predict_line(task.train(), task.target_day()).clamp(0.0, 1.0),
        model: None,
        fallback: true,
    }
}
