use super::ForecastTask;
use crate::error::Result;

/// Least-squares line through `(x, y)`; returns `(intercept, slope)`.
pub fn ols_line(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mean_x) * (y - mean_y);
        sxx += (x - mean_x) * (x - mean_x);
    }
    let slope = sxy / sxx;
    (mean_y - slope * mean_x, slope)
}

/// Fits value on day index (1-based) over the training days and evaluates
/// the line at the target day, clamped to [0,1].
pub fn fit_predict_linear(task: &ForecastTask) -> Result<f64> {
    task.validate()?;
    Ok(predict_line(task.train(), task.target_day()).clamp(0.0, 1.0))
}

/// Unclamped linear extrapolation of `train` (days `1..=len`) to `day`.
pub(crate) fn predict_line(train: &[f64], day: usize) -> f64 {
    let xs: Vec<f64> = (1..=train.len()).map(|t| t as f64).collect();
    let (intercept, slope) = ols_line(&xs, train);
    intercept + slope * day as f64
}
