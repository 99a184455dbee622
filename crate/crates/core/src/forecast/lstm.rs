//! Single-layer LSTM with a linear readout, trained by backpropagation
//! through time on one-step-ahead windows.
//!
//! Parameters live in one flat vector so the optimiser and the gradient
//! check can treat them uniformly. Layout, with `H` hidden units and gate
//! blocks ordered input, forget, output, candidate:
//!
//! ```text
//! w_x [4H] | w_h [4H x H, row-major] | b [4H] | w_y [H] | b_y [1]
//! ```

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ForecastTask;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LstmConfig {
    pub lookback: usize,
    pub hidden: usize,
    pub epochs: usize,
    pub learn_rate: f64,
    pub init_seed: u64,
}

impl Default for LstmConfig {
    fn default() -> Self {
        LstmConfig {
            lookback: 10,
            hidden: 16,
            epochs: 200,
            learn_rate: 0.01,
            init_seed: 7,
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lstm {
    hidden: usize,
    params: Vec<f64>,
}

struct Step {
    x: f64,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    i: Vec<f64>,
    f: Vec<f64>,
    o: Vec<f64>,
    g: Vec<f64>,
    tanh_c: Vec<f64>,
}

impl Lstm {
    pub fn param_count(hidden: usize) -> usize {
        4 * hidden + 4 * hidden * hidden + 4 * hidden + hidden + 1
    }

    /// Uniform init in ±1/sqrt(H), forget-gate bias 1.
    pub fn new(hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 1.0 / (hidden as f64).sqrt();
        let mut params: Vec<f64> = (0..Self::param_count(hidden))
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        let b = 4 * hidden + 4 * hidden * hidden;
        for k in hidden..2 * hidden {
            params[b + k] = 1.0;
        }
        Lstm { hidden, params }
    }

    pub fn from_params(hidden: usize, params: Vec<f64>) -> Self {
        assert_eq!(params.len(), Self::param_count(hidden));
        Lstm { hidden, params }
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    fn offsets(&self) -> (usize, usize, usize, usize, usize) {
        let h = self.hidden;
        let wx = 0;
        let wh = 4 * h;
        let b = wh + 4 * h * h;
        let wy = b + 4 * h;
        let by = wy + h;
        (wx, wh, b, wy, by)
    }

    fn forward(&self, window: &[f64]) -> (f64, Vec<Step>) {
        let h = self.hidden;
        let (wx, wh, b, wy, by) = self.offsets();
        let p = &self.params;
        let mut hs = vec![0.0; h];
        let mut cs = vec![0.0; h];
        let mut steps = Vec::with_capacity(window.len());
        for &x in window {
            let mut z = vec![0.0; 4 * h];
            for (r, zr) in z.iter_mut().enumerate() {
                let row = &p[wh + r * h..wh + (r + 1) * h];
                *zr = p[wx + r] * x + p[b + r] + row.iter().zip(&hs).map(|(w, v)| w * v).sum::<f64>();
            }
            let i: Vec<f64> = z[..h].iter().map(|&v| sigmoid(v)).collect();
            let f: Vec<f64> = z[h..2 * h].iter().map(|&v| sigmoid(v)).collect();
            let o: Vec<f64> = z[2 * h..3 * h].iter().map(|&v| sigmoid(v)).collect();
            let g: Vec<f64> = z[3 * h..].iter().map(|&v| v.tanh()).collect();
            let c: Vec<f64> = (0..h).map(|k| f[k] * cs[k] + i[k] * g[k]).collect();
            let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
            let h_new: Vec<f64> = (0..h).map(|k| o[k] * tanh_c[k]).collect();
            steps.push(Step {
                x,
                h_prev: std::mem::replace(&mut hs, h_new),
                c_prev: std::mem::replace(&mut cs, c),
                i,
                f,
                o,
                g,
                tanh_c,
            });
        }
        let y = p[by] + p[wy..wy + h].iter().zip(&hs).map(|(w, v)| w * v).sum::<f64>();
        (y, steps)
    }

    pub fn predict(&self, window: &[f64]) -> f64 {
        self.forward(window).0
    }

    /// Squared-error loss `0.5 (ŷ - target)^2` for one window.
    pub fn loss(&self, window: &[f64], target: f64) -> f64 {
        let d = self.predict(window) - target;
        0.5 * d * d
    }

    /// Loss and its gradient with respect to every parameter.
    pub fn loss_and_grad(&self, window: &[f64], target: f64) -> (f64, Vec<f64>) {
        let h = self.hidden;
        let (wx, wh, b, wy, by) = self.offsets();
        let p = &self.params;
        let (y, steps) = self.forward(window);
        let dy = y - target;
        let mut grad = vec![0.0; p.len()];

        let last_h: Vec<f64> = match steps.last() {
            Some(s) => (0..h).map(|k| s.o[k] * s.tanh_c[k]).collect(),
            None => vec![0.0; h],
        };
        grad[by] = dy;
        for k in 0..h {
            grad[wy + k] = dy * last_h[k];
        }
        let mut dh: Vec<f64> = (0..h).map(|k| dy * p[wy + k]).collect();
        let mut dc = vec![0.0; h];
        let mut dz = vec![0.0; 4 * h];
        for s in steps.iter().rev() {
            for k in 0..h {
                let do_ = dh[k] * s.tanh_c[k];
                let dck = dc[k] + dh[k] * s.o[k] * (1.0 - s.tanh_c[k] * s.tanh_c[k]);
                let di = dck * s.g[k];
                let df = dck * s.c_prev[k];
                let dg = dck * s.i[k];
                dz[k] = di * s.i[k] * (1.0 - s.i[k]);
                dz[h + k] = df * s.f[k] * (1.0 - s.f[k]);
                dz[2 * h + k] = do_ * s.o[k] * (1.0 - s.o[k]);
                dz[3 * h + k] = dg * (1.0 - s.g[k] * s.g[k]);
                dc[k] = dck * s.f[k];
            }
            let mut dh_prev = vec![0.0; h];
            for r in 0..4 * h {
                let g = dz[r];
                grad[wx + r] += g * s.x;
                grad[b + r] += g;
                let row = wh + r * h;
                for k in 0..h {
                    grad[row + k] += g * s.h_prev[k];
                    dh_prev[k] += g * p[row + k];
                }
            }
            dh = dh_prev;
        }
        (0.5 * dy * dy, grad)
    }

    fn step(&mut self, grad: &[f64], rate: f64) {
        for (w, g) in self.params.iter_mut().zip(grad) {
            *w -= rate * g;
        }
    }
}

/// Trained network plus the scaling used for its inputs.
#[derive(Debug, Clone)]
pub struct LstmForecaster {
    pub net: Lstm,
    pub lookback: usize,
    min: f64,
    range: f64,
    pub final_loss: f64,
}

impl LstmForecaster {
    /// Min-max scales `train`, then runs `epochs` passes of per-window SGD
    /// over the sliding one-step-ahead windows (shuffled per epoch).
    pub fn fit(train: &[f64], cfg: &LstmConfig) -> Result<Self> {
        if cfg.lookback == 0 || cfg.lookback >= train.len() {
            return Err(Error::Validation(format!(
                "lookback {} must be in [1, {})",
                cfg.lookback,
                train.len()
            )));
        }
        if cfg.hidden == 0 {
            return Err(Error::Validation("hidden size must be positive".into()));
        }
        let min = train.iter().copied().fold(f64::INFINITY, f64::min);
        let max = train.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let range = if max > min { max - min } else { 1.0 };
        let scaled: Vec<f64> = train.iter().map(|v| (v - min) / range).collect();

        let mut net = Lstm::new(cfg.hidden, cfg.init_seed);
        let mut order: Vec<usize> = (0..scaled.len() - cfg.lookback).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.init_seed ^ 0x5eed);
        let mut epoch_loss = 0.0;
        for epoch in 0..cfg.epochs {
            order.shuffle(&mut rng);
            epoch_loss = 0.0;
            for &start in &order {
                let window = &scaled[start..start + cfg.lookback];
                let target = scaled[start + cfg.lookback];
                let (loss, grad) = net.loss_and_grad(window, target);
                if !loss.is_finite() {
                    return Err(Error::Numerical(format!(
                        "LSTM loss became non-finite in epoch {epoch}; \
                         lower learn_rate (currently {})",
                        cfg.learn_rate
                    )));
                }
                epoch_loss += loss;
                net.step(&grad, cfg.learn_rate);
            }
            epoch_loss /= order.len() as f64;
        }
        Ok(LstmForecaster {
            net,
            lookback: cfg.lookback,
            min,
            range,
            final_loss: epoch_loss,
        })
    }

    /// Recursive forecast of the `horizon` values after `history`, on the
    /// original scale.
    pub fn forecast(&self, history: &[f64], horizon: usize) -> Vec<f64> {
        let mut window: Vec<f64> = history[history.len() - self.lookback..]
            .iter()
            .map(|v| (v - self.min) / self.range)
            .collect();
        let mut out = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            let next = self.net.predict(&window);
            window.remove(0);
            window.push(next);
            out.push(next * self.range + self.min);
        }
        out
    }
}

pub fn fit_predict_lstm(task: &ForecastTask, cfg: &LstmConfig) -> Result<f64> {
    task.validate()?;
    let train = task.train();
    let model = LstmForecaster::fit(train, cfg)?;
    let path = model.forecast(train, task.horizon);
    let predicted = *path.last().expect("horizon >= 1");
    if !predicted.is_finite() {
        return Err(Error::Numerical("LSTM forecast is not finite".into()));
    }
    Ok(predicted.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn central_difference(net: &Lstm, window: &[f64], target: f64, k: usize, h: f64) -> f64 {
        let mut plus = net.params.clone();
        plus[k] += h;
        let mut minus = net.params.clone();
        minus[k] -= h;
        let lp = Lstm::from_params(net.hidden, plus).loss(window, target);
        let lm = Lstm::from_params(net.hidden, minus).loss(window, target);
        (lp - lm) / (2.0 * h)
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for point in 0..10 {
            let hidden = 3;
            let params: Vec<f64> = (0..Lstm::param_count(hidden))
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect();
            let net = Lstm::from_params(hidden, params);
            let window = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
            let target = rng.gen_range(0.0..1.0);
            let (_, grad) = net.loss_and_grad(&window, target);
            for (k, &g) in grad.iter().enumerate() {
                let fd = central_difference(&net, &window, target, k, 1e-5);
                let denom = g.abs().max(fd.abs()).max(1e-6);
                assert!((g - fd).abs() / denom < 1e-4, "point {point} param {k}: {g} vs {fd}");
            }
        }
    }

    #[test]
    fn constant_series_is_learned() {
        let task = ForecastTask::new(1, vec![0.73; 180]);
        let cfg = LstmConfig {
            epochs: 40,
            ..LstmConfig::default()
        };
        let p = fit_predict_lstm(&task, &cfg).unwrap();
        assert!((p - 0.73).abs() < 0.02, "{p}");
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let s: Vec<f64> = (0..180).map(|t| 0.6 + 0.1 * ((t as f64) / 9.0).sin()).collect();
        let task = ForecastTask::new(1, s);
        let cfg = LstmConfig {
            epochs: 5,
            ..LstmConfig::default()
        };
        let a = fit_predict_lstm(&task, &cfg).unwrap();
        let b = fit_predict_lstm(&task, &cfg).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
        assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn divergence_is_reported() {
        let s: Vec<f64> = (0..180).map(|t| ((t * 37) % 11) as f64 / 10.0).collect();
        let task = ForecastTask::new(1, s);
        let cfg = LstmConfig {
            epochs: 50,
            learn_rate: 1e6,
            ..LstmConfig::default()
        };
        match fit_predict_lstm(&task, &cfg) {
            Err(Error::Numerical(msg)) => assert!(msg.contains("learn_rate")),
            other => panic!("expected numerical failure, got {other:?}"),
        }
    }

    #[test]
    fn bad_lookback_rejected() {
        let task = ForecastTask::new(1, vec![0.5; 180]);
        let cfg = LstmConfig {
            lookback: 170,
            ..LstmConfig::default()
        };
        assert!(matches!(fit_predict_lstm(&task, &cfg), Err(Error::Validation(_))));
    }
}
