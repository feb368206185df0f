use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::dataset::sigmoid;
use crate::error::{FairError, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticParams {
    pub weights: Vec<f64>,
    pub intercept: f64,
}

impl LogisticParams {
    pub fn score(&self, row: &[f64]) -> f64 {
        row.iter()
            .zip(&self.weights)
            .fold(self.intercept, |acc, (x, w)| acc + x * w)
    }

    pub fn predict_proba(&self, x: &Matrix) -> Vec<f64> {
        x.iter_rows().map(|r| sigmoid(self.score(r))).collect()
    }
}

/// Weighted cross-entropy (mean over rows) plus `l2/2 · ‖w‖²`; the intercept
/// is not penalized.
pub(crate) fn objective(params: &LogisticParams, x: &Matrix, y: &[u8], w: &[f64], l2: f64) -> f64 {
    let total_w: f64 = w.iter().sum();
    let ce: f64 = x
        .iter_rows()
        .zip(y.iter().zip(w))
        .map(|(r, (&yi, &wi))| {
            let s = params.score(r);
            // log(1 + e^s) − y·s, computed stably.
            let softplus = if s > 0.0 { s + (-s).exp().ln_1p() } else { s.exp().ln_1p() };
            wi * (softplus - f64::from(yi) * s)
        })
        .sum::<f64>()
        / total_w;
    ce + 0.5 * l2 * params.weights.iter().map(|v| v * v).sum::<f64>()
}

/// Full-batch gradient descent with a fixed step.
pub(crate) fn fit(x: &Matrix, y: &[u8], w: &[f64], cfg: &TrainConfig) -> Result<LogisticParams> {
    fit_traced(x, y, w, cfg).map(|(p, _)| p)
}

/// Also returns the objective before each step and after the last one.
pub(crate) fn fit_traced(
    x: &Matrix,
    y: &[u8],
    w: &[f64],
    cfg: &TrainConfig,
) -> Result<(LogisticParams, Vec<f64>)> {
    let d = x.cols();
    let total_w: f64 = w.iter().sum();
    let mut params = LogisticParams {
        weights: vec![0.0; d],
        intercept: 0.0,
    };
    let mut history = vec![objective(&params, x, y, w, cfg.l2)];
    for epoch in 0..cfg.epochs {
        let mut gw = vec![0.0; d];
        let mut gb = 0.0;
        for (r, (&yi, &wi)) in x.iter_rows().zip(y.iter().zip(w)) {
            let err = wi * (sigmoid(params.score(r)) - f64::from(yi)) / total_w;
            gb += err;
            for (g, v) in gw.iter_mut().zip(r) {
                *g += err * v;
            }
        }
        for (wj, g) in params.weights.iter_mut().zip(&gw) {
            *wj -= cfg.learning_rate * (g + cfg.l2 * *wj);
        }
        params.intercept -= cfg.learning_rate * gb;
        let loss = objective(&params, x, y, w, cfg.l2);
        if !loss.is_finite() {
            return Err(FairError::Numerical(format!("logistic loss is NaN at epoch {epoch}")));
        }
        let prev = *history.last().unwrap();
        history.push(loss);
        if (prev - loss).abs() < cfg.tolerance {
            break;
        }
    }
    Ok((params, history))
}
