//! Linear SVC trained by subgradient descent on the hinge loss, with
//! Platt scaling for probabilities.

use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::dataset::sigmoid;
use crate::error::{FairError, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvcParams {
    pub weights: Vec<f64>,
    pub intercept: f64,
    /// Platt map `p = 1 / (1 + exp(a·margin + b))`.
    pub platt_a: f64,
    pub platt_b: f64,
}

impl SvcParams {
    pub fn margin(&self, row: &[f64]) -> f64 {
        row.iter()
            .zip(&self.weights)
            .fold(self.intercept, |acc, (x, w)| acc + x * w)
    }

    pub fn platt(&self, margin: f64) -> f64 {
        sigmoid(-(self.platt_a * margin + self.platt_b))
    }

    pub fn predict_proba(&self, x: &Matrix) -> Vec<f64> {
        x.iter_rows().map(|r| self.platt(self.margin(r))).collect()
    }
}

/// Minimizes `λ/2·‖w‖² + weighted-mean hinge` with `λ = 1 / (C·n)`, the
/// usual primal rescaled by `1 / (C·n)`. The step decays as `lr / √(t+1)`.
pub(crate) fn fit(x: &Matrix, y: &[u8], w: &[f64], cfg: &TrainConfig) -> Result<SvcParams> {
    let n = x.rows();
    let d = x.cols();
    let total_w: f64 = w.iter().sum();
    let lambda = 1.0 / (cfg.svc_c * n as f64);
    let mut weights = vec![0.0; d];
    let mut intercept = 0.0;
    let margin = |weights: &[f64], intercept: f64, r: &[f64]| {
        r.iter().zip(weights).fold(intercept, |acc, (a, b)| acc + a * b)
    };
    let mut prev = f64::INFINITY;
    for epoch in 0..cfg.epochs {
        let mut gw: Vec<f64> = weights.iter().map(|v| lambda * v).collect();
        let mut gb = 0.0;
        let mut hinge = 0.0;
        for (r, (&yi, &wi)) in x.iter_rows().zip(y.iter().zip(w)) {
            let s = if yi == 1 { 1.0 } else { -1.0 };
            let m = s * margin(&weights, intercept, r);
            if m < 1.0 {
                hinge += wi * (1.0 - m) / total_w;
                let c = -s * wi / total_w;
                gb += c;
                for (g, v) in gw.iter_mut().zip(r) {
                    *g += c * v;
                }
            }
        }
        let objective = hinge + 0.5 * lambda * weights.iter().map(|v| v * v).sum::<f64>();
        if !objective.is_finite() {
            return Err(FairError::Numerical(format!("svc loss is NaN at epoch {epoch}")));
        }
        if (prev - objective).abs() < cfg.tolerance {
            break;
        }
        prev = objective;
        let step = cfg.learning_rate / ((epoch + 1) as f64).sqrt();
        for (wj, g) in weights.iter_mut().zip(&gw) {
            *wj -= step * g;
        }
        intercept -= step * gb;
    }
    let margins: Vec<f64> = x.iter_rows().map(|r| margin(&weights, intercept, r)).collect();
    let (platt_a, platt_b) = platt_fit(&margins, y, w)?;
    Ok(SvcParams {
        weights,
        intercept,
        platt_a,
        platt_b,
    })
}

/// Platt's method: Newton iterations with backtracking on the weighted
/// cross-entropy of smoothed targets `(N₊+1)/(N₊+2)` and `1/(N₋+2)`.
pub(crate) fn platt_fit(margins: &[f64], y: &[u8], w: &[f64]) -> Result<(f64, f64)> {
    let n_pos: f64 = y.iter().zip(w).filter(|(l, _)| **l == 1).map(|(_, wi)| wi).sum();
    let n_neg: f64 = y.iter().zip(w).filter(|(l, _)| **l == 0).map(|(_, wi)| wi).sum();
    let t_pos = (n_pos + 1.0) / (n_pos + 2.0);
    let t_neg = 1.0 / (n_neg + 2.0);
    let targets: Vec<f64> = y.iter().map(|&l| if l == 1 { t_pos } else { t_neg }).collect();

    let objective = |a: f64, b: f64| -> f64 {
        margins
            .iter()
            .zip(targets.iter().zip(w))
            .map(|(&f, (&t, &wi))| {
                let z = a * f + b;
                // −[t·log p + (1−t)·log(1−p)] with p = σ(−z).
                let softplus = if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
                wi * (softplus - (1.0 - t) * z)
            })
            .sum()
    };

    let mut a = 0.0;
    let mut b = ((n_neg + 1.0) / (n_pos + 1.0)).ln();
    let mut value = objective(a, b);
    for _ in 0..100 {
        let (mut ga, mut gb, mut haa, mut hab, mut hbb) = (0.0, 0.0, 1e-12, 0.0, 1e-12);
        for (&f, (&t, &wi)) in margins.iter().zip(targets.iter().zip(w)) {
            let p = sigmoid(-(a * f + b));
            let d = wi * (t - p);
            ga += d * f;
            gb += d;
            let h = wi * p * (1.0 - p);
            haa += h * f * f;
            hab += h * f;
            hbb += h;
        }
        if ga.abs() < 1e-10 && gb.abs() < 1e-10 {
            break;
        }
        let det = haa * hbb - hab * hab;
        let (da, db) = (-(hbb * ga - hab * gb) / det, -(-hab * ga + haa * gb) / det);
        let mut step = 1.0;
        loop {
            let cand = objective(a + step * da, b + step * db);
            if cand < value + 1e-4 * step * (ga * da + gb * db) {
                a += step * da;
                b += step * db;
                value = cand;
                break;
            }
            step *= 0.5;
            if step < 1e-10 {
                break;
            }
        }
        if step < 1e-10 {
            break;
        }
    }
    if !(a.is_finite() && b.is_finite()) {
        return Err(FairError::Numerical("Platt scaling diverged".into()));
    }
    Ok((a, b))
}
