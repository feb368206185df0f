//! Exact Shapley attributions, local linear surrogates and permutation
//! importance.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{FairError, Result};
use crate::matrix::{solve, Matrix};
use crate::metrics::{accuracy, roc_auc};
use crate::models::Model;

/// Coalition enumeration is `2^d`; beyond this it stops being interactive.
pub const MAX_EXACT_FEATURES: usize = 15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub feature_names: Vec<String>,
    pub contributions: Vec<f64>,
    pub base_value: f64,
    pub instance_output: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateExplanation {
    pub feature_names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub kernel_width: f64,
    pub n_samples: usize,
    pub local_fit_r2: f64,
}

fn check_row(x: &[f64], d: usize) -> Result<()> {
    if x.len() != d {
        return Err(FairError::Shape(format!("instance has {} values, expected {d}", x.len())));
    }
    Ok(())
}

/// Exact interventional Shapley values of `f` at `x` against `background`.
pub fn shapley_with<F>(mut f: F, x: &[f64], background: &Matrix, feature_names: &[String]) -> Result<Attribution>
where
    F: FnMut(&Matrix) -> Result<Vec<f64>>,
{
    let d = background.cols();
    check_row(x, d)?;
    if d > MAX_EXACT_FEATURES {
        return Err(FairError::Capability(format!(
            "exact Shapley supports at most {MAX_EXACT_FEATURES} features, got {d}; use permutation importance"
        )));
    }
    if background.rows() == 0 {
        return Err(FairError::Shape("background set is empty".into()));
    }
    let nb = background.rows();
    let coalitions = 1usize << d;
    let mut value = vec![0.0; coalitions];
    let mut probe = background.clone();
    for (mask, v) in value.iter_mut().enumerate() {
        for r in 0..nb {
            for (c, &xv) in x.iter().enumerate() {
                probe.set(r, c, if mask >> c & 1 == 1 { xv } else { background.get(r, c) });
            }
        }
        let out = f(&probe)?;
        *v = out.iter().sum::<f64>() / nb as f64;
    }
    let fact: Vec<f64> = (0..=d).scan(1.0, |acc, k| {
        if k > 0 {
            *acc *= k as f64;
        }
        Some(*acc)
    })
    .collect();
    let weight = |s: usize| fact[s] * fact[d - s - 1] / fact[d];
    let mut phi = vec![0.0; d];
    for (i, p) in phi.iter_mut().enumerate() {
        let bit = 1usize << i;
        for mask in (0..coalitions).filter(|m| m & bit == 0) {
            *p += weight(mask.count_ones() as usize) * (value[mask | bit] - value[mask]);
        }
    }
    let xm = Matrix::from_vec(1, d, x.to_vec())?;
    Ok(Attribution {
        feature_names: feature_names.to_vec(),
        contributions: phi,
        base_value: value[0],
        instance_output: f(&xm)?[0],
    })
}

pub fn shapley_exact(m: &Model, x: &[f64], background: &Dataset) -> Result<Attribution> {
    shapley_with(|z| m.predict_proba(z), x, &background.features, &background.feature_names)
}

fn column_stds(background: &Matrix) -> Vec<f64> {
    let n = background.rows() as f64;
    (0..background.cols())
        .map(|c| {
            let col = background.column(c);
            let mean = col.iter().sum::<f64>() / n;
            (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
        })
        .collect()
}

/// `0.75·sqrt(d)·mean column std` of the background.
pub fn default_kernel_width(background: &Dataset) -> f64 {
    let stds = column_stds(&background.features);
    0.75 * (stds.len() as f64).sqrt() * stds.iter().sum::<f64>() / stds.len() as f64
}

/// Weighted least squares fit of the model around `x` on Gaussian
/// perturbations scaled by the background column spreads.
pub fn local_surrogate(
    m: &Model,
    x: &[f64],
    background: &Dataset,
    n_samples: usize,
    kernel_width: f64,
    seed: u64,
) -> Result<SurrogateExplanation> {
    let d = background.d();
    check_row(x, d)?;
    if n_samples < d + 1 {
        return Err(FairError::Config(format!("n_samples {n_samples} must be at least d + 1 = {}", d + 1)));
    }
    if !(kernel_width > 0.0) || !kernel_width.is_finite() {
        return Err(FairError::Config(format!("kernel_width must be > 0, got {kernel_width}")));
    }
    let stds = column_stds(&background.features);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = Matrix::zeros(n_samples, d);
    let mut w = Vec::with_capacity(n_samples);
    for r in 0..n_samples {
        let mut dist2 = 0.0;
        for c in 0..d {
            let e: f64 = StandardNormal.sample(&mut rng);
            let v = x[c] + stds[c] * e;
            dist2 += (v - x[c]).powi(2);
            z.set(r, c, v);
        }
        w.push((-dist2 / (kernel_width * kernel_width)).exp());
    }
    let y = m.predict_proba(&z)?;
    // Normal equations on [1, z].
    let k = d + 1;
    let mut a = Matrix::zeros(k, k);
    let mut b = vec![0.0; k];
    let mut row = vec![1.0; k];
    for r in 0..n_samples {
        row[1..].copy_from_slice(z.row(r));
        for i in 0..k {
            b[i] += w[r] * row[i] * y[r];
            for j in 0..k {
                a.set(i, j, a.get(i, j) + w[r] * row[i] * row[j]);
            }
        }
    }
    let beta = solve(&a, &b).ok_or_else(|| {
        FairError::Numerical("surrogate design matrix is singular; increase n_samples or kernel_width".into())
    })?;
    let wsum: f64 = w.iter().sum();
    let ybar = w.iter().zip(&y).map(|(wi, yi)| wi * yi).sum::<f64>() / wsum;
    let (mut ss_res, mut ss_tot) = (0.0, 0.0);
    for r in 0..n_samples {
        let fit = beta[0] + z.row(r).iter().zip(&beta[1..]).map(|(a, b)| a * b).sum::<f64>();
        ss_res += w[r] * (y[r] - fit).powi(2);
        ss_tot += w[r] * (y[r] - ybar).powi(2);
    }
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(SurrogateExplanation {
        feature_names: background.feature_names.clone(),
        coefficients: beta[1..].to_vec(),
        intercept: beta[0],
        kernel_width,
        n_samples,
        local_fit_r2: r2,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImportanceMetric {
    Accuracy,
    RocAuc,
}

fn score(m: &Model, x: &Matrix, labels: &[u8], metric: ImportanceMetric) -> Result<f64> {
    match metric {
        ImportanceMetric::Accuracy => accuracy(&m.predict(x)?, labels),
        ImportanceMetric::RocAuc => roc_auc(&m.predict_proba(x)?, labels),
    }
}

/// Mean metric drop per feature when that column is shuffled.
pub fn permutation_importance(
    m: &Model,
    ds: &Dataset,
    metric: ImportanceMetric,
    n_repeats: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if n_repeats == 0 {
        return Err(FairError::Config("n_repeats must be >= 1".into()));
    }
    if ds.feature_names != m.feature_names {
        return Err(FairError::Shape(format!(
            "dataset columns {:?} differ from model columns {:?}",
            ds.feature_names, m.feature_names
        )));
    }
    let base = score(m, &ds.features, &ds.labels, metric)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(ds.d());
    let mut x = ds.features.clone();
    for c in 0..ds.d() {
        let original = ds.features.column(c);
        let mut drop = 0.0;
        for _ in 0..n_repeats {
            let mut col = original.clone();
            col.shuffle(&mut rng);
            for (r, v) in col.iter().enumerate() {
                x.set(r, c, *v);
            }
            drop += base - score(m, &x, &ds.labels, metric)?;
        }
        for (r, v) in original.iter().enumerate() {
            x.set(r, c, *v);
        }
        out.push(drop / n_repeats as f64);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_biased_loans, split, standardize, GenConfig};
    use crate::models::{fit, LogisticParams, ModelKind, ModelParams, TrainConfig};
    use rand::Rng;

    fn names(d: usize) -> Vec<String> {
        (0..d).map(|i| format!("f{i}")).collect()
    }

    fn background(n: usize, d: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_vec(n, d, (0..n * d).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap()
    }

    #[test]
    fn constant_model_gets_zero_attribution() {
        let bg = background(20, 3, 1);
        let a = shapley_with(|z| Ok(vec![0.3; z.rows()]), &[1.0, 2.0, 3.0], &bg, &names(3)).unwrap();
        assert!(a.contributions.iter().all(|&p| p.abs() < 1e-15));
    }

    #[test]
    fn additive_model_matches_closed_form() {
        let bg = background(30, 2, 2);
        let g1 = |v: f64| v * v;
        let g2 = |v: f64| (2.0 * v).sin();
        let f = |z: &Matrix| Ok(z.iter_rows().map(|r| g1(r[0]) + g2(r[1])).collect());
        let x = [0.7, -1.1];
        let a = shapley_with(f, &x, &bg, &names(2)).unwrap();
        let m1 = bg.column(0).iter().map(|&v| g1(v)).sum::<f64>() / 30.0;
        let m2 = bg.column(1).iter().map(|&v| g2(v)).sum::<f64>() / 30.0;
        assert!((a.contributions[0] - (g1(x[0]) - m1)).abs() < 1e-12);
        assert!((a.contributions[1] - (g2(x[1]) - m2)).abs() < 1e-12);
    }

    #[test]
    fn efficiency_and_symmetry() {
        let mut bg = background(25, 3, 3);
        for r in 0..25 {
            let v = bg.get(r, 0);
            bg.set(r, 1, v);
        }
        let f = |z: &Matrix| Ok(z.iter_rows().map(|r| (r[0] * r[1]).tanh() + r[2]).collect());
        let a = shapley_with(f, &[0.5, 0.5, -1.0], &bg, &names(3)).unwrap();
        let total: f64 = a.contributions.iter().sum();
        assert!((a.base_value + total - a.instance_output).abs() < 1e-9);
        assert!((a.contributions[0] - a.contributions[1]).abs() < 1e-12);
    }

    #[test]
    fn too_many_features_is_capability_error() {
        let bg = background(2, 16, 4);
        let e = shapley_with(|z| Ok(vec![0.0; z.rows()]), &[0.0; 16], &bg, &names(16)).unwrap_err();
        assert!(matches!(e, FairError::Capability(ref s) if s.contains("permutation importance")));
    }

    fn loans() -> (Dataset, Dataset) {
        let ds = generate_biased_loans(&GenConfig { n: 1000, ..GenConfig::default() }).unwrap();
        let p = split(&ds, 0.8, 5).unwrap();
        standardize(&p.train, &p.test).unwrap()
    }

    #[test]
    fn surrogate_of_logistic_matches_weight_signs() {
        let (tr, te) = loans();
        let m = fit(ModelKind::Logistic, &tr, None, &TrainConfig::default()).unwrap();
        let ModelParams::Logistic(lp) = &m.params else { unreachable!() };
        let x = te.features.row(0).to_vec();
        let s = local_surrogate(&m, &x, &tr, 2000, default_kernel_width(&tr), 7).unwrap();
        for (c, w) in s.coefficients.iter().zip(&lp.weights) {
            assert_eq!(c.signum(), w.signum(), "{:?} vs {:?}", s.coefficients, lp.weights);
        }
        assert_eq!(s, local_surrogate(&m, &x, &tr, 2000, default_kernel_width(&tr), 7).unwrap());
        assert!(local_surrogate(&m, &x, &tr, 3, 1.0, 7).is_err());
    }

    #[test]
    fn ignored_and_constant_features() {
        let (tr, te) = loans();
        let m = Model::new(
            ModelParams::Logistic(LogisticParams {
                weights: vec![0.0, 1.0, 2.0],
                intercept: -0.5,
            }),
            tr.feature_names.clone(),
        );
        let imp = permutation_importance(&m, &te, ImportanceMetric::Accuracy, 10, 1).unwrap();
        assert_eq!(imp[0], 0.0);
        let mut flat = te.clone();
        for r in 0..flat.n() {
            flat.features.set(r, 1, 0.25);
        }
        let imp = permutation_importance(&m, &flat, ImportanceMetric::RocAuc, 3, 1).unwrap();
        assert_eq!(imp[1], 0.0);
        assert!(permutation_importance(&m, &te, ImportanceMetric::Accuracy, 0, 1).is_err());
    }

    #[test]
    fn biased_baseline_relies_on_gender() {
        let (tr, te) = loans();
        let m = fit(ModelKind::Logistic, &tr, None, &TrainConfig::default()).unwrap();
        let imp = permutation_importance(&m, &te, ImportanceMetric::Accuracy, 5, 3).unwrap();
        assert!(imp[0] > 0.0, "{imp:?}");
    }
}
