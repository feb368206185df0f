//! Classifier zoo behind one fit / predict contract.
//!
//! Every fitter normalizes optional instance weights to mean 1 before
//! training, so multiplying all weights by a constant changes nothing.

mod logistic;
mod mlp;
mod naive_bayes;
mod svc;
mod tree;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Scaler};
use crate::error::{FairError, Result};
use crate::matrix::Matrix;
use crate::neuralnet::DenseNet;

pub use logistic::LogisticParams;
pub use mlp::{classifier_spec, train_classifier_net, ClassifierPenalty};
pub use naive_bayes::{NaiveBayesParams, VARIANCE_FLOOR};
pub use svc::SvcParams;
pub use tree::{TreeNode, TreeParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Logistic,
    Tree,
    Svc,
    NaiveBayes,
    Mlp,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Logistic,
        ModelKind::Tree,
        ModelKind::Svc,
        ModelKind::NaiveBayes,
        ModelKind::Mlp,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Logistic => "logistic",
            ModelKind::Tree => "tree",
            ModelKind::Svc => "svc",
            ModelKind::NaiveBayes => "naive_bayes",
            ModelKind::Mlp => "mlp",
        }
    }

    /// Kinds whose optimizers assume z-scored inputs.
    pub fn needs_standardized(self) -> bool {
        matches!(self, ModelKind::Logistic | ModelKind::Svc | ModelKind::Mlp)
    }

    pub fn display_name(self) -> &'static str {
        match self {
            ModelKind::Logistic => "Logistic Regression",
            ModelKind::Tree => "Decision Tree",
            ModelKind::Svc => "SVC",
            ModelKind::NaiveBayes => "Naive Bayes",
            ModelKind::Mlp => "MLP",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = FairError;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| FairError::Config(format!("unknown model kind {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub svc_c: f64,
    pub seed: u64,
    /// Early stop once the epoch-to-epoch loss change falls below this.
    pub tolerance: f64,
    /// Hidden width of the dense-network classifier.
    pub mlp_hidden: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            epochs: 1000,
            l2: 1e-4,
            max_depth: 5,
            min_samples_leaf: 5,
            svc_c: 1.0,
            seed: 0,
            tolerance: 1e-7,
            mlp_hidden: 8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(FairError::Config("learning_rate: must be > 0".into()));
        }
        if self.epochs == 0 {
            return Err(FairError::Config("epochs: must be >= 1".into()));
        }
        if !(self.l2 >= 0.0) {
            return Err(FairError::Config("l2: must be >= 0".into()));
        }
        if self.max_depth == 0 {
            return Err(FairError::Config("max_depth: must be >= 1".into()));
        }
        if self.min_samples_leaf == 0 {
            return Err(FairError::Config("min_samples_leaf: must be >= 1".into()));
        }
        if !(self.svc_c > 0.0) {
            return Err(FairError::Config("svc_c: must be > 0".into()));
        }
        if !(self.tolerance >= 0.0) {
            return Err(FairError::Config("tolerance: must be >= 0".into()));
        }
        if self.mlp_hidden == 0 {
            return Err(FairError::Config("mlp_hidden: must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum ModelParams {
    Logistic(LogisticParams),
    Tree(TreeParams),
    Svc(SvcParams),
    NaiveBayes(NaiveBayesParams),
    Mlp(DenseNet),
}

impl ModelParams {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelParams::Logistic(_) => ModelKind::Logistic,
            ModelParams::Tree(_) => ModelKind::Tree,
            ModelParams::Svc(_) => ModelKind::Svc,
            ModelParams::NaiveBayes(_) => ModelKind::NaiveBayes,
            ModelParams::Mlp(_) => ModelKind::Mlp,
        }
    }
}

/// A fitted classifier. Serializes as `{kind, params, feature_names,
/// threshold}` plus the optional input `scaler` the CLI needs to score raw
/// CSV rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    #[serde(flatten)]
    pub params: ModelParams,
    pub feature_names: Vec<String>,
    pub threshold: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scaler: Option<Scaler>,
}

pub const DEFAULT_THRESHOLD: f64 = 0.5;

impl Model {
    pub fn new(params: ModelParams, feature_names: Vec<String>) -> Model {
        Model {
            params,
            feature_names,
            threshold: DEFAULT_THRESHOLD,
            scaler: None,
        }
    }

    pub fn kind(&self) -> ModelKind {
        self.params.kind()
    }

    pub fn with_threshold(mut self, threshold: f64) -> Result<Model> {
        if !(0.0..=1.0).contains(&threshold) {
            return Err(FairError::Config(format!("threshold {threshold} not in [0, 1]")));
        }
        self.threshold = threshold;
        Ok(self)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Model> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn predict_proba(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.cols() != self.feature_names.len() {
            return Err(FairError::Shape(format!(
                "input width {} does not match model width {}",
                x.cols(),
                self.feature_names.len()
            )));
        }
        let p = match &self.params {
            ModelParams::Logistic(p) => p.predict_proba(x),
            ModelParams::Tree(p) => p.predict_proba(x),
            ModelParams::Svc(p) => p.predict_proba(x),
            ModelParams::NaiveBayes(p) => p.predict_proba(x),
            ModelParams::Mlp(net) => net.predict(x)?.column(0),
        };
        Ok(p)
    }

    /// `1` iff the probability is at or above the model threshold.
    pub fn predict(&self, x: &Matrix) -> Result<Vec<u8>> {
        Ok(self
            .predict_proba(x)?
            .into_iter()
            .map(|p| u8::from(p >= self.threshold))
            .collect())
    }

    /// Scores a dataset after checking its schema against the model's.
    pub fn predict_proba_ds(&self, ds: &Dataset) -> Result<Vec<f64>> {
        if ds.feature_names != self.feature_names {
            return Err(FairError::Shape(format!(
                "dataset columns {:?} differ from model columns {:?}",
                ds.feature_names, self.feature_names
            )));
        }
        self.predict_proba(&ds.features)
    }

    pub fn predict_ds(&self, ds: &Dataset) -> Result<Vec<u8>> {
        Ok(self
            .predict_proba_ds(ds)?
            .into_iter()
            .map(|p| u8::from(p >= self.threshold))
            .collect())
    }
}

/// Validates optional instance weights and rescales them to mean 1.
pub(crate) fn normalize_weights(n: usize, weights: Option<&[f64]>) -> Result<Vec<f64>> {
    match weights {
        None => Ok(vec![1.0; n]),
        Some(w) => {
            if w.len() != n {
                return Err(FairError::Shape(format!("{} weights for {n} rows", w.len())));
            }
            if w.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                return Err(FairError::Config("instance weights must be finite and > 0".into()));
            }
            let mean = w.iter().sum::<f64>() / n as f64;
            Ok(w.iter().map(|v| v / mean).collect())
        }
    }
}

/// Fits a classifier of the given kind.
pub fn fit(kind: ModelKind, train: &Dataset, weights: Option<&[f64]>, cfg: &TrainConfig) -> Result<Model> {
    let w = check_fit_inputs(kind, train, weights, cfg)?;
    let params = match kind {
        ModelKind::Logistic => ModelParams::Logistic(logistic::fit(&train.features, &train.labels, &w, cfg)?),
        ModelKind::Tree => ModelParams::Tree(tree::fit(&train.features, &train.labels, &w, cfg)),
        ModelKind::Svc => ModelParams::Svc(svc::fit(&train.features, &train.labels, &w, cfg)?),
        ModelKind::NaiveBayes => ModelParams::NaiveBayes(naive_bayes::fit(&train.features, &train.labels, &w)),
        ModelKind::Mlp => ModelParams::Mlp(mlp::fit(&train.features, &train.labels, &w, cfg)?),
    };
    Ok(wrap_params(params, train))
}

fn check_fit_inputs(kind: ModelKind, train: &Dataset, weights: Option<&[f64]>, cfg: &TrainConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    if !train.has_both_labels() {
        return Err(FairError::Training(format!(
            "training set for {kind} has a single class"
        )));
    }
    if kind.needs_standardized() && !train.standardized {
        return Err(FairError::Config(format!("{kind} requires standardized features")));
    }
    normalize_weights(train.n(), weights)
}

fn wrap_params(params: ModelParams, train: &Dataset) -> Model {
    let mut model = Model::new(params, train.feature_names.clone());
    model.scaler = if train.standardized { train.scaler.clone() } else { None };
    model
}

/// Logistic fit that also returns the objective before each step and
/// after the last one.
pub fn fit_logistic_traced(train: &Dataset, weights: Option<&[f64]>, cfg: &TrainConfig) -> Result<(Model, Vec<f64>)> {
    let w = check_fit_inputs(ModelKind::Logistic, train, weights, cfg)?;
    let (params, trace) = logistic::fit_traced(&train.features, &train.labels, &w, cfg)?;
    Ok((wrap_params(ModelParams::Logistic(params), train), trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_biased_loans, split, standardize, GenConfig};

    fn toy() -> Dataset {
        let m = Matrix::from_rows(&[[-2.0, 0.5], [-1.0, -0.5], [1.0, 0.2], [2.0, -0.1]]).unwrap();
        let mut ds = Dataset::new(m, vec!["a".into(), "b".into()], vec![0, 0, 1, 1], vec![0, 1, 0, 1]).unwrap();
        ds.standardized = true;
        ds
    }

    fn loans() -> (Dataset, Dataset) {
        let ds = generate_biased_loans(&GenConfig { n: 600, ..GenConfig::default() }).unwrap();
        let p = split(&ds, 0.8, 1).unwrap();
        standardize(&p.train, &p.test).unwrap()
    }

    #[test]
    fn single_class_is_a_training_error() {
        let mut ds = toy();
        ds.labels = vec![1; 4];
        for kind in ModelKind::ALL {
            assert!(matches!(
                fit(kind, &ds, None, &TrainConfig::default()).unwrap_err(),
                FairError::Training(_)
            ));
        }
    }

    #[test]
    fn predict_threshold_boundaries() {
        let params = ModelParams::Logistic(LogisticParams {
            weights: vec![0.0],
            intercept: 0.0,
        });
        let model = Model::new(params, vec!["x".into()]);
        let x = Matrix::from_rows(&[[0.0], [5.0]]).unwrap();
        assert_eq!(model.predict_proba(&x).unwrap(), vec![0.5, 0.5]);
        assert_eq!(model.predict(&x).unwrap(), vec![1, 1]);
        let m0 = model.clone().with_threshold(0.0).unwrap();
        assert_eq!(m0.predict(&x).unwrap(), vec![1, 1]);
        let hi = model.with_threshold(0.5000001).unwrap();
        assert_eq!(hi.predict(&x).unwrap(), vec![0, 0]);
    }

    #[test]
    fn width_mismatch_is_shape_error() {
        let model = fit(ModelKind::Logistic, &toy(), None, &TrainConfig::default()).unwrap();
        let x = Matrix::from_rows(&[[1.0, 2.0, 3.0]]).unwrap();
        assert!(matches!(model.predict_proba(&x).unwrap_err(), FairError::Shape(_)));
    }

    #[test]
    fn unstandardized_input_rejected_for_gradient_models() {
        let mut ds = toy();
        ds.standardized = false;
        assert!(fit(ModelKind::Svc, &ds, None, &TrainConfig::default()).is_err());
        assert!(fit(ModelKind::Tree, &ds, None, &TrainConfig::default()).is_ok());
    }

    #[test]
    fn every_kind_is_deterministic_and_in_range() {
        let (tr, te) = loans();
        let cfg = TrainConfig { epochs: 200, ..TrainConfig::default() };
        for kind in ModelKind::ALL {
            let a = fit(kind, &tr, None, &cfg).unwrap();
            let b = fit(kind, &tr, None, &cfg).unwrap();
            assert_eq!(a, b, "{kind}");
            let p = a.predict_proba_ds(&te).unwrap();
            assert!(p.iter().all(|v| (0.0..=1.0).contains(v)), "{kind}");
        }
    }

    #[test]
    fn weight_scale_does_not_change_predictions() {
        let (tr, te) = loans();
        let cfg = TrainConfig { epochs: 200, ..TrainConfig::default() };
        let w1: Vec<f64> = (0..tr.n()).map(|i| 0.5 + (i % 3) as f64).collect();
        let w2: Vec<f64> = w1.iter().map(|v| v * 7.5).collect();
        for kind in ModelKind::ALL {
            let a = fit(kind, &tr, Some(&w1), &cfg).unwrap().predict_proba_ds(&te).unwrap();
            let b = fit(kind, &tr, Some(&w2), &cfg).unwrap().predict_proba_ds(&te).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-9, "{kind}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn json_round_trip_is_lossless() {
        let (tr, _) = loans();
        let cfg = TrainConfig { epochs: 50, ..TrainConfig::default() };
        for kind in ModelKind::ALL {
            let m = fit(kind, &tr, None, &cfg).unwrap();
            let text = m.to_json().unwrap();
            let v: serde_json::Value = serde_json::from_str(&text).unwrap();
            assert_eq!(v["kind"], kind.as_str());
            assert!(v.get("params").is_some() && v.get("threshold").is_some());
            assert_eq!(Model::from_json(&text).unwrap(), m, "{kind}");
        }
    }

    #[test]
    fn bad_weights_rejected() {
        let ds = toy();
        let cfg = TrainConfig::default();
        assert!(fit(ModelKind::Logistic, &ds, Some(&[1.0, 1.0]), &cfg).is_err());
        assert!(fit(ModelKind::Logistic, &ds, Some(&[1.0, 0.0, 1.0, 1.0]), &cfg).is_err());
    }
}
