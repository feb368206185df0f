//! In-processing mitigations: fair representations, adversarial debiasing
//! and fairness-penalized training.
//!
//! All min–max objectives are optimized by alternation: the adversary takes
//! its own gradient steps, then the main network steps against the frozen
//! adversary (gradient reversal).

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Scaler, GENDER};
use crate::error::{FairError, Result};
use crate::matrix::Matrix;
use crate::models::{train_classifier_net, Model, ModelParams, TrainConfig};
use crate::neuralnet::{apply_update, init_net, loss_and_delta, Activation, Activations, DenseNet, GradSet, Loss, NetSpec};
use crate::preprocess::flip_sensitive;

/// Seed offsets so the sub-networks never share a stream.
const DECODER_SEED_OFFSET: u64 = 1;
const ADVERSARY_SEED_OFFSET: u64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FairRepConfig {
    pub encoding_dim: usize,
    pub adversary_hidden: usize,
    pub lambda_adv: f64,
    pub epochs: usize,
    pub lr_autoencoder: f64,
    pub lr_adversary: f64,
    pub adversary_steps_per_epoch: usize,
    pub seed: u64,
}

impl Default for FairRepConfig {
    fn default() -> Self {
        FairRepConfig {
            encoding_dim: 2,
            adversary_hidden: 8,
            lambda_adv: 1.0,
            epochs: 2000,
            lr_autoencoder: 0.05,
            lr_adversary: 0.05,
            adversary_steps_per_epoch: 1,
            seed: 0,
        }
    }
}

impl FairRepConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(FairError::Config(what.to_string()));
        if self.encoding_dim == 0 {
            return bad("encoding_dim must be >= 1");
        }
        if self.adversary_hidden == 0 {
            return bad("adversary_hidden must be >= 1");
        }
        if !(self.lambda_adv >= 0.0) || !self.lambda_adv.is_finite() {
            return bad("lambda_adv must be finite and >= 0");
        }
        if self.epochs == 0 {
            return bad("epochs must be >= 1");
        }
        for (name, lr) in [("lr_autoencoder", self.lr_autoencoder), ("lr_adversary", self.lr_adversary)] {
            if !(lr > 0.0) || !lr.is_finite() {
                return Err(FairError::Config(format!("{name} must be finite and > 0")));
            }
        }
        if self.adversary_steps_per_epoch == 0 {
            return bad("adversary_steps_per_epoch must be >= 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLosses {
    pub reconstruction: f64,
    pub adversary: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairEncoder {
    pub encoder: DenseNet,
    pub decoder: DenseNet,
    pub adversary: DenseNet,
    pub config: FairRepConfig,
    pub history: Vec<EpochLosses>,
    /// Columns consumed by the encoder, in order. Gender is never among them.
    pub input_features: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scaler: Option<Scaler>,
}

impl FairEncoder {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<FairEncoder> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn feature_names(&self) -> Vec<String> {
        (0..self.config.encoding_dim).map(|i| format!("e{i}")).collect()
    }

    fn input_matrix(&self, ds: &Dataset) -> Result<Matrix> {
        select_named(ds, &self.input_features)
    }
}

fn select_named(ds: &Dataset, names: &[String]) -> Result<Matrix> {
    let idx = names
        .iter()
        .map(|f| {
            ds.column_index(f)
                .ok_or_else(|| FairError::Shape(format!("dataset lacks encoder input column {f}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ds.features.select_cols(&idx))
}

fn column_target(v: &[u8]) -> Matrix {
    Matrix::from_vec(v.len(), 1, v.iter().map(|&s| f64::from(s)).collect()).unwrap()
}

fn check_nets(nets: &[(&str, &DenseNet)], epoch: usize) -> Result<()> {
    for (name, net) in nets {
        if !net.all_finite() {
            return Err(FairError::Numerical(format!("{name} diverged at epoch {epoch}")));
        }
    }
    Ok(())
}

/// One adversary gradient step on BCE(adversary(z), targets).
fn adversary_step(adversary: &DenseNet, z: &Matrix, targets: &Matrix, lr: f64) -> Result<(f64, DenseNet)> {
    let acts = adversary.forward(z)?;
    let (bce, delta) = loss_and_delta(acts.output(), Activation::Sigmoid, targets, Loss::Bce, None)?;
    let (grads, _) = adversary.backward_pre(&acts, &delta)?;
    Ok((bce, apply_update(adversary, &grads, lr)?))
}

/// Parts of the autoencoder objective `MSE(dec(enc(x)), x) − λ·BCE(adv(enc(x)), g)`.
#[derive(Debug, Clone)]
pub struct AutoencoderGrads {
    pub objective: f64,
    pub reconstruction: f64,
    pub adversary_bce: f64,
    pub encoder: GradSet,
    pub decoder: GradSet,
}

/// Objective and gradients for the encoder/decoder with the adversary held
/// fixed.
pub fn autoencoder_grads(
    encoder: &DenseNet,
    decoder: &DenseNet,
    adversary: &DenseNet,
    x: &Matrix,
    gender: &Matrix,
    lambda: f64,
) -> Result<AutoencoderGrads> {
    let enc = encoder.forward(x)?;
    let z = enc.output();
    let dec = decoder.forward(z)?;
    let (mse, d_dec) = loss_and_delta(dec.output(), decoder.output_activation(), x, Loss::Mse, None)?;
    let (g_dec, mut d_z) = decoder.backward_pre(&dec, &d_dec)?;
    let adv = adversary.forward(z)?;
    let (bce, d_adv) = loss_and_delta(adv.output(), Activation::Sigmoid, gender, Loss::Bce, None)?;
    if lambda != 0.0 {
        let (_, d_z_adv) = adversary.backward_pre(&adv, &d_adv)?;
        for (a, b) in d_z.as_mut_slice().iter_mut().zip(d_z_adv.as_slice()) {
            *a -= lambda * b;
        }
    }
    let (g_enc, _) = encoder.backward(&enc, &d_z)?;
    Ok(AutoencoderGrads {
        objective: mse - lambda * bce,
        reconstruction: mse,
        adversary_bce: bce,
        encoder: g_enc,
        decoder: g_dec,
    })
}

/// The autoencoder objective alone, for finite-difference checks.
pub fn autoencoder_objective(
    encoder: &DenseNet,
    decoder: &DenseNet,
    adversary: &DenseNet,
    x: &Matrix,
    gender: &Matrix,
    lambda: f64,
) -> Result<f64> {
    let z = encoder.predict(x)?;
    let mse = loss_and_delta(&decoder.predict(&z)?, decoder.output_activation(), x, Loss::Mse, None)?.0;
    let bce = loss_and_delta(&adversary.predict(&z)?, Activation::Sigmoid, gender, Loss::Bce, None)?.0;
    Ok(mse - lambda * bce)
}

/// Network shapes used for a fair representation over `d_in` inputs:
/// linear encoder, linear decoder, one-hidden-layer adversary.
pub fn fair_rep_specs(d_in: usize, cfg: &FairRepConfig) -> [NetSpec; 3] {
    let k = cfg.encoding_dim;
    [
        NetSpec::new(vec![d_in, k], vec![Activation::Identity], cfg.seed),
        NetSpec::new(vec![k, d_in], vec![Activation::Identity], cfg.seed + DECODER_SEED_OFFSET),
        NetSpec::new(
            vec![k, cfg.adversary_hidden, 1],
            vec![Activation::Relu, Activation::Sigmoid],
            cfg.seed + ADVERSARY_SEED_OFFSET,
        ),
    ]
}

pub fn train_fair_representation(train: &Dataset, cfg: &FairRepConfig) -> Result<FairEncoder> {
    cfg.validate()?;
    if !train.standardized {
        return Err(FairError::Config("fair representation requires standardized features".into()));
    }
    if !train.has_both_groups() {
        return Err(FairError::DegenerateData("training data contain a single gender".into()));
    }
    if cfg.encoding_dim >= train.d() {
        return Err(FairError::Config(format!(
            "encoding_dim {} must be below the input dimension {}",
            cfg.encoding_dim,
            train.d()
        )));
    }
    let input_features: Vec<String> = train.feature_names.iter().filter(|f| *f != GENDER).cloned().collect();
    if input_features.is_empty() {
        return Err(FairError::Shape("no non-sensitive columns to encode".into()));
    }
    let x = select_named(train, &input_features)?;
    let mut history = Vec::with_capacity(cfg.epochs);
    let [se, sd, sa] = fair_rep_specs(x.cols(), cfg);
    let (mut encoder, mut decoder, mut adversary) = (init_net(&se)?, init_net(&sd)?, init_net(&sa)?);
    let gender = column_target(&train.sensitive);
    for epoch in 0..cfg.epochs {
        let z = encoder.predict(&x)?;
        let mut adv_loss = 0.0;
        for _ in 0..cfg.adversary_steps_per_epoch {
            let (bce, next) = adversary_step(&adversary, &z, &gender, cfg.lr_adversary)?;
            adv_loss = bce;
            adversary = next;
        }
        let g = autoencoder_grads(&encoder, &decoder, &adversary, &x, &gender, cfg.lambda_adv)?;
        if !g.reconstruction.is_finite() || !adv_loss.is_finite() || !g.objective.is_finite() {
            return Err(FairError::Numerical(format!("fair representation loss is NaN at epoch {epoch}")));
        }
        history.push(EpochLosses {
            reconstruction: g.reconstruction,
            adversary: adv_loss,
        });
        encoder = apply_update(&encoder, &g.encoder, cfg.lr_autoencoder)?;
        decoder = apply_update(&decoder, &g.decoder, cfg.lr_autoencoder)?;
        check_nets(&[("encoder", &encoder), ("decoder", &decoder), ("adversary", &adversary)], epoch)?;
    }
    Ok(FairEncoder {
        encoder,
        decoder,
        adversary,
        config: cfg.clone(),
        history,
        input_features,
        scaler: train.scaler.clone(),
    })
}

/// Replaces features with their encodings `e0..e{k-1}`. Labels and the
/// sensitive vector are carried for auditing only. Encodings are marked
/// model-ready (standardized) and have no scaler.
pub fn encode(fe: &FairEncoder, ds: &Dataset) -> Result<Dataset> {
    if !ds.standardized {
        return Err(FairError::Config("encode expects data standardized with the training scaler".into()));
    }
    let x = fe.input_matrix(ds)?;
    if x.cols() != fe.encoder.input_size() {
        return Err(FairError::Shape(format!(
            "encoder expects {} inputs, got {}",
            fe.encoder.input_size(),
            x.cols()
        )));
    }
    let z = fe.encoder.predict(&x)?;
    let mut out = ds.with_features(z, fe.feature_names())?;
    out.standardized = true;
    Ok(out)
}

/// Adversary for the classifier: scalar probability in, gender out.
pub fn adversary_spec(cfg: &FairRepConfig) -> NetSpec {
    NetSpec::new(
        vec![1, cfg.adversary_hidden, 1],
        vec![Activation::Relu, Activation::Sigmoid],
        cfg.seed + ADVERSARY_SEED_OFFSET,
    )
}

/// `−λ·BCE(adversary(p), g)` and its gradient through the classifier `net`,
/// where `p` is the classifier output recorded in `acts`.
pub fn adversarial_penalty(
    net: &DenseNet,
    acts: &Activations,
    adversary: &DenseNet,
    gender: &Matrix,
    lambda: f64,
) -> Result<(f64, GradSet)> {
    let p = acts.output();
    let adv = adversary.forward(p)?;
    let (bce, d_adv) = loss_and_delta(adv.output(), Activation::Sigmoid, gender, Loss::Bce, None)?;
    let (_, mut d_p) = adversary.backward_pre(&adv, &d_adv)?;
    for v in d_p.as_mut_slice() {
        *v *= -lambda;
    }
    let (grads, _) = net.backward(acts, &d_p)?;
    Ok((-lambda * bce, grads))
}

fn check_classifier_input(train: &Dataset) -> Result<()> {
    if !train.standardized {
        return Err(FairError::Config("classifier training requires standardized features".into()));
    }
    if !train.has_both_groups() {
        return Err(FairError::DegenerateData("training data contain a single gender".into()));
    }
    if !train.has_both_labels() {
        return Err(FairError::Training("training set has a single class".into()));
    }
    Ok(())
}

fn wrap(net: DenseNet, train: &Dataset) -> Model {
    let mut m = Model::new(ModelParams::Mlp(net), train.feature_names.clone());
    m.scaler = train.scaler.clone();
    m
}

/// Dense classifier trained against an adversary that predicts gender from
/// its output probability. With `lambda_adv = 0` this is the plain MLP.
pub fn train_adversarial_classifier(train: &Dataset, adv_cfg: &FairRepConfig, cfg: &TrainConfig) -> Result<Model> {
    adv_cfg.validate()?;
    cfg.validate()?;
    check_classifier_input(train)?;
    let gender = column_target(&train.sensitive);
    let lambda = adv_cfg.lambda_adv;
    let mut adversary = init_net(&adversary_spec(adv_cfg))?;
    let penalty = |net: &DenseNet, acts: &Activations, epoch: usize| -> Result<Option<(f64, GradSet)>> {
        if lambda == 0.0 {
            return Ok(None);
        }
        for _ in 0..adv_cfg.adversary_steps_per_epoch {
            adversary = adversary_step(&adversary, acts.output(), &gender, adv_cfg.lr_adversary)?.1;
        }
        check_nets(&[("adversary", &adversary)], epoch)?;
        adversarial_penalty(net, acts, &adversary, &gender, lambda).map(Some)
    };
    let w = vec![1.0; train.n()];
    let (net, _) = train_classifier_net(&train.features, &train.labels, &w, cfg, penalty)?;
    Ok(wrap(net, train))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyKind {
    DemographicParityGap,
    CounterfactualConsistency,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PenaltySpec {
    pub kind: PenaltyKind,
    pub mu: f64,
}

impl Default for PenaltySpec {
    fn default() -> Self {
        PenaltySpec {
            kind: PenaltyKind::DemographicParityGap,
            mu: 1.0,
        }
    }
}

impl PenaltySpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu >= 0.0) || !self.mu.is_finite() {
            return Err(FairError::Config(format!("penalty mu must be finite and >= 0, got {}", self.mu)));
        }
        Ok(())
    }
}

/// `mu·(mean p | unpriv − mean p | priv)²` and its gradient.
pub fn demographic_parity_penalty(net: &DenseNet, acts: &Activations, sensitive: &[u8], mu: f64) -> Result<(f64, GradSet)> {
    let p = acts.output();
    if p.rows() != sensitive.len() {
        return Err(FairError::Shape("sensitive vector does not match batch size".into()));
    }
    let n_u = sensitive.iter().filter(|&&s| s == 1).count() as f64;
    let n_p = sensitive.len() as f64 - n_u;
    if n_u == 0.0 || n_p == 0.0 {
        return Err(FairError::DegenerateData("demographic parity penalty needs both groups".into()));
    }
    let (mut su, mut sp) = (0.0, 0.0);
    for (r, &s) in sensitive.iter().enumerate() {
        if s == 1 {
            su += p.get(r, 0);
        } else {
            sp += p.get(r, 0);
        }
    }
    let gap = su / n_u - sp / n_p;
    let dp: Vec<f64> = sensitive
        .iter()
        .map(|&s| 2.0 * mu * gap * if s == 1 { 1.0 / n_u } else { -1.0 / n_p })
        .collect();
    let (grads, _) = net.backward(acts, &Matrix::from_vec(dp.len(), 1, dp)?)?;
    Ok((mu * gap * gap, grads))
}

/// `mu·mean (p(x) − p(flip(x)))²` and its gradient through both passes.
pub fn counterfactual_penalty(net: &DenseNet, acts: &Activations, x_flip: &Matrix, mu: f64) -> Result<(f64, GradSet)> {
    let p = acts.output();
    let flip_acts = net.forward(x_flip)?;
    let q = flip_acts.output();
    if q.rows() != p.rows() {
        return Err(FairError::Shape("flipped batch does not match batch size".into()));
    }
    let n = p.rows() as f64;
    let diffs: Vec<f64> = p.as_slice().iter().zip(q.as_slice()).map(|(a, b)| a - b).collect();
    let value = mu * diffs.iter().map(|d| d * d).sum::<f64>() / n;
    let dp: Vec<f64> = diffs.iter().map(|d| 2.0 * mu * d / n).collect();
    let dq: Vec<f64> = dp.iter().map(|v| -v).collect();
    let (mut grads, _) = net.backward(acts, &Matrix::from_vec(dp.len(), 1, dp)?)?;
    let (gq, _) = net.backward(&flip_acts, &Matrix::from_vec(dq.len(), 1, dq)?)?;
    grads.add_scaled(&gq, 1.0)?;
    Ok((value, grads))
}

/// Dense classifier minimizing `BCE + penalty`. `mu = 0` is the plain MLP.
pub fn train_penalized_classifier(train: &Dataset, penalty: &PenaltySpec, cfg: &TrainConfig) -> Result<Model> {
    penalty.validate()?;
    cfg.validate()?;
    check_classifier_input(train)?;
    let mu = penalty.mu;
    let x_flip = match penalty.kind {
        PenaltyKind::CounterfactualConsistency if mu > 0.0 => Some(flip_sensitive(train)?.features),
        _ => None,
    };
    let hook = |net: &DenseNet, acts: &Activations, _: usize| -> Result<Option<(f64, GradSet)>> {
        if mu == 0.0 {
            return Ok(None);
        }
        match penalty.kind {
            PenaltyKind::DemographicParityGap => demographic_parity_penalty(net, acts, &train.sensitive, mu).map(Some),
            PenaltyKind::CounterfactualConsistency => {
                counterfactual_penalty(net, acts, x_flip.as_ref().unwrap(), mu).map(Some)
            }
        }
    };
    let w = vec![1.0; train.n()];
    let (net, _) = train_classifier_net(&train.features, &train.labels, &w, cfg, hook)?;
    Ok(wrap(net, train))
}
