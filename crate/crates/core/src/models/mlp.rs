//! Dense-network classifier: `d → hidden (relu) → 1 (sigmoid)` trained by
//! full-batch gradient descent on weighted cross-entropy.

use super::TrainConfig;
use crate::error::{FairError, Result};
use crate::matrix::Matrix;
use crate::neuralnet::{apply_update, init_net, loss_and_delta, Activation, Activations, DenseNet, GradSet, Loss, NetSpec};

/// Extra objective term evaluated once per epoch on the current net and its
/// activations over the training inputs. Returning `None` adds nothing.
pub trait ClassifierPenalty {
    fn evaluate(&mut self, net: &DenseNet, acts: &Activations, epoch: usize) -> Result<Option<(f64, GradSet)>>;
}

impl<F> ClassifierPenalty for F
where
    F: FnMut(&DenseNet, &Activations, usize) -> Result<Option<(f64, GradSet)>>,
{
    fn evaluate(&mut self, net: &DenseNet, acts: &Activations, epoch: usize) -> Result<Option<(f64, GradSet)>> {
        self(net, acts, epoch)
    }
}

pub fn classifier_spec(d: usize, cfg: &TrainConfig) -> NetSpec {
    NetSpec::new(
        vec![d, cfg.mlp_hidden, 1],
        vec![Activation::Relu, Activation::Sigmoid],
        cfg.seed,
    )
}

/// Shared training loop for the plain, adversarial and penalized
/// classifiers. Returns the net and the per-epoch total objective.
pub fn train_classifier_net<P: ClassifierPenalty>(
    x: &Matrix,
    y: &[u8],
    weights: &[f64],
    cfg: &TrainConfig,
    mut penalty: P,
) -> Result<(DenseNet, Vec<f64>)> {
    let mut net = init_net(&classifier_spec(x.cols(), cfg))?;
    let targets = Matrix::from_vec(y.len(), 1, y.iter().map(|&v| f64::from(v)).collect())?;
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let acts = net.forward(x)?;
        let (bce, delta) = loss_and_delta(acts.output(), Activation::Sigmoid, &targets, Loss::Bce, Some(weights))?;
        let (mut grads, _) = net.backward_pre(&acts, &delta)?;
        let mut total = bce;
        let mut penalized = false;
        if let Some((value, extra)) = penalty.evaluate(&net, &acts, epoch)? {
            total += value;
            grads.add_scaled(&extra, 1.0)?;
            penalized = true;
        }
        if !total.is_finite() {
            return Err(FairError::Numerical(format!("classifier loss is NaN at epoch {epoch}")));
        }
        // A penalty may move with outside state (an adversary), so a flat
        // objective is no evidence of convergence there.
        let stop = !penalized && history.last().is_some_and(|prev: &f64| (prev - total).abs() < cfg.tolerance);
        history.push(total);
        if stop {
            break;
        }
        net = apply_update(&net, &grads, cfg.learning_rate)?;
    }
    Ok((net, history))
}

pub(crate) fn fit(x: &Matrix, y: &[u8], w: &[f64], cfg: &TrainConfig) -> Result<DenseNet> {
    let none = |_: &DenseNet, _: &Activations, _: usize| -> Result<Option<(f64, GradSet)>> { Ok(None) };
    train_classifier_net(x, y, w, cfg, none).map(|(net, _)| net)
}
