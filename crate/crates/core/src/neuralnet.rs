//! Minimal dense feed-forward networks: Glorot init, forward pass, exact
//! reverse-mode gradients, plain SGD updates and a finite-difference
//! gradient checker.
//!
//! Nets are values. Updates return a new net and leave the input alone.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::sigmoid;
use crate::error::{FairError, Result};
use crate::matrix::Matrix;

/// Probabilities are clamped to `[LOG_CLAMP, 1 - LOG_CLAMP]` inside logs.
const LOG_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Sigmoid,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => sigmoid(z),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation output.
    #[inline]
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    Mse,
    Bce,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetSpec {
    pub layer_sizes: Vec<usize>,
    pub activations: Vec<Activation>,
    pub seed: u64,
}

impl NetSpec {
    pub fn new(layer_sizes: Vec<usize>, activations: Vec<Activation>, seed: u64) -> Self {
        NetSpec {
            layer_sizes,
            activations,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(FairError::Config(format!(
                "layer_sizes needs at least 2 entries, got {}",
                self.layer_sizes.len()
            )));
        }
        if self.activations.len() != self.layer_sizes.len() - 1 {
            return Err(FairError::Config(format!(
                "{} activations for {} layers",
                self.activations.len(),
                self.layer_sizes.len() - 1
            )));
        }
        if self.layer_sizes.contains(&0) {
            return Err(FairError::Config("layer sizes must be positive".into()));
        }
        Ok(())
    }
}

/// Weights are stored `out × in` per layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseNet {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
    pub spec: NetSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradSet {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

impl GradSet {
    pub fn zeros_like(net: &DenseNet) -> GradSet {
        GradSet {
            weights: net
                .weights
                .iter()
                .map(|w| Matrix::zeros(w.rows(), w.cols()))
                .collect(),
            biases: net.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    /// `self + scale · other`.
    pub fn add_scaled(&mut self, other: &GradSet, scale: f64) -> Result<()> {
        if !self.congruent(other) {
            return Err(FairError::Shape("gradient sets have different shapes".into()));
        }
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            for (x, y) in a.as_mut_slice().iter_mut().zip(b.as_slice()) {
                *x += scale * y;
            }
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += scale * y;
            }
        }
        Ok(())
    }

    fn congruent(&self, other: &GradSet) -> bool {
        self.weights.len() == other.weights.len()
            && self
                .weights
                .iter()
                .zip(&other.weights)
                .all(|(a, b)| a.rows() == b.rows() && a.cols() == b.cols())
            && self
                .biases
                .iter()
                .zip(&other.biases)
                .all(|(a, b)| a.len() == b.len())
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(b);
        }
        out
    }
}

/// Output of every layer; `layers[0]` is the input, the last is the output.
#[derive(Debug, Clone)]
pub struct Activations {
    pub layers: Vec<Matrix>,
}

impl Activations {
    pub fn output(&self) -> &Matrix {
        self.layers.last().expect("activations always hold the input")
    }
}

/// Glorot-uniform weights, zero biases.
pub fn init_net(spec: &NetSpec) -> Result<DenseNet> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for pair in spec.layer_sizes.windows(2) {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let r = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out)
            .map(|_| rng.random_range(-r..=r))
            .collect();
        weights.push(Matrix::from_vec(fan_out, fan_in, data)?);
        biases.push(vec![0.0; fan_out]);
    }
    Ok(DenseNet {
        weights,
        biases,
        spec: spec.clone(),
    })
}

impl DenseNet {
    pub fn input_size(&self) -> usize {
        self.spec.layer_sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.spec.layer_sizes.last().unwrap()
    }

    pub fn output_activation(&self) -> Activation {
        *self.spec.activations.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| w.as_slice().len() + b.len())
            .sum()
    }

    pub fn all_finite(&self) -> bool {
        self.weights.iter().all(Matrix::all_finite)
            && self.biases.iter().flatten().all(|v| v.is_finite())
    }

    /// Reads or writes parameter `k` in the flattening order used by
    /// [`GradSet::flatten`].
    fn param_mut(&mut self, mut k: usize) -> &mut f64 {
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            let nw = w.as_slice().len();
            if k < nw {
                return &mut w.as_mut_slice()[k];
            }
            k -= nw;
            if k < b.len() {
                return &mut b[k];
            }
            k -= b.len();
        }
        panic!("parameter index out of range")
    }

    pub fn forward(&self, x: &Matrix) -> Result<Activations> {
        if x.cols() != self.input_size() {
            return Err(FairError::Shape(format!(
                "input width {} does not match net input size {}",
                x.cols(),
                self.input_size()
            )));
        }
        let mut layers = Vec::with_capacity(self.weights.len() + 1);
        layers.push(x.clone());
        for ((w, b), act) in self.weights.iter().zip(&self.biases).zip(&self.spec.activations) {
            let input = layers.last().unwrap();
            let mut out = Matrix::zeros(input.rows(), w.rows());
            for r in 0..input.rows() {
                let a = input.row(r);
                let o = out.row_mut(r);
                for (j, oj) in o.iter_mut().enumerate() {
                    let z = w.row(j).iter().zip(a).fold(b[j], |acc, (wv, av)| acc + wv * av);
                    *oj = act.apply(z);
                }
            }
            layers.push(out);
        }
        Ok(Activations { layers })
    }

    /// Forward pass returning only the final layer.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.forward(x)?.layers.pop().unwrap())
    }

    /// Backpropagates `delta`, the loss gradient with respect to the final
    /// layer's pre-activation. Returns parameter gradients and the gradient
    /// with respect to the network input.
    pub fn backward_pre(&self, acts: &Activations, delta: &Matrix) -> Result<(GradSet, Matrix)> {
        let out = acts.output();
        if delta.rows() != out.rows() || delta.cols() != out.cols() {
            return Err(FairError::Shape("delta does not match the output shape".into()));
        }
        let mut grads = GradSet::zeros_like(self);
        let mut delta = delta.clone();
        for l in (0..self.weights.len()).rev() {
            let input = &acts.layers[l];
            let w = &self.weights[l];
            let gw = &mut grads.weights[l];
            let gb = &mut grads.biases[l];
            for r in 0..input.rows() {
                let dr = delta.row(r);
                let ar = input.row(r);
                for (j, &dj) in dr.iter().enumerate() {
                    if dj == 0.0 {
                        continue;
                    }
                    gb[j] += dj;
                    for (g, &a) in gw.row_mut(j).iter_mut().zip(ar) {
                        *g += dj * a;
                    }
                }
            }
            let mut prev = Matrix::zeros(input.rows(), input.cols());
            for r in 0..input.rows() {
                let dr = delta.row(r);
                let pr = prev.row_mut(r);
                for (j, &dj) in dr.iter().enumerate() {
                    if dj == 0.0 {
                        continue;
                    }
                    for (p, &wv) in pr.iter_mut().zip(w.row(j)) {
                        *p += dj * wv;
                    }
                }
            }
            if l > 0 {
                let act = self.spec.activations[l - 1];
                for (p, &a) in prev.as_mut_slice().iter_mut().zip(input.as_slice()) {
                    *p *= act.derivative_from_output(a);
                }
            }
            delta = prev;
        }
        Ok((grads, delta))
    }

    /// Like [`DenseNet::backward_pre`] but takes the gradient with respect to
    /// the final activation output.
    pub fn backward(&self, acts: &Activations, output_grad: &Matrix) -> Result<(GradSet, Matrix)> {
        let act = self.output_activation();
        let mut delta = output_grad.clone();
        let out = acts.output();
        if delta.rows() != out.rows() || delta.cols() != out.cols() {
            return Err(FairError::Shape("output gradient does not match the output shape".into()));
        }
        for (d, &a) in delta.as_mut_slice().iter_mut().zip(out.as_slice()) {
            *d *= act.derivative_from_output(a);
        }
        self.backward_pre(acts, &delta)
    }
}

/// Row weights normalized to sum to one.
fn normalized_weights(n: usize, sample_weights: Option<&[f64]>) -> Result<Vec<f64>> {
    match sample_weights {
        None => Ok(vec![1.0 / n as f64; n]),
        Some(w) => {
            if w.len() != n {
                return Err(FairError::Shape(format!("{} sample weights for {n} rows", w.len())));
            }
            let total: f64 = w.iter().sum();
            if !(total > 0.0) || w.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                return Err(FairError::Config("sample weights must be finite, >= 0, not all 0".into()));
            }
            Ok(w.iter().map(|v| v / total).collect())
        }
    }
}

/// Weighted-mean loss of `output` against `targets` and its gradient with
/// respect to the final pre-activation.
pub fn loss_and_delta(
    output: &Matrix,
    output_activation: Activation,
    targets: &Matrix,
    loss: Loss,
    sample_weights: Option<&[f64]>,
) -> Result<(f64, Matrix)> {
    if targets.rows() != output.rows() || targets.cols() != output.cols() {
        return Err(FairError::Shape(format!(
            "targets {}x{} do not match outputs {}x{}",
            targets.rows(),
            targets.cols(),
            output.rows(),
            output.cols()
        )));
    }
    let w = normalized_weights(output.rows(), sample_weights)?;
    let k = output.cols() as f64;
    let mut delta = Matrix::zeros(output.rows(), output.cols());
    let mut total = 0.0;
    match loss {
        Loss::Mse => {
            for r in 0..output.rows() {
                let mut row_loss = 0.0;
                for c in 0..output.cols() {
                    let a = output.get(r, c);
                    let diff = a - targets.get(r, c);
                    row_loss += diff * diff;
                    let g = w[r] * 2.0 * diff / k;
                    delta.set(r, c, g * output_activation.derivative_from_output(a));
                }
                total += w[r] * row_loss / k;
            }
        }
        Loss::Bce => {
            if output_activation != Activation::Sigmoid {
                return Err(FairError::Config("bce loss requires a sigmoid output layer".into()));
            }
            for r in 0..output.rows() {
                let mut row_loss = 0.0;
                for c in 0..output.cols() {
                    let a = output.get(r, c);
                    let t = targets.get(r, c);
                    if t != 0.0 && t != 1.0 {
                        return Err(FairError::Config(format!("bce target {t} not in {{0,1}}")));
                    }
                    let p = a.clamp(LOG_CLAMP, 1.0 - LOG_CLAMP);
                    row_loss -= t * p.ln() + (1.0 - t) * (1.0 - p).ln();
                    delta.set(r, c, w[r] * (a - t) / k);
                }
                total += w[r] * row_loss / k;
            }
        }
    }
    Ok((total, delta))
}

/// Mean (or weighted-mean) loss over rows together with exact gradients.
pub fn loss_and_grads(
    net: &DenseNet,
    x: &Matrix,
    targets: &Matrix,
    loss: Loss,
    sample_weights: Option<&[f64]>,
) -> Result<(f64, GradSet)> {
    let acts = net.forward(x)?;
    let (value, delta) =
        loss_and_delta(acts.output(), net.output_activation(), targets, loss, sample_weights)?;
    let (grads, _) = net.backward_pre(&acts, &delta)?;
    Ok((value, grads))
}

/// Loss value only.
pub fn loss_value(
    net: &DenseNet,
    x: &Matrix,
    targets: &Matrix,
    loss: Loss,
    sample_weights: Option<&[f64]>,
) -> Result<f64> {
    let out = net.predict(x)?;
    Ok(loss_and_delta(&out, net.output_activation(), targets, loss, sample_weights)?.0)
}

/// Plain SGD step: `params − lr · grads`.
pub fn apply_update(net: &DenseNet, grads: &GradSet, lr: f64) -> Result<DenseNet> {
    if !(lr >= 0.0) || !lr.is_finite() {
        return Err(FairError::Config(format!("learning rate {lr} must be finite and >= 0")));
    }
    if !GradSet::zeros_like(net).congruent(grads) || grads.weights.len() != net.weights.len() {
        return Err(FairError::Shape("gradients do not match the network shape".into()));
    }
    let mut next = net.clone();
    for (w, g) in next.weights.iter_mut().zip(&grads.weights) {
        for (p, d) in w.as_mut_slice().iter_mut().zip(g.as_slice()) {
            *p -= lr * d;
        }
    }
    for (b, g) in next.biases.iter_mut().zip(&grads.biases) {
        for (p, d) in b.iter_mut().zip(g) {
            *p -= lr * d;
        }
    }
    Ok(next)
}

/// Largest relative error `|a−b| / max(1e-8, |a|+|b|)` between `analytic`
/// and central differences of `objective` over every parameter of `net`.
pub fn finite_difference_check<F>(
    net: &DenseNet,
    analytic: &GradSet,
    eps: f64,
    mut objective: F,
) -> Result<f64>
where
    F: FnMut(&DenseNet) -> Result<f64>,
{
    if !(eps > 0.0) {
        return Err(FairError::Config("eps must be > 0".into()));
    }
    if !net.all_finite() {
        return Err(FairError::Numerical("network has a non-finite parameter".into()));
    }
    let flat = analytic.flatten();
    if flat.len() != net.param_count() {
        return Err(FairError::Shape("gradients do not match the network shape".into()));
    }
    let mut probe = net.clone();
    let mut worst = 0.0_f64;
    for (k, &a) in flat.iter().enumerate() {
        let orig = *probe.param_mut(k);
        *probe.param_mut(k) = orig + eps;
        let up = objective(&probe)?;
        *probe.param_mut(k) = orig - eps;
        let down = objective(&probe)?;
        *probe.param_mut(k) = orig;
        let numeric = (up - down) / (2.0 * eps);
        let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
        if !rel.is_finite() {
            return Err(FairError::Numerical(format!("non-finite gradient at parameter {k}")));
        }
        worst = worst.max(rel);
    }
    Ok(worst)
}

/// Compares backprop gradients of `loss` against central differences.
pub fn grad_check(net: &DenseNet, x: &Matrix, targets: &Matrix, loss: Loss, eps: f64) -> Result<f64> {
    if !net.all_finite() {
        return Err(FairError::Numerical("network has a non-finite parameter".into()));
    }
    let (_, grads) = loss_and_grads(net, x, targets, loss, None)?;
    finite_difference_check(net, &grads, eps, |n| loss_value(n, x, targets, loss, None))
}
