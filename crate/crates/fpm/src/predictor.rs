//! Sliding-window feature predictor: a fully connected network with tanh
//! hidden units and an identity output layer, trained by full-batch
//! gradient descent on the squared-error loss. Full-batch keeps training
//! free of ordering nondeterminism; the datasets here are tiny.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Layer widths `[n_in, h1, ..., n_out]`. Hidden layers use tanh, the
/// output layer is linear.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub sizes: Vec<usize>,
}

impl LayerSpec {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::InvalidConfig(
                "layer spec needs at least input and output widths".into(),
            ));
        }
        if sizes.contains(&0) {
            return Err(Error::InvalidConfig("layer widths must be >= 1".into()));
        }
        Ok(Self { sizes })
    }

    pub fn n_in(&self) -> usize {
        self.sizes[0]
    }

    pub fn n_out(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn n_layers(&self) -> usize {
        self.sizes.len() - 1
    }
}

/// Weights and biases of the network. `weights[l]` is `fan_out x fan_in`
/// row-major for layer `l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub spec: LayerSpec,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub seed: u64,
}

/// Learning-rate / epoch budget for [`mlp_train`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            epochs: 5000,
            seed: 42,
        }
    }
}

/// Loss trajectory of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub initial_loss: f64,
    pub final_loss: f64,
    pub epochs_run: usize,
    pub loss_curve: Vec<f64>,
}

/// One supervised example: a window of concatenated feature vectors and
/// the feature vector that follows it.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainPair {
    pub input: Vec<f64>,
    pub target: Vec<f64>,
}

/// Parameter gradients, same shapes as the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    fn zeros_like(model: &MlpModel) -> Self {
        Self {
            weights: model.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: model.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    fn add(&mut self, other: &Gradients) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

/// Turn an age-ordered feature-vector list into supervised pairs: inputs
/// are `k` consecutive vectors concatenated in order, the target is the
/// vector that follows the window.
pub fn build_training_pairs(gfvs: &[Vec<f64>], k: usize) -> Result<Vec<TrainPair>> {
    if k == 0 {
        return Err(Error::InvalidConfig("window size must be >= 1".into()));
    }
    let m = gfvs.len();
    if m < k + 1 {
        return Err(Error::SequenceTooShort(format!(
            "need at least {} feature vectors for window {k}, got {m}",
            k + 1
        )));
    }
    Ok((0..m - k)
        .map(|i| TrainPair {
            input: gfvs[i..i + k].concat(),
            target: gfvs[i + k].clone(),
        })
        .collect())
}

/// Initialize a model: weights uniform within the Glorot bound
/// `sqrt(6 / (fan_in + fan_out))`, biases zero. The same seed always
/// produces the same parameters.
pub fn mlp_init(spec: &LayerSpec, seed: u64) -> MlpModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weights = Vec::with_capacity(spec.n_layers());
    let mut biases = Vec::with_capacity(spec.n_layers());
    for l in 0..spec.n_layers() {
        let fan_in = spec.sizes[l];
        let fan_out = spec.sizes[l + 1];
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        weights.push(
            (0..fan_out * fan_in)
                .map(|_| {
                    let u: f64 = rng.gen();
                    bound * (2.0 * u - 1.0)
                })
                .collect(),
        );
        biases.push(vec![0.0; fan_out]);
    }
    MlpModel {
        spec: spec.clone(),
        weights,
        biases,
        seed,
    }
}

impl MlpModel {
    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.spec.n_in() {
            return Err(Error::LengthMismatch(format!(
                "input length {} does not match model input width {}",
                input.len(),
                self.spec.n_in()
            )));
        }
        Ok(())
    }

    /// Activations after every layer, `trace[0]` being the input itself.
    fn forward_trace(&self, input: &[f64]) -> Vec<Vec<f64>> {
        let mut trace = Vec::with_capacity(self.spec.n_layers() + 1);
        trace.push(input.to_vec());
        for l in 0..self.spec.n_layers() {
            let fan_in = self.spec.sizes[l];
            let prev = trace.last().unwrap();
            let mut z = self.biases[l].clone();
            for (r, zr) in z.iter_mut().enumerate() {
                let row = &self.weights[l][r * fan_in..(r + 1) * fan_in];
                *zr += row.iter().zip(prev).map(|(w, a)| w * a).sum::<f64>();
            }
            if l + 1 < self.spec.n_layers() {
                for v in &mut z {
                    *v = v.tanh();
                }
            }
            trace.push(z);
        }
        trace
    }
}

/// Forward pass.
pub fn mlp_forward(model: &MlpModel, input: &[f64]) -> Result<Vec<f64>> {
    model.check_input(input)?;
    Ok(model.forward_trace(input).pop().unwrap())
}

fn pair_loss(model: &MlpModel, pair: &TrainPair) -> Result<f64> {
    let out = mlp_forward(model, &pair.input)?;
    if out.len() != pair.target.len() {
        return Err(Error::LengthMismatch(format!(
            "target length {} does not match model output width {}",
            pair.target.len(),
            out.len()
        )));
    }
    Ok(0.5
        * out
            .iter()
            .zip(&pair.target)
            .map(|(o, t)| (o - t) * (o - t))
            .sum::<f64>())
}

/// Exact reverse-mode gradients of the loss `0.5 ||out - target||^2`.
pub fn mlp_backprop(model: &MlpModel, input: &[f64], target: &[f64]) -> Result<(Gradients, f64)> {
    model.check_input(input)?;
    if target.len() != model.spec.n_out() {
        return Err(Error::LengthMismatch(format!(
            "target length {} does not match model output width {}",
            target.len(),
            model.spec.n_out()
        )));
    }
    let trace = model.forward_trace(input);
    let out = trace.last().unwrap();
    let loss = 0.5
        * out
            .iter()
            .zip(target)
            .map(|(o, t)| (o - t) * (o - t))
            .sum::<f64>();

    let mut grads = Gradients::zeros_like(model);
    // identity output layer: delta is the raw residual
    let mut delta: Vec<f64> = out.iter().zip(target).map(|(o, t)| o - t).collect();
    for l in (0..model.spec.n_layers()).rev() {
        let fan_in = model.spec.sizes[l];
        let prev = &trace[l];
        grads.biases[l].copy_from_slice(&delta);
        for (r, dr) in delta.iter().enumerate() {
            let row = &mut grads.weights[l][r * fan_in..(r + 1) * fan_in];
            for (g, a) in row.iter_mut().zip(prev) {
                *g = dr * a;
            }
        }
        if l > 0 {
            // tanh derivative from the stored activation: 1 - a^2
            let mut next = vec![0.0; fan_in];
            for (c, nc) in next.iter_mut().enumerate() {
                let mut s = 0.0;
                for (r, dr) in delta.iter().enumerate() {
                    s += model.weights[l][r * fan_in + c] * dr;
                }
                let a = prev[c];
                *nc = s * (1.0 - a * a);
            }
            delta = next;
        }
    }
    Ok((grads, loss))
}

/// Full-batch gradient descent. Gradients are averaged over all pairs each
/// epoch before the update, so the result depends only on the inputs and
/// the config. `final_loss` is evaluated after the last update.
pub fn mlp_train(
    model: &MlpModel,
    pairs: &[TrainPair],
    cfg: &TrainConfig,
) -> Result<(MlpModel, TrainReport)> {
    if pairs.is_empty() {
        return Err(Error::DegenerateInput("no training pairs".into()));
    }
    if !(0.0..=1.0).contains(&cfg.learning_rate) {
        return Err(Error::InvalidConfig(format!(
            "learning rate {} outside [0, 1]",
            cfg.learning_rate
        )));
    }
    if cfg.epochs == 0 {
        return Err(Error::InvalidConfig("epochs must be >= 1".into()));
    }
    let mut model = model.clone();
    let inv = 1.0 / pairs.len() as f64;
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut acc = Gradients::zeros_like(&model);
        let mut loss_sum = 0.0;
        for pair in pairs {
            let (g, loss) = mlp_backprop(&model, &pair.input, &pair.target)?;
            acc.add(&g);
            loss_sum += loss;
        }
        let mean_loss = loss_sum * inv;
        curve.push(mean_loss);
        if !mean_loss.is_finite() {
            let report = TrainReport {
                initial_loss: curve[0],
                final_loss: mean_loss,
                epochs_run: epoch + 1,
                loss_curve: curve,
            };
            return Err(Error::NonFiniteLoss {
                epoch,
                report: Box::new(report),
            });
        }
        let step = cfg.learning_rate * inv;
        for (w, g) in model.weights.iter_mut().zip(&acc.weights) {
            for (wi, gi) in w.iter_mut().zip(g) {
                *wi -= step * gi;
            }
        }
        for (b, g) in model.biases.iter_mut().zip(&acc.biases) {
            for (bi, gi) in b.iter_mut().zip(g) {
                *bi -= step * gi;
            }
        }
    }
    let final_loss = pairs
        .iter()
        .map(|p| pair_loss(&model, p))
        .sum::<Result<f64>>()?
        * inv;
    let report = TrainReport {
        initial_loss: curve[0],
        final_loss,
        epochs_run: cfg.epochs,
        loss_curve: curve,
    };
    Ok((model, report))
}

/// Predict the feature vector that follows `window` (the `k` most recent
/// vectors in age order).
pub fn predict_next(model: &MlpModel, window: &[Vec<f64>]) -> Result<Vec<f64>> {
    let r = model.spec.n_out();
    if window.len() * r != model.spec.n_in() {
        return Err(Error::LengthMismatch(format!(
            "window of {} vectors of rank {r} does not match model input width {}",
            window.len(),
            model.spec.n_in()
        )));
    }
    for (i, g) in window.iter().enumerate() {
        if g.len() != r {
            return Err(Error::LengthMismatch(format!(
                "window entry {i} has length {}, expected {r}",
                g.len()
            )));
        }
    }
    mlp_forward(model, &window.concat())
}
