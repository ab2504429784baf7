//! Dense feed-forward networks with hand-written backpropagation.
//!
//! Both the autoencoder and the neural-network classifier are built on this
//! module. Activations are stored row-per-sample (`batch × width`), weights
//! as `fan_in × fan_out`, so a layer computes `A · W + 1·bᵀ`.

use nalgebra::{DMatrix, RowDVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("non-finite training loss at epoch {epoch}; try a smaller learning rate (currently {learning_rate})")]
    NonFiniteLoss { epoch: usize, learning_rate: f64 },
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("input has {found} columns, network expects {expected}")]
    DimMismatch { expected: usize, found: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, z: &mut DMatrix<f64>) {
        match self {
            Activation::Identity => {}
            Activation::Tanh => z.apply(|v| *v = v.tanh()),
            Activation::Relu => z.apply(|v| *v = v.max(0.0)),
        }
    }

    /// Multiplies `grad` in place by the derivative, expressed through the
    /// activation output `a`.
    fn backprop(self, grad: &mut DMatrix<f64>, a: &DMatrix<f64>) {
        match self {
            Activation::Identity => {}
            Activation::Tanh => grad.zip_apply(a, |g, a| *g *= 1.0 - a * a),
            Activation::Relu => grad.zip_apply(a, |g, a| {
                if a <= 0.0 {
                    *g = 0.0
                }
            }),
        }
    }
}

/// Mini-batch gradient descent settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    #[serde(default)]
    pub momentum: f64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(NnError::InvalidConfig(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(NnError::InvalidConfig("epochs and batch size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(NnError::InvalidConfig(format!("momentum {} must be in [0, 1)", self.momentum)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `fan_in × fan_out`; empty when the layer borrows a transposed
    /// weight matrix from another layer.
    pub weights: DMatrix<f64>,
    pub bias: RowDVector<f64>,
    pub activation: Activation,
    pub tied_to: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
    dims: Vec<usize>,
}

/// Gradients in the same layout as the network's parameters.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<DMatrix<f64>>,
    pub bias: Vec<RowDVector<f64>>,
}

impl Network {
    /// A network with layer widths `dims` (input first) and one activation
    /// per weight layer. `tied[l] = Some(m)` makes layer `l` use the
    /// transpose of layer `m`'s weights.
    pub fn new(
        dims: &[usize],
        activations: &[Activation],
        tied: &[Option<usize>],
        rng: &mut impl Rng,
    ) -> Result<Self, NnError> {
        let n_layers = dims.len().saturating_sub(1);
        if n_layers == 0 || dims.contains(&0) {
            return Err(NnError::InvalidConfig(format!("invalid layer widths {dims:?}")));
        }
        if activations.len() != n_layers || tied.len() != n_layers {
            return Err(NnError::InvalidConfig("one activation and tie entry per layer required".into()));
        }
        let mut layers = Vec::with_capacity(n_layers);
        for l in 0..n_layers {
            let (fan_in, fan_out) = (dims[l], dims[l + 1]);
            let weights = match tied[l] {
                Some(m) => {
                    if m >= n_layers || tied[m].is_some() || dims[m] != fan_out || dims[m + 1] != fan_in {
                        return Err(NnError::InvalidConfig(format!(
                            "layer {l} cannot tie to layer {m}: shapes {fan_in}x{fan_out} vs {}x{}",
                            dims.get(m).copied().unwrap_or(0),
                            dims.get(m + 1).copied().unwrap_or(0)
                        )));
                    }
                    DMatrix::zeros(0, 0)
                }
                None => {
                    let r = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    DMatrix::from_fn(fan_in, fan_out, |_, _| rng.random_range(-r..=r))
                }
            };
            layers.push(Layer {
                weights,
                bias: RowDVector::zeros(fan_out),
                activation: activations[l],
                tied_to: tied[l],
            });
        }
        Ok(Self {
            layers,
            dims: dims.to_vec(),
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_width(&self) -> usize {
        self.dims[0]
    }

    pub fn output_width(&self) -> usize {
        *self.dims.last().unwrap()
    }

    fn effective_weights(&self, l: usize) -> std::borrow::Cow<'_, DMatrix<f64>> {
        match self.layers[l].tied_to {
            Some(m) => std::borrow::Cow::Owned(self.layers[m].weights.transpose()),
            None => std::borrow::Cow::Borrowed(&self.layers[l].weights),
        }
    }

    fn layer_forward(&self, l: usize, input: &DMatrix<f64>) -> DMatrix<f64> {
        let w = self.effective_weights(l);
        let mut z = input * w.as_ref();
        let bias = &self.layers[l].bias;
        for mut row in z.row_iter_mut() {
            row += bias;
        }
        self.layers[l].activation.apply(&mut z);
        z
    }

    /// Output of layers `0..upto` (exclusive); `upto = len` is the full pass.
    pub fn forward_partial(&self, x: &DMatrix<f64>, upto: usize) -> Result<DMatrix<f64>, NnError> {
        if x.ncols() != self.input_width() {
            return Err(NnError::DimMismatch {
                expected: self.input_width(),
                found: x.ncols(),
            });
        }
        let mut a = x.clone();
        for l in 0..upto.min(self.layers.len()) {
            a = self.layer_forward(l, &a);
        }
        Ok(a)
    }

    /// Runs layers `from..` on activations of width `dims[from]`.
    pub fn forward_from(&self, a: &DMatrix<f64>, from: usize) -> Result<DMatrix<f64>, NnError> {
        if a.ncols() != self.dims[from] {
            return Err(NnError::DimMismatch {
                expected: self.dims[from],
                found: a.ncols(),
            });
        }
        let mut a = a.clone();
        for l in from..self.layers.len() {
            a = self.layer_forward(l, &a);
        }
        Ok(a)
    }

    pub fn forward(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>, NnError> {
        self.forward_partial(x, self.layers.len())
    }

    /// Forward pass keeping every activation (input included).
    fn forward_cached(&self, x: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.clone());
        for l in 0..self.layers.len() {
            let next = self.layer_forward(l, acts.last().unwrap());
            acts.push(next);
        }
        acts
    }

    /// Loss and parameter gradients for one batch. `loss_fn` maps the
    /// network output to `(loss, dloss/doutput)`.
    pub fn loss_and_gradients<F>(&self, x: &DMatrix<f64>, mut loss_fn: F) -> (f64, Gradients)
    where
        F: FnMut(&DMatrix<f64>) -> (f64, DMatrix<f64>),
    {
        let acts = self.forward_cached(x);
        let (loss, mut grad) = loss_fn(acts.last().unwrap());
        let n = self.layers.len();
        let mut gw: Vec<DMatrix<f64>> = self.layers.iter().map(|l| DMatrix::zeros(l.weights.nrows(), l.weights.ncols())).collect();
        let mut gb: Vec<RowDVector<f64>> = self.layers.iter().map(|l| RowDVector::zeros(l.bias.len())).collect();
        for l in (0..n).rev() {
            self.layers[l].activation.backprop(&mut grad, &acts[l + 1]);
            let dw = acts[l].tr_mul(&grad);
            gb[l] = grad.row_sum();
            match self.layers[l].tied_to {
                Some(m) => gw[m] += dw.transpose(),
                None => gw[l] += dw,
            }
            if l > 0 {
                let w = self.effective_weights(l);
                grad = &grad * w.transpose();
            }
        }
        (loss, Gradients { weights: gw, bias: gb })
    }

    /// All free parameters flattened: per layer, untied weights then bias.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for layer in &self.layers {
            out.extend(layer.weights.iter().copied());
            out.extend(layer.bias.iter().copied());
        }
        out
    }

    pub fn set_flat_params(&mut self, values: &[f64]) {
        let mut it = values.iter().copied();
        for layer in &mut self.layers {
            layer.weights.iter_mut().for_each(|w| *w = it.next().unwrap());
            layer.bias.iter_mut().for_each(|b| *b = it.next().unwrap());
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Rebuilds a network from stored parameters.
    pub fn from_parts(dims: Vec<usize>, layers: Vec<Layer>) -> Result<Self, NnError> {
        if layers.len() + 1 != dims.len() {
            return Err(NnError::InvalidConfig("layer count does not match widths".into()));
        }
        for (l, layer) in layers.iter().enumerate() {
            let ok_w = match layer.tied_to {
                Some(_) => layer.weights.is_empty(),
                None => layer.weights.nrows() == dims[l] && layer.weights.ncols() == dims[l + 1],
            };
            if !ok_w || layer.bias.len() != dims[l + 1] {
                return Err(NnError::InvalidConfig(format!("layer {l} parameter shapes do not match widths")));
            }
        }
        Ok(Self { layers, dims })
    }
}

impl Gradients {
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.bias) {
            out.extend(w.iter().copied());
            out.extend(b.iter().copied());
        }
        out
    }
}

/// Mean squared error over all entries: `Σ (out − target)² / (rows·cols)`.
pub fn mse_loss(output: &DMatrix<f64>, target: &DMatrix<f64>) -> (f64, DMatrix<f64>) {
    let scale = 1.0 / output.len() as f64;
    let diff = output - target;
    let loss = diff.norm_squared() * scale;
    (loss, diff * (2.0 * scale))
}

/// Row-wise softmax.
pub fn softmax(logits: &DMatrix<f64>) -> DMatrix<f64> {
    let mut p = logits.clone();
    for mut row in p.row_iter_mut() {
        let max = row.max();
        row.apply(|v| *v = (*v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    p
}

/// Mean softmax cross-entropy of `logits` against integer `labels`.
pub fn softmax_cross_entropy(logits: &DMatrix<f64>, labels: &[usize]) -> (f64, DMatrix<f64>) {
    let mut p = softmax(logits);
    let b = labels.len() as f64;
    let mut loss = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        loss -= p[(i, y)].max(f64::MIN_POSITIVE).ln();
        p[(i, y)] -= 1.0;
    }
    (loss / b, p / b)
}

/// Gathers `rows` of `x` into a new matrix.
pub fn gather_rows(x: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), x.ncols(), |r, c| x[(rows[r], c)])
}

/// Plain mini-batch SGD with optional momentum. `batch_loss` receives the
/// network output and the batch's row indices and returns the loss and its
/// gradient. Returns the sample-weighted mean batch loss per epoch.
pub fn train_sgd<F>(net: &mut Network, x: &DMatrix<f64>, cfg: &TrainConfig, mut batch_loss: F) -> Result<Vec<f64>, NnError>
where
    F: FnMut(&DMatrix<f64>, &[usize]) -> (f64, DMatrix<f64>),
{
    cfg.validate()?;
    if x.ncols() != net.input_width() {
        return Err(NnError::DimMismatch {
            expected: net.input_width(),
            found: x.ncols(),
        });
    }
    let n = x.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut vel_w: Vec<DMatrix<f64>> = net.layers.iter().map(|l| DMatrix::zeros(l.weights.nrows(), l.weights.ncols())).collect();
    let mut vel_b: Vec<RowDVector<f64>> = net.layers.iter().map(|l| RowDVector::zeros(l.bias.len())).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let xb = gather_rows(x, batch);
            let (loss, grads) = net.loss_and_gradients(&xb, |out| batch_loss(out, batch));
            if !loss.is_finite() {
                return Err(NnError::NonFiniteLoss {
                    epoch,
                    learning_rate: cfg.learning_rate,
                });
            }
            total += loss * batch.len() as f64;
            for (l, layer) in net.layers.iter_mut().enumerate() {
                vel_w[l] *= cfg.momentum;
                vel_w[l] -= &grads.weights[l] * cfg.learning_rate;
                layer.weights += &vel_w[l];
                vel_b[l] *= cfg.momentum;
                vel_b[l] -= &grads.bias[l] * cfg.learning_rate;
                layer.bias += &vel_b[l];
            }
        }
        let epoch_loss = total / n as f64;
        if !epoch_loss.is_finite() {
            return Err(NnError::NonFiniteLoss {
                epoch,
                learning_rate: cfg.learning_rate,
            });
        }
        log.push(epoch_loss);
    }
    Ok(log)
}

/// Central finite-difference gradient of `loss` with respect to every
/// parameter of `net`. Test helper for the analytic gradients.
pub fn numeric_gradient<F>(net: &Network, eps: f64, mut loss: F) -> Vec<f64>
where
    F: FnMut(&Network) -> f64,
{
    let base = net.flat_params();
    let mut probe = net.clone();
    let mut out = Vec::with_capacity(base.len());
    let mut params = base.clone();
    for i in 0..base.len() {
        params[i] = base[i] + eps;
        probe.set_flat_params(&params);
        let up = loss(&probe);
        params[i] = base[i] - eps;
        probe.set_flat_params(&params);
        let down = loss(&probe);
        params[i] = base[i];
        out.push((up - down) / (2.0 * eps));
    }
    out
}

/// Largest `|a − n| / max(|a|, |n|, floor)` over all entries.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}
