use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_training, Classifier, ClassifierError, Result};
use crate::features::FeatureMatrix;
use crate::nn::{self, Activation, Network, TrainConfig};

/// Hidden layer widths of the default network.
pub const MLP_HIDDEN: [usize; 2] = [20, 15];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpParams {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub momentum: f64,
}

impl Default for MlpParams {
    fn default() -> Self {
        Self {
            hidden: MLP_HIDDEN.to_vec(),
            activation: Activation::Relu,
            learning_rate: 0.01,
            epochs: 500,
            batch_size: 32,
            momentum: 0.0,
        }
    }
}

impl MlpParams {
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed,
            momentum: self.momentum,
        }
    }
}

/// Feed-forward network `d_in → hidden… → C` with a softmax output,
/// trained on mean cross-entropy.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpClassifier {
    network: Network,
    params: MlpParams,
    loss_log: Vec<f64>,
}

fn build_network(d_in: usize, n_classes: usize, params: &MlpParams, seed: u64) -> Result<Network> {
    if params.hidden.is_empty() {
        return Err(ClassifierError::InvalidParams("at least one hidden layer is required".into()));
    }
    let mut dims = vec![d_in];
    dims.extend(&params.hidden);
    dims.push(n_classes);
    let mut acts = vec![params.activation; params.hidden.len()];
    acts.push(Activation::Identity);
    let tied = vec![None; acts.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(Network::new(&dims, &acts, &tied, &mut rng)?)
}

/// Trains on all rows of `x`. Weight init and batch order both derive
/// from `seed`.
pub fn mlp_fit(x: &FeatureMatrix, params: &MlpParams, seed: u64) -> Result<MlpClassifier> {
    check_training(x)?;
    let mut network = build_network(x.cols(), x.n_classes(), params, seed)?;
    let xm = x.to_dmatrix();
    let labels = x.labels();
    let mut batch_labels = Vec::with_capacity(params.batch_size);
    let loss_log = nn::train_sgd(&mut network, &xm, &params.train_config(seed ^ 0x6d6c70), |out, batch| {
        batch_labels.clear();
        batch_labels.extend(batch.iter().map(|&i| labels[i]));
        nn::softmax_cross_entropy(out, &batch_labels)
    })?;
    Ok(MlpClassifier {
        network,
        params: params.clone(),
        loss_log,
    })
}

impl MlpClassifier {
    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn params(&self) -> &MlpParams {
        &self.params
    }

    pub fn loss_log(&self) -> &[f64] {
        &self.loss_log
    }

    pub(crate) fn from_parts(network: Network, params: MlpParams, loss_log: Vec<f64>) -> Self {
        Self {
            network,
            params,
            loss_log,
        }
    }

    fn logits(&self, q: &FeatureMatrix) -> Result<DMatrix<f64>> {
        if q.cols() != self.network.input_width() {
            return Err(ClassifierError::DimMismatch {
                expected: self.network.input_width(),
                found: q.cols(),
            });
        }
        Ok(self.network.forward(&q.to_dmatrix())?)
    }

    /// Row-stochastic `rows × C` class probabilities.
    pub fn predict_proba(&self, q: &FeatureMatrix) -> Result<DMatrix<f64>> {
        Ok(nn::softmax(&self.logits(q)?))
    }
}

impl Classifier for MlpClassifier {
    fn predict(&self, q: &FeatureMatrix) -> Result<Vec<usize>> {
        let logits = self.logits(q)?;
        Ok(logits
            .row_iter()
            .map(|row| {
                let mut best = 0;
                for (j, v) in row.iter().enumerate() {
                    if *v > row[best] {
                        best = j;
                    }
                }
                best
            })
            .collect())
    }

    fn n_classes(&self) -> usize {
        self.network.output_width()
    }
}
