use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DimredError, Result};
use crate::features::FeatureMatrix;
use crate::nn::{self, Activation, Network, TrainConfig};

/// Layers `0..ENCODER_LAYERS` map the input to the innermost code.
pub const ENCODER_LAYERS: usize = 3;

/// Architecture of a 5-hidden-layer autoencoder: widths
/// `[d0, d1, d2, d3, d4, d5, d6]`, `d3` being the code width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderArch {
    pub dims: [usize; 7],
    pub hidden_activation: Activation,
    pub output_activation: Activation,
    /// Decoder layers reuse transposed encoder weights.
    #[serde(default)]
    pub tied: bool,
}

impl AutoencoderArch {
    pub fn new(dims: [usize; 7]) -> Self {
        Self {
            dims,
            hidden_activation: Activation::Tanh,
            output_activation: Activation::Identity,
            tied: false,
        }
    }

    /// 7 → 6 → 5 → 5 → 5 → 7 → 7, the widths used on the raw attributes.
    pub fn raw_attributes() -> Self {
        Self::new([7, 6, 5, 5, 5, 7, 7])
    }

    /// Default widths for an input of width `d`. Without neighbor context
    /// this follows the raw-attribute pattern `(d, d−1, d−2, d−2, d−2, d, d)`;
    /// for neighbor matrices the outer layers keep 7/8 and 5/8 of `d` and
    /// the code has `code_width` units.
    pub fn default_for(d: usize, neighbor: bool, code_width: usize) -> Self {
        if neighbor {
            let d1 = ((7 * d) as f64 / 8.0).round() as usize;
            let d2 = ((5 * d) as f64 / 8.0).round() as usize;
            Self::new([d, d1, d2, code_width, d2, d1, d])
        } else {
            let d1 = d.saturating_sub(1);
            let d2 = d.saturating_sub(2);
            Self::new([d, d1, d2, d2, d2, d, d])
        }
    }

    pub fn linear(mut self) -> Self {
        self.hidden_activation = Activation::Identity;
        self.output_activation = Activation::Identity;
        self
    }

    pub fn code_width(&self) -> usize {
        self.dims[3]
    }

    /// Widths must be positive and the output must match the input. Tied
    /// weights also need the mirror widths `d4 = d2`, `d5 = d1`.
    pub fn validate(&self) -> Result<()> {
        let d = &self.dims;
        if d.contains(&0) {
            return Err(DimredError::InvalidArchitecture(format!("zero-width layer in {d:?}")));
        }
        if d[6] != d[0] {
            return Err(DimredError::InvalidArchitecture(format!(
                "output width {} must equal input width {}",
                d[6], d[0]
            )));
        }
        if self.tied && (d[4] != d[2] || d[5] != d[1]) {
            return Err(DimredError::InvalidArchitecture(format!(
                "tied weights need mirrored widths (d4 = d2, d5 = d1), got {d:?}"
            )));
        }
        Ok(())
    }

    fn activations(&self) -> [Activation; 6] {
        let h = self.hidden_activation;
        [h, h, h, h, h, self.output_activation]
    }

    fn ties(&self) -> [Option<usize>; 6] {
        if self.tied {
            [None, None, None, Some(2), Some(1), Some(0)]
        } else {
            [None; 6]
        }
    }
}

/// A trained autoencoder with its per-epoch loss log.
#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderModel {
    pub arch: AutoencoderArch,
    pub config: TrainConfig,
    pub network: Network,
    pub loss_log: Vec<f64>,
}

impl AutoencoderModel {
    /// Untrained model with seeded initial weights.
    pub fn init(arch: &AutoencoderArch, cfg: &TrainConfig) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let network = Network::new(&arch.dims, &arch.activations(), &arch.ties(), &mut rng)?;
        Ok(Self {
            arch: arch.clone(),
            config: cfg.clone(),
            network,
            loss_log: Vec::new(),
        })
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.loss_log.last().copied()
    }

    pub fn encode_matrix(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(self.network.forward_partial(x, ENCODER_LAYERS)?)
    }

    pub fn decode_matrix(&self, code: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(self.network.forward_from(code, ENCODER_LAYERS)?)
    }

    pub fn reconstruct(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(self.network.forward(x)?)
    }

    pub fn reconstruction_mse(&self, x: &DMatrix<f64>) -> Result<f64> {
        Ok(nn::mse_loss(&self.reconstruct(x)?, x).0)
    }
}

pub fn ae_train(x: &FeatureMatrix, arch: &AutoencoderArch, cfg: &TrainConfig) -> Result<AutoencoderModel> {
    ae_train_matrix(&x.to_dmatrix(), arch, cfg)
}

/// Minimizes the mean squared reconstruction error by mini-batch SGD.
/// Deterministic for a given `cfg.seed` (initialization and shuffling).
pub fn ae_train_matrix(x: &DMatrix<f64>, arch: &AutoencoderArch, cfg: &TrainConfig) -> Result<AutoencoderModel> {
    let mut model = AutoencoderModel::init(arch, cfg)?;
    if x.ncols() != arch.dims[0] {
        return Err(DimredError::DimMismatch {
            expected: arch.dims[0],
            found: x.ncols(),
        });
    }
    let log = nn::train_sgd(&mut model.network, x, cfg, |out, batch| {
        nn::mse_loss(out, &nn::gather_rows(x, batch))
    })?;
    log::debug!("autoencoder {:?}: final loss {:?}", arch.dims, log.last());
    model.loss_log = log;
    Ok(model)
}

/// The innermost-layer code `E(x)`; labels are carried through.
pub fn ae_encode(model: &AutoencoderModel, x: &FeatureMatrix) -> Result<FeatureMatrix> {
    let code = model.encode_matrix(&x.to_dmatrix())?;
    Ok(x.with_dmatrix(&code, "code")?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dimred::pca_fit_matrix;
    use rand::Rng;

    fn cfg(epochs: usize, lr: f64, momentum: f64) -> TrainConfig {
        TrainConfig {
            learning_rate: lr,
            epochs,
            batch_size: 16,
            seed: 3,
            momentum,
        }
    }

    fn random(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn architecture_rules() {
        assert_eq!(AutoencoderArch::raw_attributes().dims, [7, 6, 5, 5, 5, 7, 7]);
        assert!(AutoencoderArch::raw_attributes().validate().is_ok());
        let mut tied = AutoencoderArch::raw_attributes();
        tied.tied = true;
        assert!(tied.validate().is_err());
        assert!(AutoencoderArch::new([7, 6, 5, 5, 5, 7, 6]).validate().is_err());
        let neigh = AutoencoderArch::default_for(112, true, 40);
        assert_eq!(neigh.dims, [112, 98, 70, 40, 70, 98, 112]);
        assert_eq!(AutoencoderArch::default_for(7, false, 5).dims, [7, 6, 5, 5, 5, 7, 7]);
    }

    #[test]
    fn encode_then_decode_is_forward_pass() {
        let model = AutoencoderModel::init(&AutoencoderArch::raw_attributes(), &cfg(1, 0.01, 0.0)).unwrap();
        let x = random(9, 7, 1);
        let code = model.encode_matrix(&x).unwrap();
        assert_eq!(code.ncols(), 5);
        let via_code = model.decode_matrix(&code).unwrap();
        assert_eq!(via_code, model.reconstruct(&x).unwrap());
    }

    #[test]
    fn gradient_check_untied_and_tied() {
        let x = random(5, 4, 7);
        for tied in [false, true] {
            let mut arch = AutoencoderArch::new([4, 3, 2, 2, 2, 3, 4]);
            arch.tied = tied;
            let model = AutoencoderModel::init(&arch, &cfg(1, 0.01, 0.0)).unwrap();
            let (_, grads) = model.network.loss_and_gradients(&x, |out| nn::mse_loss(out, &x));
            let numeric = nn::numeric_gradient(&model.network, 1e-5, |n| nn::mse_loss(&n.forward(&x).unwrap(), &x).0);
            let err = nn::max_relative_error(&grads.flat(), &numeric, 1e-7);
            assert!(err < 1e-4, "tied={tied} relative error {err}");
        }
    }

    #[test]
    fn identity_shaped_autoencoder_learns_identity() {
        let x = random(64, 4, 2);
        let arch = AutoencoderArch::new([4; 7]).linear();
        let model = ae_train_matrix(&x, &arch, &cfg(1500, 0.02, 0.9)).unwrap();
        let mse = model.reconstruction_mse(&x).unwrap();
        assert!(mse < 1e-4, "mse {mse}");
    }

    #[test]
    fn subspace_data_is_reconstructed() {
        // rank-2 data embedded in 7 dimensions
        let basis = random(2, 7, 4);
        let coeffs = random(200, 2, 5);
        let x = &coeffs * &basis;
        assert!(pca_fit_matrix(&x, 2).unwrap().reconstruction_mse(&x).unwrap() < 1e-20);
        let arch = AutoencoderArch::new([7, 5, 3, 2, 3, 5, 7]).linear();
        let model = ae_train_matrix(&x, &arch, &cfg(800, 0.01, 0.9)).unwrap();
        let mse = model.reconstruction_mse(&x).unwrap();
        assert!(mse < 1e-3, "mse {mse}");
    }

    #[test]
    fn seeded_training_is_bitwise_reproducible() {
        let x = random(40, 7, 8);
        let arch = AutoencoderArch::raw_attributes();
        let a = ae_train_matrix(&x, &arch, &cfg(30, 0.01, 0.0)).unwrap();
        let b = ae_train_matrix(&x, &arch, &cfg(30, 0.01, 0.0)).unwrap();
        assert_eq!(a.loss_log, b.loss_log);
        assert_eq!(a.network, b.network);
    }
}
