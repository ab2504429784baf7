//! Dimension reduction: PCA (linear) and a 5-hidden-layer autoencoder
//! (non-linear) whose innermost layer supplies new predictors.

mod autoencoder;
mod pca;

use thiserror::Error;

pub use autoencoder::{ae_encode, ae_train, ae_train_matrix, AutoencoderArch, AutoencoderModel, ENCODER_LAYERS};
pub use pca::{pca_fit, pca_fit_matrix, pca_transform, PcaModel};

pub use crate::nn::{Activation, TrainConfig};

#[derive(Debug, Error)]
pub enum DimredError {
    #[error("requested {p} components but at most {max} are available (need 1 <= p <= min(rows - 1, cols))")]
    PTooLarge { p: usize, max: usize },
    #[error("input has {found} columns, model expects {expected}")]
    DimMismatch { expected: usize, found: usize },
    #[error("invalid autoencoder architecture: {0}")]
    InvalidArchitecture(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Training(#[from] crate::nn::NnError),
    #[error(transparent)]
    Features(#[from] crate::features::FeatureError),
}

pub type Result<T, E = DimredError> = std::result::Result<T, E>;
