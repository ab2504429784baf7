//! K-fold cross-validation and micro-averaged scoring.

mod cv;
mod folds;
mod metrics;

use thiserror::Error;

pub use cv::{cross_validate, CvResult, CvSummary};
pub use folds::{kfold_plan, FoldPlan};
pub use metrics::{accuracy, error_rate, f1_micro, micro_precision, micro_recall, ConfusionMatrix, F1Micro};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("need at least 2 folds, got {0}")]
    TooFewFolds(usize),
    #[error("{samples} samples cannot fill {k} folds")]
    TooFewSamples { samples: usize, k: usize },
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("{truth} true labels but {predicted} predictions")]
    LengthMismatch { truth: usize, predicted: usize },
    #[error("label {label} outside 0..{n_classes}")]
    LabelOutOfRange { label: usize, n_classes: usize },
    #[error("fold plan covers {plan} samples, data has {data}")]
    PlanMismatch { plan: usize, data: usize },
    #[error("fold {fold}: {message}")]
    Fold { fold: usize, message: String },
}

pub type Result<T, E = EvalError> = std::result::Result<T, E>;
