//! Supervised learners: K-nearest-neighbor, CART random forests, an
//! ensemble of forests, and a two-hidden-layer neural network.
//!
//! All of them predict class indices in `0..C` through [`Classifier`].

mod forest;
mod knn;
mod mlp;
mod tree;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use forest::{rf_ensemble_fit, rf_fit, ForestEnsemble, ForestParams, RandomForest};
pub use knn::{knn_fit, KnnClassifier};
pub use mlp::{mlp_fit, MlpClassifier, MlpParams, MLP_HIDDEN};
pub use tree::{gini, split_gini, tree_fit, tree_fit_samples, DecisionTree, FeatureSubsample, Node, TreeParams};

use crate::features::FeatureMatrix;
use crate::nn::NnError;

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("k_vote = {k} must be between 1 and the training size {n}")]
    KTooLarge { k: usize, n: usize },
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("input has {found} columns, model expects {expected}")]
    DimMismatch { expected: usize, found: usize },
    #[error("invalid hyperparameters: {0}")]
    InvalidParams(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error(transparent)]
    Training(#[from] NnError),
}

pub type Result<T, E = ClassifierError> = std::result::Result<T, E>;

/// Shared prediction interface.
pub trait Classifier {
    /// One class index in `0..n_classes()` per row of `q`.
    fn predict(&self, q: &FeatureMatrix) -> Result<Vec<usize>>;
    fn n_classes(&self) -> usize;
}

pub(crate) fn check_training(x: &FeatureMatrix) -> Result<()> {
    if x.rows() == 0 || x.n_classes() == 0 {
        return Err(ClassifierError::EmptyTrainingSet);
    }
    Ok(())
}

/// Most frequent label; ties go to the smallest class index.
pub fn majority<I: IntoIterator<Item = usize>>(labels: I, n_classes: usize) -> usize {
    let mut counts = vec![0usize; n_classes];
    for l in labels {
        counts[l] += 1;
    }
    majority_of_counts(&counts)
}

/// Index of the largest count, smallest index on ties.
pub fn majority_of_counts(counts: &[usize]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

/// Classifier choice plus hyperparameters, as written in experiment files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassifierSpec {
    Knn {
        #[serde(default = "default_k_vote")]
        k_vote: usize,
    },
    Rf(#[serde(default)] ForestParams),
    RfEns {
        #[serde(default = "default_n_forests")]
        n_forests: usize,
        #[serde(default = "ForestParams::ensemble_member")]
        forest: ForestParams,
    },
    Nn(#[serde(default)] MlpParams),
}

fn default_k_vote() -> usize {
    5
}

fn default_n_forests() -> usize {
    20
}

impl ClassifierSpec {
    pub fn knn() -> Self {
        ClassifierSpec::Knn { k_vote: default_k_vote() }
    }

    pub fn rf() -> Self {
        ClassifierSpec::Rf(ForestParams::default())
    }

    pub fn rf_ens() -> Self {
        ClassifierSpec::RfEns {
            n_forests: default_n_forests(),
            forest: ForestParams::ensemble_member(),
        }
    }

    pub fn nn() -> Self {
        ClassifierSpec::Nn(MlpParams::default())
    }

    /// Column label used in suite tables.
    pub fn label(&self) -> &'static str {
        match self {
            ClassifierSpec::Knn { .. } => "KNN",
            ClassifierSpec::Rf(_) => "RF",
            ClassifierSpec::RfEns { .. } => "RF-Ens",
            ClassifierSpec::Nn(_) => "NN",
        }
    }

    /// Parses `knn`, `rf`, `rf-ens` or `nn` (case-insensitive) into the
    /// default hyperparameters for that learner.
    pub fn from_label(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "knn" => Some(Self::knn()),
            "rf" => Some(Self::rf()),
            "rf-ens" | "rfens" => Some(Self::rf_ens()),
            "nn" | "mlp" => Some(Self::nn()),
            _ => None,
        }
    }

    pub fn fit(&self, x: &FeatureMatrix, seed: u64) -> Result<FittedClassifier> {
        Ok(match self {
            ClassifierSpec::Knn { k_vote } => FittedClassifier::Knn(knn_fit(x, *k_vote)?),
            ClassifierSpec::Rf(p) => FittedClassifier::Rf(rf_fit(x, p, seed)?),
            ClassifierSpec::RfEns { n_forests, forest } => {
                FittedClassifier::RfEns(rf_ensemble_fit(x, *n_forests, forest, seed)?)
            }
            ClassifierSpec::Nn(p) => FittedClassifier::Nn(mlp_fit(x, p, seed)?),
        })
    }
}

/// A trained model of any of the four kinds.
#[derive(Debug, Clone)]
pub enum FittedClassifier {
    Knn(KnnClassifier),
    Rf(RandomForest),
    RfEns(ForestEnsemble),
    Nn(MlpClassifier),
}

impl Classifier for FittedClassifier {
    fn predict(&self, q: &FeatureMatrix) -> Result<Vec<usize>> {
        match self {
            FittedClassifier::Knn(m) => m.predict(q),
            FittedClassifier::Rf(m) => m.predict(q),
            FittedClassifier::RfEns(m) => m.predict(q),
            FittedClassifier::Nn(m) => m.predict(q),
        }
    }

    fn n_classes(&self) -> usize {
        match self {
            FittedClassifier::Knn(m) => m.n_classes(),
            FittedClassifier::Rf(m) => m.n_classes(),
            FittedClassifier::RfEns(m) => m.n_classes(),
            FittedClassifier::Nn(m) => m.n_classes(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn majority_ties_to_smallest() {
        assert_eq!(majority([2, 1, 2, 1], 3), 1);
        assert_eq!(majority([2, 2, 0], 3), 2);
        assert_eq!(majority_of_counts(&[0, 0, 0]), 0);
    }

    #[test]
    fn spec_labels_round_trip() {
        for spec in [ClassifierSpec::knn(), ClassifierSpec::rf(), ClassifierSpec::rf_ens(), ClassifierSpec::nn()] {
            assert_eq!(ClassifierSpec::from_label(spec.label()), Some(spec.clone()));
            let json = serde_json::to_string(&spec).unwrap();
            assert_eq!(serde_json::from_str::<ClassifierSpec>(&json).unwrap(), spec);
        }
        let knn: ClassifierSpec = serde_json::from_str(r#"{"kind":"knn"}"#).unwrap();
        assert_eq!(knn, ClassifierSpec::Knn { k_vote: 5 });
    }
}
