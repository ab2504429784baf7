use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{tree_fit_samples, DecisionTree, FeatureSubsample, TreeParams};
use super::{check_training, majority, Classifier, ClassifierError, Result};
use crate::features::FeatureMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub features: FeatureSubsample,
    /// Draw each tree's rows with replacement; `false` trains every tree on
    /// the full set in order.
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: None,
            features: FeatureSubsample::Sqrt,
            bootstrap: true,
        }
    }
}

impl ForestParams {
    /// One member of the default ensemble: 10 trees of depth at most 20.
    pub fn ensemble_member() -> Self {
        Self {
            n_trees: 10,
            max_depth: Some(20),
            ..Self::default()
        }
    }

    fn tree_params(&self) -> TreeParams {
        TreeParams {
            max_depth: self.max_depth,
            features: self.features,
        }
    }
}

/// Bagged CART trees with per-tree seeds `seed + t`.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomForest {
    trees: Vec<DecisionTree>,
    params: ForestParams,
    seed: u64,
    n_classes: usize,
    n_features: usize,
}

/// Bootstrap row draws for tree `t`, or the identity when bootstrapping
/// is off.
fn tree_samples(n: usize, bootstrap: bool, rng: &mut impl Rng) -> Vec<usize> {
    if bootstrap {
        (0..n).map(|_| rng.random_range(0..n)).collect()
    } else {
        (0..n).collect()
    }
}

pub fn rf_fit(x: &FeatureMatrix, params: &ForestParams, seed: u64) -> Result<RandomForest> {
    check_training(x)?;
    if params.n_trees == 0 {
        return Err(ClassifierError::InvalidParams("a forest needs at least one tree".into()));
    }
    let tp = params.tree_params();
    let trees = (0..params.n_trees)
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(t as u64));
            let mut samples = tree_samples(x.rows(), params.bootstrap, &mut rng);
            tree_fit_samples(x, &mut samples, &tp, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RandomForest {
        trees,
        params: params.clone(),
        seed,
        n_classes: x.n_classes(),
        n_features: x.cols(),
    })
}

impl RandomForest {
    pub fn trees(&self) -> &[DecisionTree] {
        &self.trees
    }

    pub fn params(&self) -> &ForestParams {
        &self.params
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub(crate) fn from_parts(
        trees: Vec<DecisionTree>,
        params: ForestParams,
        seed: u64,
        n_classes: usize,
        n_features: usize,
    ) -> Self {
        Self {
            trees,
            params,
            seed,
            n_classes,
            n_features,
        }
    }

    fn predict_row(&self, row: &[f64]) -> usize {
        majority(self.trees.iter().map(|t| t.predict_row(row)), self.n_classes)
    }
}

fn check_width(expected: usize, q: &FeatureMatrix) -> Result<()> {
    if q.cols() != expected {
        return Err(ClassifierError::DimMismatch {
            expected,
            found: q.cols(),
        });
    }
    Ok(())
}

impl Classifier for RandomForest {
    fn predict(&self, q: &FeatureMatrix) -> Result<Vec<usize>> {
        check_width(self.n_features, q)?;
        Ok((0..q.rows()).map(|i| self.predict_row(q.row(i))).collect())
    }

    fn n_classes(&self) -> usize {
        self.n_classes
    }
}

/// Independent forests combined by a majority over their votes. Forest `f`
/// is seeded with `seed + (f << 32)` so tree streams never collide.
#[derive(Debug, Clone, PartialEq)]
pub struct ForestEnsemble {
    forests: Vec<RandomForest>,
}

pub fn rf_ensemble_fit(x: &FeatureMatrix, n_forests: usize, params: &ForestParams, seed: u64) -> Result<ForestEnsemble> {
    if n_forests == 0 {
        return Err(ClassifierError::InvalidParams("an ensemble needs at least one forest".into()));
    }
    let forests = (0..n_forests)
        .map(|f| rf_fit(x, params, seed.wrapping_add((f as u64) << 32)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ForestEnsemble { forests })
}

impl ForestEnsemble {
    pub fn forests(&self) -> &[RandomForest] {
        &self.forests
    }

    pub(crate) fn from_forests(forests: Vec<RandomForest>) -> Result<Self> {
        if forests.is_empty() {
            return Err(ClassifierError::InvalidModel("empty ensemble".into()));
        }
        Ok(Self { forests })
    }
}

impl Classifier for ForestEnsemble {
    fn predict(&self, q: &FeatureMatrix) -> Result<Vec<usize>> {
        let first = &self.forests[0];
        check_width(first.n_features, q)?;
        let n_classes = first.n_classes;
        Ok((0..q.rows())
            .map(|i| majority(self.forests.iter().map(|f| f.predict_row(q.row(i))), n_classes))
            .collect())
    }

    fn n_classes(&self) -> usize {
        self.forests[0].n_classes
    }
}
