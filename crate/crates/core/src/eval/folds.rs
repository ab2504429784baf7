use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EvalError, Result};

/// Assignment of every sample to one of `k` folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub assignments: Vec<usize>,
    pub seed: u64,
    /// Whether stratification was actually applied.
    pub stratified: bool,
    /// Set when stratification was requested but a class had fewer than
    /// `k` members.
    pub fallback: Option<String>,
}

impl FoldPlan {
    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.assignments {
            sizes[f] += 1;
        }
        sizes
    }

    /// `(train, test)` sample indices for `fold`, both ascending.
    pub fn split(&self, fold: usize) -> (Vec<usize>, Vec<usize>) {
        let mut train = Vec::with_capacity(self.len());
        let mut test = Vec::new();
        for (i, &f) in self.assignments.iter().enumerate() {
            if f == fold {
                test.push(i);
            } else {
                train.push(i);
            }
        }
        (train, test)
    }
}

/// Seeded shuffle followed by round-robin assignment. When `stratified`,
/// each class is shuffled separately and the round-robin counter runs on
/// across classes, so fold sizes differ by at most one both overall and
/// within each class.
pub fn kfold_plan(labels: &[usize], k: usize, seed: u64, stratified: bool) -> Result<FoldPlan> {
    if k < 2 {
        return Err(EvalError::TooFewFolds(k));
    }
    if labels.len() < k {
        return Err(EvalError::TooFewSamples { samples: labels.len(), k });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fallback = None;
    let order: Vec<usize> = if stratified {
        let n_classes = labels.iter().max().map_or(0, |m| m + 1);
        let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
        for (i, &l) in labels.iter().enumerate() {
            by_class[l].push(i);
        }
        match by_class.iter().enumerate().find(|(_, m)| !m.is_empty() && m.len() < k) {
            Some((c, members)) => {
                let msg = format!(
                    "class index {c} has {} members, fewer than {k} folds; using unstratified folds",
                    members.len()
                );
                log::warn!("{msg}");
                fallback = Some(msg);
                Vec::new()
            }
            None => by_class
                .into_iter()
                .flat_map(|mut members| {
                    members.shuffle(&mut rng);
                    members
                })
                .collect(),
        }
    } else {
        Vec::new()
    };
    let applied = stratified && fallback.is_none();
    let order = if applied {
        order
    } else {
        let mut all: Vec<usize> = (0..labels.len()).collect();
        all.shuffle(&mut rng);
        all
    };
    let mut assignments = vec![0; labels.len()];
    for (pos, &i) in order.iter().enumerate() {
        assignments[i] = pos % k;
    }
    Ok(FoldPlan {
        k,
        assignments,
        seed,
        stratified: applied,
        fallback,
    })
}
