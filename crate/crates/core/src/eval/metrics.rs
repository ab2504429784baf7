use serde::{Deserialize, Serialize};

use super::{EvalError, Result};

/// `C × C` counts, rows are true classes and columns predictions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    n_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(n_classes: usize) -> Self {
        Self {
            n_classes,
            counts: vec![0; n_classes * n_classes],
        }
    }

    pub fn from_predictions(truth: &[usize], predicted: &[usize], n_classes: usize) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(EvalError::LengthMismatch {
                truth: truth.len(),
                predicted: predicted.len(),
            });
        }
        let mut cm = Self::new(n_classes);
        for (&t, &p) in truth.iter().zip(predicted) {
            cm.record(t, p)?;
        }
        Ok(cm)
    }

    /// Builds a matrix from row-major counts.
    pub fn from_counts(n_classes: usize, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != n_classes * n_classes {
            return Err(EvalError::LengthMismatch {
                truth: n_classes * n_classes,
                predicted: counts.len(),
            });
        }
        Ok(Self { n_classes, counts })
    }

    pub fn record(&mut self, truth: usize, predicted: usize) -> Result<()> {
        for label in [truth, predicted] {
            if label >= self.n_classes {
                return Err(EvalError::LabelOutOfRange {
                    label,
                    n_classes: self.n_classes,
                });
            }
        }
        self.counts[truth * self.n_classes + predicted] += 1;
        Ok(())
    }

    /// Adds `other` entrywise. Both must have the same class count.
    pub fn merge(&mut self, other: &ConfusionMatrix) {
        assert_eq!(self.n_classes, other.n_classes, "confusion matrix sizes differ");
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.n_classes + predicted]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.n_classes.max(1)).map(<[u64]>::to_vec).collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n_classes).map(|j| self.get(j, j)).sum()
    }

    pub fn true_positives(&self, j: usize) -> u64 {
        self.get(j, j)
    }

    pub fn false_positives(&self, j: usize) -> u64 {
        (0..self.n_classes).map(|i| self.get(i, j)).sum::<u64>() - self.get(j, j)
    }

    pub fn false_negatives(&self, j: usize) -> u64 {
        (0..self.n_classes).map(|k| self.get(j, k)).sum::<u64>() - self.get(j, j)
    }

    /// `(ΣTP, ΣFP, ΣFN)` over classes.
    pub fn micro_counts(&self) -> (u64, u64, u64) {
        (0..self.n_classes).fold((0, 0, 0), |(tp, fp, fneg), j| {
            (
                tp + self.true_positives(j),
                fp + self.false_positives(j),
                fneg + self.false_negatives(j),
            )
        })
    }
}

fn nonempty(cm: &ConfusionMatrix) -> Result<u64> {
    match cm.total() {
        0 => Err(EvalError::EmptyMatrix),
        t => Ok(t),
    }
}

/// `ΣTP / (ΣTP + ΣFP)`.
pub fn micro_precision(cm: &ConfusionMatrix) -> Result<f64> {
    nonempty(cm)?;
    let (tp, fp, _) = cm.micro_counts();
    Ok(tp as f64 / (tp + fp) as f64)
}

/// `ΣTP / (ΣTP + ΣFN)`.
pub fn micro_recall(cm: &ConfusionMatrix) -> Result<f64> {
    nonempty(cm)?;
    let (tp, _, fneg) = cm.micro_counts();
    Ok(tp as f64 / (tp + fneg) as f64)
}

/// Micro F1 with a flag for the degenerate case.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct F1Micro {
    pub value: f64,
    /// No true positives, so precision and recall are both zero and the
    /// harmonic mean is undefined; `value` is then 0.
    pub undefined: bool,
}

/// Harmonic mean of micro precision and recall, evaluated on counts as
/// `2ΣTP / (2ΣTP + ΣFP + ΣFN)`.
pub fn f1_micro(cm: &ConfusionMatrix) -> Result<F1Micro> {
    nonempty(cm)?;
    let (tp, fp, fneg) = cm.micro_counts();
    if tp == 0 {
        return Ok(F1Micro {
            value: 0.0,
            undefined: true,
        });
    }
    Ok(F1Micro {
        value: (2 * tp) as f64 / (2 * tp + fp + fneg) as f64,
        undefined: false,
    })
}

pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let total = nonempty(cm)?;
    Ok(cm.trace() as f64 / total as f64)
}

pub fn error_rate(cm: &ConfusionMatrix) -> Result<f64> {
    Ok(1.0 - accuracy(cm)?)
}
