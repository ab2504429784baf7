use super::{check_training, majority, Classifier, ClassifierError, Result};
use crate::features::FeatureMatrix;

/// Majority vote among the `k_vote` nearest training rows (Euclidean).
/// Distance ties go to the lower training row, vote ties to the lower class.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnClassifier {
    cols: usize,
    data: Vec<f64>,
    labels: Vec<usize>,
    k_vote: usize,
    n_classes: usize,
}

pub fn knn_fit(x: &FeatureMatrix, k_vote: usize) -> Result<KnnClassifier> {
    check_training(x)?;
    if k_vote == 0 || k_vote > x.rows() {
        return Err(ClassifierError::KTooLarge { k: k_vote, n: x.rows() });
    }
    Ok(KnnClassifier {
        cols: x.cols(),
        data: x.data().to_vec(),
        labels: x.labels().to_vec(),
        k_vote,
        n_classes: x.n_classes(),
    })
}

impl KnnClassifier {
    pub fn k_vote(&self) -> usize {
        self.k_vote
    }

    pub fn training_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn width(&self) -> usize {
        self.cols
    }

    pub fn training_data(&self) -> (&[f64], &[usize]) {
        (&self.data, &self.labels)
    }

    pub(crate) fn from_parts(cols: usize, data: Vec<f64>, labels: Vec<usize>, k_vote: usize, n_classes: usize) -> Self {
        Self {
            cols,
            data,
            labels,
            k_vote,
            n_classes,
        }
    }

    fn predict_row(&self, q: &[f64], scratch: &mut Vec<(f64, usize)>) -> usize {
        scratch.clear();
        scratch.extend(self.data.chunks_exact(self.cols).enumerate().map(|(i, row)| {
            let d: f64 = row.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
            (d, i)
        }));
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if self.k_vote < scratch.len() {
            scratch.select_nth_unstable_by(self.k_vote - 1, cmp);
        }
        majority(scratch[..self.k_vote].iter().map(|&(_, i)| self.labels[i]), self.n_classes)
    }
}

impl Classifier for KnnClassifier {
    fn predict(&self, q: &FeatureMatrix) -> Result<Vec<usize>> {
        if q.cols() != self.cols {
            return Err(ClassifierError::DimMismatch {
                expected: self.cols,
                found: q.cols(),
            });
        }
        let mut scratch = Vec::with_capacity(self.labels.len());
        Ok((0..q.rows()).map(|i| self.predict_row(q.row(i), &mut scratch)).collect())
    }

    fn n_classes(&self) -> usize {
        self.n_classes
    }
}
