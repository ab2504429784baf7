use serde::{Deserialize, Serialize};

use super::{FeatureError, FeatureMatrix, Result};

/// Per-column mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizeStats {
    pub mean: Vec<f64>,
    /// Always positive; degenerate columns carry 1.0.
    pub std: Vec<f64>,
    /// Columns whose spread was zero at fit time.
    pub degenerate: Vec<bool>,
}

impl StandardizeStats {
    pub fn degenerate_columns(&self) -> Vec<usize> {
        self.degenerate
            .iter()
            .enumerate()
            .filter_map(|(j, &d)| d.then_some(j))
            .collect()
    }
}

pub fn standardize_fit(fm: &FeatureMatrix) -> Result<StandardizeStats> {
    let n = fm.rows();
    if n < 2 {
        return Err(FeatureError::TooFewRows { needed: 2, found: n });
    }
    let d = fm.cols();
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (m, v) in mean.iter_mut().zip(fm.row(i)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = vec![0.0; d];
    for i in 0..n {
        for ((s, v), m) in var.iter_mut().zip(fm.row(i)).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let mut std = Vec::with_capacity(d);
    let mut degenerate = Vec::with_capacity(d);
    for (s, m) in var.iter().zip(&mean) {
        let sd = (s / n as f64).sqrt();
        // Rounding in the mean leaves a residue of a few ulps on constant columns.
        let flat = sd == 0.0 || sd <= 8.0 * f64::EPSILON * m.abs();
        degenerate.push(flat);
        std.push(if flat { 1.0 } else { sd });
    }
    Ok(StandardizeStats { mean, std, degenerate })
}

/// Maps every column to `(x - mean) / std`. Degenerate columns are centered
/// only.
pub fn standardize_apply(fm: &FeatureMatrix, stats: &StandardizeStats) -> Result<FeatureMatrix> {
    if stats.mean.len() != fm.cols() {
        return Err(FeatureError::DimMismatch {
            expected: stats.mean.len(),
            found: fm.cols(),
        });
    }
    let mut data = Vec::with_capacity(fm.data().len());
    for i in 0..fm.rows() {
        for (j, v) in fm.row(i).iter().enumerate() {
            let z = if stats.degenerate[j] { 0.0 } else { (v - stats.mean[j]) / stats.std[j] };
            data.push(z);
        }
    }
    fm.with_features(fm.cols(), data, fm.feature_names().to_vec())
}

/// Scales each row to unit Euclidean norm. Returns the indices of all-zero
/// rows, which are left untouched.
pub fn normalize_rows(fm: &FeatureMatrix) -> Result<(FeatureMatrix, Vec<usize>)> {
    let mut data = Vec::with_capacity(fm.data().len());
    let mut zero_rows = Vec::new();
    for i in 0..fm.rows() {
        let row = fm.row(i);
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            zero_rows.push(i);
            data.extend_from_slice(row);
        } else {
            data.extend(row.iter().map(|v| v / norm));
        }
    }
    Ok((fm.with_features(fm.cols(), data, fm.feature_names().to_vec())?, zero_rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn column(values: &[f64]) -> FeatureMatrix {
        FeatureMatrix::from_rows(values.len(), 1, values.to_vec(), vec![0; values.len()]).unwrap()
    }

    #[test]
    fn two_point_column() {
        let fm = column(&[1.0, 3.0]);
        let stats = standardize_fit(&fm).unwrap();
        assert_eq!((stats.mean[0], stats.std[0]), (2.0, 1.0));
        assert_eq!(standardize_apply(&fm, &stats).unwrap().data(), &[-1.0, 1.0]);
    }

    #[test]
    fn constant_column_is_flagged() {
        let fm = column(&[5.0, 5.0, 5.0]);
        let stats = standardize_fit(&fm).unwrap();
        assert_eq!(stats.degenerate_columns(), vec![0]);
        assert_eq!(stats.std[0], 1.0);
        assert_eq!(standardize_apply(&fm, &stats).unwrap().data(), &[0.0, 0.0, 0.0]);

        let inexact = column(&[0.1, 0.1, 0.1]);
        assert!(standardize_fit(&inexact).unwrap().degenerate[0]);
    }

    #[test]
    fn fit_needs_two_rows() {
        assert!(matches!(
            standardize_fit(&column(&[1.0])),
            Err(FeatureError::TooFewRows { needed: 2, found: 1 })
        ));
    }

    #[test]
    fn random_matrix_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data: Vec<f64> = (0..700).map(|j| rng.random_range(-50.0..50.0) * (1 + j % 7) as f64).collect();
        let fm = FeatureMatrix::from_rows(100, 7, data, vec![0; 100]).unwrap();
        let out = standardize_apply(&fm, &standardize_fit(&fm).unwrap()).unwrap();
        for j in 0..7 {
            let col = out.column(j);
            let mean = col.iter().sum::<f64>() / 100.0;
            let std = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 100.0).sqrt();
            assert!(mean.abs() < 1e-10, "col {j} mean {mean}");
            assert!((std - 1.0).abs() < 1e-10, "col {j} std {std}");
        }
    }

    #[test]
    fn dim_mismatch() {
        let stats = standardize_fit(&column(&[1.0, 2.0])).unwrap();
        let wide = FeatureMatrix::from_rows(1, 2, vec![1.0, 2.0], vec![0]).unwrap();
        assert!(matches!(standardize_apply(&wide, &stats), Err(FeatureError::DimMismatch { .. })));
    }

    #[test]
    fn normalize_examples() {
        let fm = FeatureMatrix::from_rows(2, 2, vec![3.0, 4.0, 0.0, 0.0], vec![0, 0]).unwrap();
        let (out, zeros) = normalize_rows(&fm).unwrap();
        assert_eq!(out.row(0), &[0.6, 0.8]);
        assert_eq!(out.row(1), &[0.0, 0.0]);
        assert_eq!(zeros, vec![1]);
    }

    #[test]
    fn standardize_then_normalize_is_not_idempotent() {
        let fm = FeatureMatrix::from_rows(3, 2, vec![1.0, 10.0, 2.0, 30.0, 4.0, 20.0], vec![0; 3]).unwrap();
        let once = normalize_rows(&standardize_apply(&fm, &standardize_fit(&fm).unwrap()).unwrap())
            .unwrap()
            .0;
        let twice = normalize_rows(&standardize_apply(&once, &standardize_fit(&once).unwrap()).unwrap())
            .unwrap()
            .0;
        assert_ne!(once, twice);
    }
}
