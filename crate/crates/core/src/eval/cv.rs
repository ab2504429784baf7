use std::fmt;

use serde::{Deserialize, Serialize};

use super::folds::FoldPlan;
use super::metrics::{f1_micro, ConfusionMatrix};
use super::{EvalError, Result};
use crate::features::FeatureMatrix;

/// Per-fold F1 scores with their mean and twice the population standard
/// deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSummary {
    pub fold_scores: Vec<f64>,
    pub mean: f64,
    pub two_sigma: f64,
}

impl CvSummary {
    pub fn from_scores(fold_scores: Vec<f64>) -> Self {
        let k = fold_scores.len() as f64;
        let mean = fold_scores.iter().sum::<f64>() / k;
        let var = fold_scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / k;
        Self {
            fold_scores,
            mean,
            two_sigma: 2.0 * var.sqrt(),
        }
    }
}

/// Renders as `0.8701 (+/- 0.0007)`.
impl fmt::Display for CvSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.4} (+/- {:.4})", self.mean, self.two_sigma)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub summary: CvSummary,
    pub fold_matrices: Vec<ConfusionMatrix>,
    /// Sum of the per-fold matrices.
    pub pooled: ConfusionMatrix,
    /// Folds whose F1 was undefined (no true positives) and scored as 0.
    pub undefined_folds: Vec<usize>,
}

impl CvResult {
    pub fn from_fold_matrices(fold_matrices: Vec<ConfusionMatrix>) -> Result<Self> {
        let n_classes = fold_matrices.first().map_or(0, ConfusionMatrix::n_classes);
        let mut pooled = ConfusionMatrix::new(n_classes);
        let mut scores = Vec::with_capacity(fold_matrices.len());
        let mut undefined_folds = Vec::new();
        for (fold, cm) in fold_matrices.iter().enumerate() {
            let f1 = f1_micro(cm).map_err(|e| EvalError::Fold {
                fold,
                message: e.to_string(),
            })?;
            if f1.undefined {
                undefined_folds.push(fold);
            }
            scores.push(f1.value);
            pooled.merge(cm);
        }
        Ok(Self {
            summary: CvSummary::from_scores(scores),
            fold_matrices,
            pooled,
            undefined_folds,
        })
    }
}

/// Runs `fit_predict(fold, train, test)` once per fold and scores the
/// returned test predictions. The callback must fit every data-dependent
/// stage on `train` alone; it only ever sees the held-out rows as `test`.
pub fn cross_validate<F, E>(x: &FeatureMatrix, plan: &FoldPlan, mut fit_predict: F) -> Result<CvResult>
where
    F: FnMut(usize, &FeatureMatrix, &FeatureMatrix) -> std::result::Result<Vec<usize>, E>,
    E: fmt::Display,
{
    if plan.len() != x.rows() {
        return Err(EvalError::PlanMismatch {
            plan: plan.len(),
            data: x.rows(),
        });
    }
    let mut matrices = Vec::with_capacity(plan.k);
    for fold in 0..plan.k {
        let (train_idx, test_idx) = plan.split(fold);
        let train = x.select_rows(&train_idx);
        let test = x.select_rows(&test_idx);
        let annotate = |message: String| EvalError::Fold { fold, message };
        let predicted = fit_predict(fold, &train, &test).map_err(|e| annotate(e.to_string()))?;
        let cm = ConfusionMatrix::from_predictions(test.labels(), &predicted, x.n_classes())
            .map_err(|e| annotate(e.to_string()))?;
        matrices.push(cm);
    }
    CvResult::from_fold_matrices(matrices)
}

#[cfg(test)]
mod tests {
    use super::super::folds::kfold_plan;
    use super::*;
    use crate::classifiers::{knn_fit, Classifier};
    use crate::features::{standardize_fit, StandardizeStats};

    #[test]
    fn summary_rendering() {
        let s = CvSummary {
            fold_scores: vec![],
            mean: 0.87014,
            two_sigma: 0.00066,
        };
        assert_eq!(s.to_string(), "0.8701 (+/- 0.0007)");
        let s = CvSummary::from_scores(vec![0.5, 0.7]);
        assert!((s.mean - 0.6).abs() < 1e-15);
        assert!((s.two_sigma - 0.2).abs() < 1e-15);
    }

    #[test]
    fn constant_predictor_on_balanced_data() {
        let labels: Vec<usize> = (0..100).map(|i| i % 2).collect();
        let x = FeatureMatrix::from_rows(100, 1, (0..100).map(f64::from).collect(), labels.clone()).unwrap();
        let plan = kfold_plan(&labels, 5, 0, true).unwrap();
        let res = cross_validate(&x, &plan, |_, _, test| Ok::<_, String>(vec![0; test.rows()])).unwrap();
        assert_eq!(res.summary.fold_scores, vec![0.5; 5]);
        assert_eq!(res.summary.two_sigma, 0.0);
        assert_eq!(res.pooled.total(), 100);
    }

    #[test]
    fn memorizing_classifier_on_duplicated_data() {
        // Every distinct point appears once in each fold, so 1-NN always
        // finds an exact copy in the training part.
        let k = 5;
        let base: Vec<(f64, usize)> = (0..12).map(|i| (i as f64 * 1.5, i % 3)).collect();
        let mut data = Vec::new();
        let mut labels = Vec::new();
        let mut assignments = Vec::new();
        for fold in 0..k {
            for &(v, l) in &base {
                data.push(v);
                labels.push(l);
                assignments.push(fold);
            }
        }
        let x = FeatureMatrix::from_rows(labels.len(), 1, data, labels).unwrap();
        let plan = FoldPlan {
            k,
            assignments,
            seed: 0,
            stratified: false,
            fallback: None,
        };
        let res = cross_validate(&x, &plan, |_, train, test| knn_fit(train, 1).and_then(|m| m.predict(test))).unwrap();
        assert_eq!(res.summary.fold_scores, vec![1.0; k]);
    }

    #[test]
    fn leakage_sentinel() {
        let n = 100;
        let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let plan = kfold_plan(&labels, 5, 11, true).unwrap();
        let poisoned = 2;
        let data: Vec<f64> = (0..n)
            .map(|i| {
                let v = (i as f64 * 0.37).sin();
                if plan.assignments[i] == poisoned {
                    v * 1e6
                } else {
                    v
                }
            })
            .collect();
        let x = FeatureMatrix::from_rows(n, 1, data, labels).unwrap();
        let mut seen: Vec<StandardizeStats> = Vec::new();
        cross_validate(&x, &plan, |_, train, test| {
            seen.push(standardize_fit(train)?);
            Ok::<_, crate::features::FeatureError>(vec![0; test.rows()])
        })
        .unwrap();
        let (clean_idx, _) = plan.split(poisoned);
        let expected = standardize_fit(&x.select_rows(&clean_idx)).unwrap();
        assert_eq!(seen[poisoned], expected);
        assert!(seen[poisoned].std[0] < 1.0);
        for (fold, stats) in seen.iter().enumerate() {
            if fold != poisoned {
                assert!(stats.std[0] > 1e3);
            }
        }
    }

    #[test]
    fn errors_carry_fold_index() {
        let x = FeatureMatrix::from_rows(10, 1, vec![0.0; 10], vec![0; 10]).unwrap();
        let plan = kfold_plan(x.labels(), 5, 0, false).unwrap();
        let err = cross_validate(&x, &plan, |fold, _, _| if fold == 3 { Err("boom") } else { Ok(vec![0; 2]) })
            .unwrap_err();
        assert!(matches!(err, EvalError::Fold { fold: 3, .. }));
        let short = kfold_plan(&[0; 5], 5, 0, false).unwrap();
        assert!(matches!(
            cross_validate(&x, &short, |_, _, _| Ok::<_, String>(vec![])),
            Err(EvalError::PlanMismatch { .. })
        ));
    }
}
