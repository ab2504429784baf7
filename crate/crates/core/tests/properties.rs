use pointclass::classifiers::{knn_fit, rf_fit, Classifier, ClassifierSpec, ForestParams};
use pointclass::dimred::pca_fit_matrix;
use pointclass::eval::{accuracy, f1_micro, kfold_plan, micro_precision, micro_recall, ConfusionMatrix, CvSummary};
use pointclass::features::{
    assemble_neighbor_matrix, knn_indices, normalize_rows, standardize_apply, standardize_fit, FeatureMatrix, KdTree,
};
use pointclass::las_io::{parse_las, subsample_indices, write_las, LidarPoint, PointCloud};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn brute_knn(points: &[[f64; 3]], i: usize, k: usize) -> Vec<usize> {
    let mut cand: Vec<(f64, usize)> = (0..points.len())
        .filter(|&j| j != i)
        .map(|j| {
            let d: f64 = (0..3).map(|a| (points[i][a] - points[j][a]).powi(2)).sum();
            (d, j)
        })
        .collect();
    cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    cand.into_iter().take(k).map(|(_, j)| j).collect()
}

/// Integer coordinates on a small grid, so distance ties are common.
fn grid_cloud(max_n: usize) -> impl Strategy<Value = Vec<[f64; 3]>> {
    prop::collection::vec((0i32..6, 0i32..6, 0i32..3), 2..max_n)
        .prop_map(|v| v.into_iter().map(|(x, y, z)| [x as f64, y as f64, z as f64]).collect())
}

fn matrix(rows: std::ops::Range<usize>, cols: std::ops::Range<usize>, classes: usize) -> impl Strategy<Value = FeatureMatrix> {
    (rows, cols).prop_flat_map(move |(r, c)| {
        (
            prop::collection::vec(-100.0f64..100.0, r * c),
            prop::collection::vec(0..classes, r),
        )
            .prop_map(move |(data, labels)| FeatureMatrix::from_rows(r, c, data, labels).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kdtree_matches_brute_force(points in grid_cloud(120), k in 1usize..20) {
        let k = k.min(points.len() - 1);
        let tree = KdTree::build(points.clone()).unwrap();
        for i in 0..points.len() {
            prop_assert_eq!(knn_indices(&tree, i, k).unwrap(), brute_knn(&points, i, k));
        }
    }

    #[test]
    fn kdtree_continuous_coordinates(
        points in prop::collection::vec(prop::array::uniform3(-50.0f64..50.0), 2..300),
        k in 1usize..20,
    ) {
        let k = k.min(points.len() - 1);
        let tree = KdTree::build(points.clone()).unwrap();
        for i in (0..points.len()).step_by(7) {
            prop_assert_eq!(knn_indices(&tree, i, k).unwrap(), brute_knn(&points, i, k));
        }
    }

    #[test]
    fn neighbor_matrix_structure(fm in matrix(5..60, 3..9, 4), k in 1usize..5) {
        let nm = assemble_neighbor_matrix(&fm, k).unwrap();
        let n = fm.cols();
        prop_assert_eq!(nm.width(), (k + 1) * n);
        prop_assert_eq!(nm.matrix.labels(), fm.labels());
        for i in 0..fm.rows() {
            let block0: Vec<u64> = nm.matrix.row(i)[..n].iter().map(|v| v.to_bits()).collect();
            let base: Vec<u64> = fm.row(i).iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(block0, base);
        }
    }

    #[test]
    fn micro_metrics_coincide(c in 1usize..10, counts in prop::collection::vec(0u64..1000, 100)) {
        let mut counts: Vec<u64> = counts.into_iter().take(c * c).collect();
        counts.resize(c * c, 0);
        counts[0] += 1;
        let cm = ConfusionMatrix::from_counts(c, counts).unwrap();
        let acc = accuracy(&cm).unwrap();
        prop_assert_eq!(micro_precision(&cm).unwrap(), acc);
        prop_assert_eq!(micro_recall(&cm).unwrap(), acc);
        prop_assert_eq!(f1_micro(&cm).unwrap().value, acc);
    }

    #[test]
    fn folds_partition_samples(
        labels in prop::collection::vec(0usize..4, 10..300),
        k in 2usize..8,
        seed in any::<u64>(),
        stratified in any::<bool>(),
    ) {
        prop_assume!(labels.len() >= k);
        let plan = kfold_plan(&labels, k, seed, stratified).unwrap();
        let sizes = plan.fold_sizes();
        prop_assert!(sizes.iter().all(|&s| s > 0));
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        let mut seen = vec![0; labels.len()];
        for f in 0..k {
            let (train, test) = plan.split(f);
            prop_assert_eq!(train.len() + test.len(), labels.len());
            for i in test {
                seen[i] += 1;
            }
        }
        prop_assert!(seen.iter().all(|&s| s == 1));
        if plan.stratified {
            for class in 0..4 {
                let mut per = vec![0usize; k];
                for (i, &l) in labels.iter().enumerate() {
                    if l == class {
                        per[plan.assignments[i]] += 1;
                    }
                }
                prop_assert!(per.iter().max().unwrap() - per.iter().min().unwrap() <= 1);
            }
        }
        prop_assert_eq!(&kfold_plan(&labels, k, seed, stratified).unwrap(), &plan);
    }

    #[test]
    fn subsample_is_equally_spaced(n in 1usize..5000, frac in 0.0f64..1.0) {
        let s = ((n as f64 * frac) as usize).max(1);
        let idx = subsample_indices(n, s).unwrap();
        prop_assert_eq!(idx.len(), s);
        prop_assert!(idx.windows(2).all(|w| w[0] < w[1]));
        for (i, &j) in idx.iter().enumerate() {
            prop_assert_eq!(j, i * n / s);
        }
    }

    #[test]
    fn standardized_columns_have_unit_moments(fm in matrix(3..80, 1..6, 2)) {
        let stats = standardize_fit(&fm).unwrap();
        let z = standardize_apply(&fm, &stats).unwrap();
        for j in 0..z.cols() {
            if stats.degenerate[j] {
                continue;
            }
            let col = z.column(j);
            let n = col.len() as f64;
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            prop_assert!(mean.abs() < 1e-10, "mean {}", mean);
            prop_assert!((var.sqrt() - 1.0).abs() < 1e-10, "std {}", var.sqrt());
        }
    }

    #[test]
    fn normalized_rows_are_unit(fm in matrix(1..40, 1..8, 2)) {
        let (out, zeros) = normalize_rows(&fm).unwrap();
        for i in 0..out.rows() {
            let norm = out.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            if zeros.contains(&i) {
                prop_assert_eq!(norm, 0.0);
            } else {
                prop_assert!((norm - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pca_axes_orthonormal_and_sorted(data in prop::collection::vec(-5.0f64..5.0, 20 * 6), p in 1usize..6) {
        let x = DMatrix::from_row_slice(20, 6, &data);
        let m = pca_fit_matrix(&x, p).unwrap();
        let g = &m.components * m.components.transpose();
        prop_assert!((g - DMatrix::<f64>::identity(p, p)).abs().max() < 1e-8);
        prop_assert!(m.explained_variance.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn cv_summary_bounds(scores in prop::collection::vec(0.0f64..=1.0, 2..10)) {
        let s = CvSummary::from_scores(scores);
        prop_assert!((0.0..=1.0).contains(&s.mean));
        prop_assert!(s.two_sigma >= 0.0);
    }

    #[test]
    fn las_round_trip_within_quantum(
        raw in prop::collection::vec(
            (-1.0e4f64..1.0e4, -1.0e4f64..1.0e4, -100.0f64..500.0, 0u16..=u16::MAX, -90i8..=90, 1u8..=7, 0u8..32),
            1..50,
        ),
    ) {
        let points: Vec<LidarPoint> = raw
            .iter()
            .map(|&(x, y, z, intensity, angle, n, class_code)| LidarPoint {
                x, y, z,
                intensity: intensity as f64,
                scan_angle: angle as f64,
                num_returns: n,
                return_number: 1 + (x.abs() as u8) % n,
                class_code,
            })
            .collect();
        let scale = [0.01, 0.01, 0.001];
        let bytes = write_las(&PointCloud::new(points.clone()), 1, scale, [0.0; 3]).unwrap();
        let back = parse_las(&bytes).unwrap();
        prop_assert!(back.warnings.is_empty());
        prop_assert_eq!(back.cloud.len(), points.len());
        for (a, b) in points.iter().zip(&back.cloud.points) {
            for (u, v, q) in [(a.x, b.x, scale[0]), (a.y, b.y, scale[1]), (a.z, b.z, scale[2])] {
                prop_assert!((u - v).abs() <= q / 2.0 + f64::EPSILON * u.abs().max(1.0) * 4.0);
            }
            prop_assert_eq!(a.intensity, b.intensity);
            prop_assert_eq!(a.scan_angle, b.scan_angle);
            prop_assert_eq!(a.num_returns, b.num_returns);
            prop_assert_eq!(a.return_number, b.return_number);
            prop_assert_eq!(a.class_code, b.class_code);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn classifiers_emit_known_classes(fm in matrix(12..60, 2..5, 3), seed in any::<u64>()) {
        let specs = [
            ClassifierSpec::Knn { k_vote: 3 },
            ClassifierSpec::Rf(ForestParams { n_trees: 5, ..ForestParams::default() }),
            ClassifierSpec::RfEns { n_forests: 2, forest: ForestParams { n_trees: 3, ..ForestParams::ensemble_member() } },
        ];
        for spec in &specs {
            let model = spec.fit(&fm, seed).unwrap();
            let pred = model.predict(&fm).unwrap();
            prop_assert_eq!(pred.len(), fm.rows());
            prop_assert!(pred.iter().all(|&c| c < fm.n_classes()));
            prop_assert_eq!(pred, spec.fit(&fm, seed).unwrap().predict(&fm).unwrap());
        }
    }

    #[test]
    fn one_nn_memorizes_distinct_rows(fm in matrix(2..80, 1..5, 4)) {
        let mut rows: Vec<Vec<u64>> = (0..fm.rows()).map(|i| fm.row(i).iter().map(|v| v.to_bits()).collect()).collect();
        rows.sort();
        rows.dedup();
        prop_assume!(rows.len() == fm.rows());
        let model = knn_fit(&fm, 1).unwrap();
        prop_assert_eq!(model.predict(&fm).unwrap(), fm.labels().to_vec());
    }

    #[test]
    fn knn_ignores_training_order(fm in matrix(6..50, 1..4, 3), rot in 1usize..50) {
        let n = fm.rows();
        let perm: Vec<usize> = (0..n).map(|i| (i * 7 + rot) % n).collect();
        let mut sorted = perm.clone();
        sorted.sort();
        sorted.dedup();
        prop_assume!(sorted.len() == n);
        let shuffled = fm.select_rows(&perm);
        // Ties between equidistant rows depend on row index, so only compare
        // when the query's neighbor distances are distinct.
        let a = knn_fit(&fm, 3).unwrap().predict(&fm).unwrap();
        let b = knn_fit(&shuffled, 3).unwrap().predict(&fm).unwrap();
        for i in 0..n {
            let mut d: Vec<f64> = (0..n)
                .map(|j| fm.row(i).iter().zip(fm.row(j)).map(|(u, v)| (u - v).powi(2)).sum())
                .collect();
            d.sort_by(f64::total_cmp);
            if d.windows(2).take(4).all(|w| w[0] < w[1]) {
                prop_assert_eq!(a[i], b[i]);
            }
        }
    }

    #[test]
    fn forest_is_deterministic(fm in matrix(10..40, 2..4, 2), seed in any::<u64>()) {
        let params = ForestParams { n_trees: 4, ..ForestParams::default() };
        let a = rf_fit(&fm, &params, seed).unwrap();
        let b = rf_fit(&fm, &params, seed).unwrap();
        prop_assert_eq!(a.predict(&fm).unwrap(), b.predict(&fm).unwrap());
    }
}
