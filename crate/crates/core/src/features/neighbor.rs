use super::kdtree::KdTree;
use super::{FeatureError, FeatureMatrix, Result};

/// A feature matrix whose row `i` concatenates the base features of example
/// `i` (block 0) with those of its `k` spatial nearest neighbors
/// (blocks `1..=k`, nearest first).
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborMatrix {
    pub k: usize,
    pub base_width: usize,
    pub matrix: FeatureMatrix,
}

impl NeighborMatrix {
    pub fn width(&self) -> usize {
        self.matrix.cols()
    }

    pub fn into_inner(self) -> FeatureMatrix {
        self.matrix
    }
}

/// Spatial index over the first three columns of `fm`.
pub fn spatial_tree(fm: &FeatureMatrix) -> Result<KdTree> {
    if fm.cols() < 3 {
        return Err(FeatureError::MissingSpatial(fm.cols()));
    }
    KdTree::build((0..fm.rows()).map(|i| [fm.get(i, 0), fm.get(i, 1), fm.get(i, 2)]).collect())
}

/// Assembles the `rows × (k+1)·N` neighbor matrix. Neighbors are found on
/// the first three columns as given (no rescaling) and exclude the row
/// itself. Labels are carried through unchanged.
pub fn assemble_neighbor_matrix(fm: &FeatureMatrix, k: usize) -> Result<NeighborMatrix> {
    let n = fm.rows();
    if k >= n {
        return Err(FeatureError::KTooLarge { k, n });
    }
    let tree = spatial_tree(fm)?;
    let base = fm.cols();
    let width = (k + 1) * base;
    let mut data = Vec::with_capacity(n * width);
    for i in 0..n {
        data.extend_from_slice(fm.row(i));
        for (j, _) in tree.nearest(&tree.point(i), k, Some(i)) {
            data.extend_from_slice(fm.row(j));
        }
    }
    let mut names = fm.feature_names().to_vec();
    for j in 1..=k {
        names.extend(fm.feature_names().iter().map(|name| format!("{name}_nb{j}")));
    }
    Ok(NeighborMatrix {
        k,
        base_width: base,
        matrix: fm.with_features(width, data, names)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn width_is_k_plus_one_times_base() {
        let data: Vec<f64> = (0..10 * 7).map(|v| (v * 37 % 101) as f64).collect();
        let fm = FeatureMatrix::from_rows(10, 7, data, vec![0; 10]).unwrap();
        assert_eq!(assemble_neighbor_matrix(&fm, 3).unwrap().width(), 28);
        let fm16 = FeatureMatrix::from_rows(16, 7, vec![0.5; 16 * 7], vec![0; 16]).unwrap();
        assert_eq!(assemble_neighbor_matrix(&fm16, 15).unwrap().width(), 112);
        assert!(matches!(
            assemble_neighbor_matrix(&fm, 10),
            Err(FeatureError::KTooLarge { k: 10, n: 10 })
        ));
    }

    #[test]
    fn identical_pair_duplicates_row() {
        let row = [1.0, 2.0, 3.0, 4.0];
        let fm = FeatureMatrix::from_rows(2, 4, [row, row].concat(), vec![0, 1]).unwrap();
        let nm = assemble_neighbor_matrix(&fm, 1).unwrap();
        assert_eq!(nm.matrix.row(0), &[row, row].concat()[..]);
        assert_eq!(nm.matrix.row(1), &[row, row].concat()[..]);
        assert_eq!(nm.matrix.labels(), &[0, 1]);
        assert_eq!(nm.matrix.feature_names()[5], "f1_nb1");
    }

    #[test]
    fn needs_three_spatial_columns() {
        let fm = FeatureMatrix::from_rows(3, 2, vec![0.0; 6], vec![0; 3]).unwrap();
        assert!(matches!(assemble_neighbor_matrix(&fm, 1), Err(FeatureError::MissingSpatial(2))));
    }
}
