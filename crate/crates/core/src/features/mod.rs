//! Feature engineering: attribute extraction, the spatial kd-tree, neighbor
//! matrix assembly and the standardize → normalize preprocessing steps.

mod kdtree;
mod matrix;
mod neighbor;
mod preprocess;

use thiserror::Error;

pub use kdtree::{knn_indices, KdTree};
pub use matrix::{to_feature_matrix, to_feature_matrix_with, Attribute, ClassMap, FeatureMatrix};
pub use neighbor::{assemble_neighbor_matrix, spatial_tree, NeighborMatrix};
pub use preprocess::{normalize_rows, standardize_apply, standardize_fit, StandardizeStats};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("k = {k} neighbors requested but only {n} points (k must be < n)")]
    KTooLarge { k: usize, n: usize },
    #[error("need at least {needed} rows, found {found}")]
    TooFewRows { needed: usize, found: usize },
    #[error("expected {expected} columns, found {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("neighbor search needs x, y, z as the first three columns; matrix has {0} columns")]
    MissingSpatial(usize),
    #[error("invalid feature matrix: {0}")]
    InvalidShape(String),
    #[error("invalid feature blob: {0}")]
    BadBlob(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = FeatureError> = std::result::Result<T, E>;
