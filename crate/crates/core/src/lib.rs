//! Point-by-point classification of airborne LiDAR clouds.
//!
//! The crate wires together LAS ingestion ([`las_io`]), neighbor-matrix
//! feature engineering ([`features`]), PCA and autoencoder reduction
//! ([`dimred`]), four classifiers ([`classifiers`]), cross-validated
//! micro-F1 evaluation ([`eval`]) and an experiment runner
//! ([`pipeline`]) that composes them into the six frameworks
//! Raw, PCA, Enc, Neigh, Neigh+PCA and Neigh+Enc.

pub mod classifiers;
pub mod dimred;
pub mod eval;
pub mod features;
pub mod las_io;
pub mod model_io;
pub mod nn;
pub mod pipeline;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
