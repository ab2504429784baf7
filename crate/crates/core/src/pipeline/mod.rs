//! Declarative experiment runner for the six frameworks.
//!
//! Stage order per run: load, filter to the target classes, subsample,
//! assemble the neighbor matrix (Neigh* only), then per fold: standardize,
//! normalize rows, reduce (PCA or autoencoder, where the framework asks for
//! it) and classify. Every data-dependent stage after the neighbor matrix
//! is refit on each fold's training part.

mod run;
mod spec;
mod suite;
mod synth;

use thiserror::Error;

pub use run::{
    derive_seed, fit_final, plan_stages, run_experiment, run_group, FoldReport, FittedReduction, RunOptions, RunReport,
    StageInfo, StageTiming, TrainedPipeline,
};
pub use spec::{
    AeSpec, ExperimentSpec, Framework, InputSource, Reduction, SuiteSpec, DEFAULT_FOLDS, DEFAULT_NEIGHBORS,
    DEFAULT_SUBSAMPLE,
};
pub use suite::{run_suite, SuiteCell, SuiteReport};
pub use synth::{synth_generate, Layout, SynthClass, SynthSpec};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error("invalid experiment: {0}")]
    InvalidSpec(String),
    #[error("stage {stage} failed [{echo}]: {message}")]
    Stage { stage: String, echo: String, message: String },
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;
