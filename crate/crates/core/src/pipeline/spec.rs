use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::synth::SynthSpec;
use super::{PipelineError, Result};
use crate::classifiers::ClassifierSpec;
use crate::dimred::{Activation, AutoencoderArch, TrainConfig};
use crate::las_io::TARGET_CLASS_CODES;

/// The six input frameworks, in the row order of the results grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Framework {
    #[serde(rename = "raw")]
    Raw,
    #[serde(rename = "pca")]
    Pca,
    #[serde(rename = "enc")]
    Enc,
    #[serde(rename = "neigh+pca")]
    NeighPca,
    #[serde(rename = "neigh+enc")]
    NeighEnc,
    #[serde(rename = "neigh")]
    Neigh,
}

impl Framework {
    pub const ALL: [Framework; 6] = [
        Framework::Raw,
        Framework::Pca,
        Framework::Enc,
        Framework::NeighPca,
        Framework::NeighEnc,
        Framework::Neigh,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Framework::Raw => "Raw",
            Framework::Pca => "PCA",
            Framework::Enc => "Enc",
            Framework::NeighPca => "Neigh+PCA",
            Framework::NeighEnc => "Neigh+Enc",
            Framework::Neigh => "Neigh",
        }
    }

    pub fn uses_neighbors(self) -> bool {
        matches!(self, Framework::Neigh | Framework::NeighPca | Framework::NeighEnc)
    }

    pub fn reduction(self) -> Option<Reduction> {
        match self {
            Framework::Pca | Framework::NeighPca => Some(Reduction::Pca),
            Framework::Enc | Framework::NeighEnc => Some(Reduction::Autoencoder),
            Framework::Raw | Framework::Neigh => None,
        }
    }
}

impl fmt::Display for Framework {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Framework {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace(['_', '-', ' '], "+").replace("neig+", "neigh+");
        Ok(match norm.as_str() {
            "raw" => Framework::Raw,
            "pca" => Framework::Pca,
            "enc" => Framework::Enc,
            "neigh" | "neig" => Framework::Neigh,
            "neigh+pca" => Framework::NeighPca,
            "neigh+enc" => Framework::NeighEnc,
            _ => return Err(PipelineError::InvalidSpec(format!("unknown framework {s:?}"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduction {
    Pca,
    Autoencoder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputSource {
    Las { path: PathBuf },
    Csv { path: PathBuf },
    Synthetic(SynthSpec),
}

/// Autoencoder settings. Unset widths follow the framework defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AeSpec {
    pub dims: Option<[usize; 7]>,
    pub code_width: Option<usize>,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
    pub tied: bool,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub momentum: f64,
}

impl Default for AeSpec {
    fn default() -> Self {
        Self {
            dims: None,
            code_width: None,
            hidden_activation: Activation::Tanh,
            output_activation: Activation::Identity,
            tied: false,
            learning_rate: 0.01,
            epochs: 2000,
            batch_size: 1000,
            momentum: 0.0,
        }
    }
}

impl AeSpec {
    pub fn arch(&self, input_width: usize, neighbor: bool) -> AutoencoderArch {
        let mut arch = match self.dims {
            Some(dims) => AutoencoderArch::new(dims),
            None => {
                let code = self.code_width.unwrap_or(if neighbor { 40 } else { 5 });
                AutoencoderArch::default_for(input_width, neighbor, code)
            }
        };
        arch.hidden_activation = self.hidden_activation;
        arch.output_activation = self.output_activation;
        arch.tied = self.tied;
        arch
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed,
            momentum: self.momentum,
        }
    }
}

pub const DEFAULT_SUBSAMPLE: usize = 2000;
pub const DEFAULT_NEIGHBORS: usize = 15;
pub const DEFAULT_FOLDS: usize = 5;

/// Everything needed to reproduce one cross-validated run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSpec {
    pub input: InputSource,
    pub class_codes: Vec<u8>,
    /// `None` keeps every filtered point.
    pub subsample: Option<usize>,
    pub framework: Framework,
    pub k: usize,
    /// `None` picks 5 components, or 40 on neighbor matrices.
    pub pca_components: Option<usize>,
    pub autoencoder: AeSpec,
    pub classifier: ClassifierSpec,
    pub folds: usize,
    pub stratified: bool,
    /// Standardize each test split with its own statistics instead of the
    /// training split's.
    pub per_split_stats: bool,
    pub seed: u64,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            input: InputSource::Synthetic(SynthSpec::slabs(3000)),
            class_codes: TARGET_CLASS_CODES.to_vec(),
            subsample: Some(DEFAULT_SUBSAMPLE),
            framework: Framework::Raw,
            k: DEFAULT_NEIGHBORS,
            pca_components: None,
            autoencoder: AeSpec::default(),
            classifier: ClassifierSpec::rf(),
            folds: DEFAULT_FOLDS,
            stratified: true,
            per_split_stats: false,
            seed: 0,
        }
    }
}

impl ExperimentSpec {
    /// Full-size settings: 100,000 points and 200,000 autoencoder epochs
    /// in batches of 1,000.
    pub fn full_scale(mut self) -> Self {
        self.subsample = Some(100_000);
        self.autoencoder.epochs = 200_000;
        self.autoencoder.batch_size = 1000;
        self
    }

    pub fn pca_components(&self) -> usize {
        self.pca_components
            .unwrap_or(if self.framework.uses_neighbors() { 40 } else { 5 })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(PipelineError::InvalidSpec(m));
        if self.class_codes.is_empty() {
            return bad("no class codes selected".into());
        }
        if self.folds < 2 {
            return bad(format!("need at least 2 folds, got {}", self.folds));
        }
        if self.framework.uses_neighbors() && self.k == 0 {
            return bad("neighbor frameworks need k >= 1".into());
        }
        if self.subsample == Some(0) {
            return bad("subsample must be positive".into());
        }
        if self.pca_components == Some(0) {
            return bad("pca_components must be positive".into());
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| PipelineError::InvalidSpec(e.to_string()))
    }

    pub fn from_toml(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| PipelineError::InvalidSpec(e.to_string()))
    }
}

/// A grid of experiments sharing one base specification. In TOML the base
/// fields sit at top level next to `frameworks` and `[[classifiers]]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteSpec {
    #[serde(flatten)]
    pub base: ExperimentSpec,
    #[serde(default = "all_frameworks")]
    pub frameworks: Vec<Framework>,
    #[serde(default = "all_classifiers")]
    pub classifiers: Vec<ClassifierSpec>,
}

fn all_frameworks() -> Vec<Framework> {
    Framework::ALL.to_vec()
}

fn all_classifiers() -> Vec<ClassifierSpec> {
    vec![
        ClassifierSpec::knn(),
        ClassifierSpec::rf(),
        ClassifierSpec::rf_ens(),
        ClassifierSpec::nn(),
    ]
}

impl Default for SuiteSpec {
    fn default() -> Self {
        Self {
            base: ExperimentSpec::default(),
            frameworks: all_frameworks(),
            classifiers: all_classifiers(),
        }
    }
}

impl SuiteSpec {
    /// One spec per (framework, classifier) cell, frameworks outermost.
    pub fn experiments(&self) -> Vec<ExperimentSpec> {
        self.frameworks
            .iter()
            .flat_map(|&framework| {
                self.classifiers.iter().map(move |c| ExperimentSpec {
                    framework,
                    classifier: c.clone(),
                    ..self.base.clone()
                })
            })
            .collect()
    }

    pub fn from_toml(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| PipelineError::InvalidSpec(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| PipelineError::InvalidSpec(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn framework_names() {
        for f in Framework::ALL {
            assert_eq!(f.label().parse::<Framework>().unwrap(), f);
        }
        assert_eq!("Neig+PCA".parse::<Framework>().unwrap(), Framework::NeighPca);
        assert_eq!("neigh-enc".parse::<Framework>().unwrap(), Framework::NeighEnc);
        assert!("foo".parse::<Framework>().is_err());
    }

    #[test]
    fn pca_defaults_follow_framework() {
        let spec = ExperimentSpec {
            framework: Framework::NeighPca,
            ..ExperimentSpec::default()
        };
        assert_eq!(spec.pca_components(), 40);
        let spec = ExperimentSpec {
            framework: Framework::Pca,
            ..ExperimentSpec::default()
        };
        assert_eq!(spec.pca_components(), 5);
    }

    #[test]
    fn full_scale_preset() {
        let spec = ExperimentSpec::default().full_scale();
        assert_eq!(spec.subsample, Some(100_000));
        assert_eq!(spec.autoencoder.epochs, 200_000);
        assert_eq!(spec.autoencoder.batch_size, 1000);
    }

    #[test]
    fn toml_round_trips() {
        let spec = ExperimentSpec {
            framework: Framework::NeighEnc,
            classifier: ClassifierSpec::nn(),
            seed: 12,
            ..ExperimentSpec::default()
        };
        assert_eq!(ExperimentSpec::from_toml(&spec.to_toml().unwrap()).unwrap(), spec);
        let suite = SuiteSpec::default();
        let back = SuiteSpec::from_toml(&suite.to_toml().unwrap()).unwrap();
        assert_eq!(back, suite);
        assert_eq!(back.experiments().len(), 24);
    }

    #[test]
    fn minimal_suite_file() {
        let text = r#"
            seed = 3
            subsample = 500
            frameworks = ["raw", "neigh"]

            [input]
            kind = "csv"
            path = "points.csv"

            [[classifiers]]
            kind = "knn"
            k_vote = 3
        "#;
        let suite = SuiteSpec::from_toml(text).unwrap();
        let cells = suite.experiments();
        assert_eq!(cells.len(), 2);
        assert_eq!(cells[1].framework, Framework::Neigh);
        assert_eq!(cells[1].classifier, ClassifierSpec::Knn { k_vote: 3 });
        assert_eq!(cells[0].seed, 3);
        assert_eq!(cells[0].k, DEFAULT_NEIGHBORS);
    }
}
