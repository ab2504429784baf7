//! Saving fitted pipelines: numeric arrays go to a versioned binary file,
//! everything needed to interpret them to a JSON sidecar next to it
//! (`<file>.json`).

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, RowDVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifiers::{
    Classifier, DecisionTree, FittedClassifier, ForestEnsemble, ForestParams, KnnClassifier, MlpClassifier, MlpParams, Node,
    RandomForest,
};
use crate::dimred::{AutoencoderArch, AutoencoderModel, PcaModel, TrainConfig};
use crate::features::StandardizeStats;
use crate::nn::{Activation, Layer, Network};
use crate::pipeline::{ExperimentSpec, FittedReduction, TrainedPipeline};

const MAGIC: &[u8; 8] = b"PCMODEL\0";
pub const FORMAT_VERSION: u32 = 1;
const LEAF: u64 = u64::MAX;

#[derive(Debug, Error)]
pub enum ModelIoError {
    #[error("not a model file (bad magic)")]
    BadMagic,
    #[error("unsupported model format version {0}")]
    UnsupportedVersion(u32),
    #[error("model file is missing array {0:?}")]
    MissingArray(String),
    #[error("corrupt model: {0}")]
    Corrupt(String),
    #[error("sidecar: {0}")]
    Sidecar(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = ModelIoError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
enum Array {
    F64(Vec<f64>),
    U64(Vec<u64>),
}

/// Named numeric arrays.
#[derive(Debug, Default, Clone, PartialEq)]
struct Blob {
    arrays: BTreeMap<String, Array>,
}

impl Blob {
    fn f64(&mut self, name: impl Into<String>, v: impl IntoIterator<Item = f64>) {
        self.arrays.insert(name.into(), Array::F64(v.into_iter().collect()));
    }

    fn u64(&mut self, name: impl Into<String>, v: impl IntoIterator<Item = u64>) {
        self.arrays.insert(name.into(), Array::U64(v.into_iter().collect()));
    }

    fn get_f64(&self, name: &str) -> Result<&[f64]> {
        match self.arrays.get(name) {
            Some(Array::F64(v)) => Ok(v),
            _ => Err(ModelIoError::MissingArray(name.to_string())),
        }
    }

    fn get_u64(&self, name: &str) -> Result<&[u64]> {
        match self.arrays.get(name) {
            Some(Array::U64(v)) => Ok(v),
            _ => Err(ModelIoError::MissingArray(name.to_string())),
        }
    }

    fn get_usize(&self, name: &str) -> Result<Vec<usize>> {
        self.get_u64(name)?
            .iter()
            .map(|&v| usize::try_from(v).map_err(|_| ModelIoError::Corrupt(format!("{name}: value {v} too large"))))
            .collect()
    }

    fn write<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(self.arrays.len() as u32).to_le_bytes())?;
        for (name, array) in &self.arrays {
            w.write_all(&(name.len() as u16).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            match array {
                Array::F64(v) => {
                    w.write_all(&[0])?;
                    w.write_all(&(v.len() as u64).to_le_bytes())?;
                    for x in v {
                        w.write_all(&x.to_le_bytes())?;
                    }
                }
                Array::U64(v) => {
                    w.write_all(&[1])?;
                    w.write_all(&(v.len() as u64).to_le_bytes())?;
                    for x in v {
                        w.write_all(&x.to_le_bytes())?;
                    }
                }
            }
        }
        Ok(())
    }

    fn read<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| ModelIoError::BadMagic)?;
        if &magic != MAGIC {
            return Err(ModelIoError::BadMagic);
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != FORMAT_VERSION {
            return Err(ModelIoError::UnsupportedVersion(version));
        }
        r.read_exact(&mut b4)?;
        let count = u32::from_le_bytes(b4);
        let mut blob = Blob::default();
        for _ in 0..count {
            let mut b2 = [0u8; 2];
            r.read_exact(&mut b2)?;
            let mut name = vec![0u8; u16::from_le_bytes(b2) as usize];
            r.read_exact(&mut name)?;
            let name = String::from_utf8(name).map_err(|_| ModelIoError::Corrupt("array name is not UTF-8".into()))?;
            let mut kind = [0u8; 1];
            r.read_exact(&mut kind)?;
            let mut b8 = [0u8; 8];
            r.read_exact(&mut b8)?;
            let len = u64::from_le_bytes(b8) as usize;
            let mut bytes = Vec::new();
            r.by_ref().take(len as u64 * 8).read_to_end(&mut bytes)?;
            if bytes.len() != len * 8 {
                return Err(ModelIoError::Corrupt(format!("array {name:?} is truncated")));
            }
            let words = bytes.chunks_exact(8).map(|c| c.try_into().unwrap());
            let array = match kind[0] {
                0 => Array::F64(words.map(f64::from_le_bytes).collect()),
                1 => Array::U64(words.map(u64::from_le_bytes).collect()),
                k => return Err(ModelIoError::Corrupt(format!("unknown array kind {k}"))),
            };
            blob.arrays.insert(name, array);
        }
        Ok(blob)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerMeta {
    pub activation: Activation,
    pub tied_to: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkMeta {
    pub dims: Vec<usize>,
    pub layers: Vec<LayerMeta>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReductionMeta {
    Pca {
        input_width: usize,
        components: usize,
        explained_variance: Vec<f64>,
    },
    Autoencoder {
        arch: AutoencoderArch,
        config: TrainConfig,
        network: NetworkMeta,
        final_loss: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassifierMeta {
    Knn {
        k_vote: usize,
        training_rows: usize,
        width: usize,
    },
    Rf {
        params: ForestParams,
        seed: u64,
        n_trees: usize,
        max_tree_depth: usize,
        total_leaves: usize,
    },
    RfEns {
        n_forests: usize,
        params: ForestParams,
        seeds: Vec<u64>,
        max_tree_depth: usize,
    },
    Nn {
        params: MlpParams,
        network: NetworkMeta,
        final_loss: Option<f64>,
    },
}

/// Human-readable description of a saved model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub format_version: u32,
    pub library_version: String,
    pub spec: ExperimentSpec,
    pub class_codes: Vec<u8>,
    pub base_width: usize,
    pub input_width: usize,
    pub reduction: Option<ReductionMeta>,
    pub classifier: ClassifierMeta,
    pub n_classes: usize,
}

fn network_meta(net: &Network) -> NetworkMeta {
    NetworkMeta {
        dims: net.dims().to_vec(),
        layers: net
            .layers()
            .iter()
            .map(|l| LayerMeta {
                activation: l.activation,
                tied_to: l.tied_to,
            })
            .collect(),
    }
}

fn put_network(blob: &mut Blob, prefix: &str, net: &Network) {
    for (l, layer) in net.layers().iter().enumerate() {
        let w = &layer.weights;
        blob.f64(
            format!("{prefix}.layer{l}.weights"),
            (0..w.nrows()).flat_map(|r| (0..w.ncols()).map(move |c| w[(r, c)])),
        );
        blob.f64(format!("{prefix}.layer{l}.bias"), layer.bias.iter().copied());
    }
}

fn get_network(blob: &Blob, prefix: &str, meta: &NetworkMeta) -> Result<Network> {
    if meta.layers.len() + 1 != meta.dims.len() {
        return Err(ModelIoError::Corrupt(format!("{prefix}: layer count does not match widths")));
    }
    let mut layers = Vec::with_capacity(meta.layers.len());
    for (l, lm) in meta.layers.iter().enumerate() {
        let w = blob.get_f64(&format!("{prefix}.layer{l}.weights"))?;
        let weights = if lm.tied_to.is_some() {
            DMatrix::zeros(0, 0)
        } else {
            let (r, c) = (meta.dims[l], meta.dims[l + 1]);
            if w.len() != r * c {
                return Err(ModelIoError::Corrupt(format!("{prefix}: layer {l} weight count")));
            }
            DMatrix::from_row_slice(r, c, w)
        };
        layers.push(Layer {
            weights,
            bias: RowDVector::from_row_slice(blob.get_f64(&format!("{prefix}.layer{l}.bias"))?),
            activation: lm.activation,
            tied_to: lm.tied_to,
        });
    }
    Network::from_parts(meta.dims.clone(), layers).map_err(|e| ModelIoError::Corrupt(e.to_string()))
}

fn put_forest(blob: &mut Blob, prefix: &str, forest: &RandomForest) {
    let n_classes = forest.n_classes();
    let mut offsets = vec![0u64];
    let (mut feature, mut threshold, mut left, mut right, mut counts) = (vec![], vec![], vec![], vec![], vec![]);
    for tree in forest.trees() {
        for node in tree.nodes() {
            match node {
                Node::Leaf { counts: c } => {
                    feature.push(LEAF);
                    threshold.push(0.0);
                    left.push(0);
                    right.push(0);
                    counts.extend(c.iter().map(|&v| v as u64));
                }
                Node::Split {
                    feature: f,
                    threshold: t,
                    left: l,
                    right: r,
                } => {
                    feature.push(*f as u64);
                    threshold.push(*t);
                    left.push(*l as u64);
                    right.push(*r as u64);
                    counts.extend(std::iter::repeat_n(0, n_classes));
                }
            }
        }
        offsets.push(feature.len() as u64);
    }
    blob.u64(format!("{prefix}.tree_offsets"), offsets);
    blob.u64(format!("{prefix}.feature"), feature);
    blob.f64(format!("{prefix}.threshold"), threshold);
    blob.u64(format!("{prefix}.left"), left);
    blob.u64(format!("{prefix}.right"), right);
    blob.u64(format!("{prefix}.counts"), counts);
    blob.u64(
        format!("{prefix}.shape"),
        [forest.n_features() as u64, n_classes as u64, forest.seed()],
    );
}

fn get_forest(blob: &Blob, prefix: &str, params: &ForestParams) -> Result<RandomForest> {
    let shape = blob.get_u64(&format!("{prefix}.shape"))?;
    let [n_features, n_classes, seed] = shape else {
        return Err(ModelIoError::Corrupt(format!("{prefix}: bad shape")));
    };
    let (n_features, n_classes) = (*n_features as usize, *n_classes as usize);
    let offsets = blob.get_usize(&format!("{prefix}.tree_offsets"))?;
    let feature = blob.get_u64(&format!("{prefix}.feature"))?;
    let threshold = blob.get_f64(&format!("{prefix}.threshold"))?;
    let left = blob.get_usize(&format!("{prefix}.left"))?;
    let right = blob.get_usize(&format!("{prefix}.right"))?;
    let counts = blob.get_usize(&format!("{prefix}.counts"))?;
    let n = feature.len();
    if [threshold.len(), left.len(), right.len()].iter().any(|&l| l != n)
        || counts.len() != n * n_classes
        || offsets.last() != Some(&n)
        || offsets.windows(2).any(|w| w[0] > w[1])
    {
        return Err(ModelIoError::Corrupt(format!("{prefix}: inconsistent node arrays")));
    }
    let mut trees = Vec::with_capacity(offsets.len().saturating_sub(1));
    for w in offsets.windows(2) {
        let nodes = (w[0]..w[1])
            .map(|i| {
                if feature[i] == LEAF {
                    Node::Leaf {
                        counts: counts[i * n_classes..(i + 1) * n_classes].to_vec(),
                    }
                } else {
                    Node::Split {
                        feature: feature[i] as usize,
                        threshold: threshold[i],
                        left: left[i],
                        right: right[i],
                    }
                }
            })
            .collect();
        trees.push(DecisionTree::from_parts(nodes, n_features, n_classes).map_err(|e| ModelIoError::Corrupt(e.to_string()))?);
    }
    Ok(RandomForest::from_parts(trees, params.clone(), *seed, n_classes, n_features))
}

fn encode(model: &TrainedPipeline) -> (Blob, ModelMeta) {
    let mut blob = Blob::default();
    blob.f64("std.mean", model.stats.mean.iter().copied());
    blob.f64("std.std", model.stats.std.iter().copied());
    blob.u64("std.degenerate", model.stats.degenerate.iter().map(|&d| u64::from(d)));

    let reduction = model.reduction.as_ref().map(|r| match r {
        FittedReduction::Pca(p) => {
            blob.f64("pca.mean", p.mean.iter().copied());
            let c = &p.components;
            blob.f64(
                "pca.components",
                (0..c.nrows()).flat_map(|r| (0..c.ncols()).map(move |j| c[(r, j)])),
            );
            blob.f64("pca.variance", p.explained_variance.iter().copied());
            blob.u64("pca.shape", [c.nrows() as u64, c.ncols() as u64, p.n_samples as u64]);
            ReductionMeta::Pca {
                input_width: p.input_width(),
                components: p.n_components(),
                explained_variance: p.explained_variance.clone(),
            }
        }
        FittedReduction::Autoencoder(ae) => {
            put_network(&mut blob, "ae", &ae.network);
            blob.f64("ae.loss_log", ae.loss_log.iter().copied());
            ReductionMeta::Autoencoder {
                arch: ae.arch.clone(),
                config: ae.config.clone(),
                network: network_meta(&ae.network),
                final_loss: ae.final_loss(),
            }
        }
    });

    let classifier = match &model.classifier {
        FittedClassifier::Knn(k) => {
            let (data, labels) = k.training_data();
            blob.f64("knn.data", data.iter().copied());
            blob.u64("knn.labels", labels.iter().map(|&l| l as u64));
            blob.u64("knn.shape", [k.width() as u64, k.k_vote() as u64, k.n_classes() as u64]);
            ClassifierMeta::Knn {
                k_vote: k.k_vote(),
                training_rows: k.training_rows(),
                width: k.width(),
            }
        }
        FittedClassifier::Rf(f) => {
            put_forest(&mut blob, "rf", f);
            ClassifierMeta::Rf {
                params: f.params().clone(),
                seed: f.seed(),
                n_trees: f.trees().len(),
                max_tree_depth: f.trees().iter().map(DecisionTree::depth).max().unwrap_or(0),
                total_leaves: f.trees().iter().map(DecisionTree::n_leaves).sum(),
            }
        }
        FittedClassifier::RfEns(e) => {
            for (i, f) in e.forests().iter().enumerate() {
                put_forest(&mut blob, &format!("ens{i}"), f);
            }
            ClassifierMeta::RfEns {
                n_forests: e.forests().len(),
                params: e.forests()[0].params().clone(),
                seeds: e.forests().iter().map(RandomForest::seed).collect(),
                max_tree_depth: e
                    .forests()
                    .iter()
                    .flat_map(|f| f.trees())
                    .map(DecisionTree::depth)
                    .max()
                    .unwrap_or(0),
            }
        }
        FittedClassifier::Nn(m) => {
            put_network(&mut blob, "mlp", m.network());
            blob.f64("mlp.loss_log", m.loss_log().iter().copied());
            ClassifierMeta::Nn {
                params: m.params().clone(),
                network: network_meta(m.network()),
                final_loss: m.loss_log().last().copied(),
            }
        }
    };
    let meta = ModelMeta {
        format_version: FORMAT_VERSION,
        library_version: crate::VERSION.to_string(),
        spec: model.spec.clone(),
        class_codes: model.class_codes.clone(),
        base_width: model.base_width,
        input_width: model.stats.mean.len(),
        reduction,
        classifier,
        n_classes: model.class_codes.len(),
    };
    (blob, meta)
}

fn decode(blob: &Blob, meta: &ModelMeta) -> Result<TrainedPipeline> {
    if meta.format_version != FORMAT_VERSION {
        return Err(ModelIoError::UnsupportedVersion(meta.format_version));
    }
    let stats = StandardizeStats {
        mean: blob.get_f64("std.mean")?.to_vec(),
        std: blob.get_f64("std.std")?.to_vec(),
        degenerate: blob.get_u64("std.degenerate")?.iter().map(|&d| d != 0).collect(),
    };
    let reduction = match &meta.reduction {
        None => None,
        Some(ReductionMeta::Pca { .. }) => {
            let shape = blob.get_usize("pca.shape")?;
            let [p, d, n_samples] = shape[..] else {
                return Err(ModelIoError::Corrupt("pca.shape".into()));
            };
            let comps = blob.get_f64("pca.components")?;
            if comps.len() != p * d {
                return Err(ModelIoError::Corrupt("pca.components size".into()));
            }
            Some(FittedReduction::Pca(PcaModel {
                mean: blob.get_f64("pca.mean")?.to_vec(),
                components: DMatrix::from_row_slice(p, d, comps),
                explained_variance: blob.get_f64("pca.variance")?.to_vec(),
                n_samples,
            }))
        }
        Some(ReductionMeta::Autoencoder { arch, config, network, .. }) => {
            Some(FittedReduction::Autoencoder(AutoencoderModel {
                arch: arch.clone(),
                config: config.clone(),
                network: get_network(blob, "ae", network)?,
                loss_log: blob.get_f64("ae.loss_log")?.to_vec(),
            }))
        }
    };
    let classifier = match &meta.classifier {
        ClassifierMeta::Knn { .. } => {
            let shape = blob.get_usize("knn.shape")?;
            let [cols, k_vote, n_classes] = shape[..] else {
                return Err(ModelIoError::Corrupt("knn.shape".into()));
            };
            let data = blob.get_f64("knn.data")?.to_vec();
            let labels = blob.get_usize("knn.labels")?;
            if cols == 0 || data.len() != labels.len() * cols || labels.iter().any(|&l| l >= n_classes) {
                return Err(ModelIoError::Corrupt("knn arrays".into()));
            }
            FittedClassifier::Knn(KnnClassifier::from_parts(cols, data, labels, k_vote, n_classes))
        }
        ClassifierMeta::Rf { params, .. } => FittedClassifier::Rf(get_forest(blob, "rf", params)?),
        ClassifierMeta::RfEns { n_forests, params, .. } => {
            let forests = (0..*n_forests)
                .map(|i| get_forest(blob, &format!("ens{i}"), params))
                .collect::<Result<Vec<_>>>()?;
            FittedClassifier::RfEns(ForestEnsemble::from_forests(forests).map_err(|e| ModelIoError::Corrupt(e.to_string()))?)
        }
        ClassifierMeta::Nn { params, network, .. } => FittedClassifier::Nn(MlpClassifier::from_parts(
            get_network(blob, "mlp", network)?,
            params.clone(),
            blob.get_f64("mlp.loss_log")?.to_vec(),
        )),
    };
    Ok(TrainedPipeline {
        spec: meta.spec.clone(),
        class_codes: meta.class_codes.clone(),
        base_width: meta.base_width,
        stats,
        reduction,
        classifier,
    })
}

/// `<path>.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes the binary model to `path` and its sidecar to `<path>.json`.
pub fn save_model(model: &TrainedPipeline, path: &Path) -> Result<ModelMeta> {
    let (blob, meta) = encode(model);
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    blob.write(&mut w)?;
    w.flush()?;
    std::fs::write(sidecar_path(path), serde_json::to_string_pretty(&meta)? + "\n")?;
    Ok(meta)
}

pub fn load_model(path: &Path) -> Result<TrainedPipeline> {
    let meta = read_meta(path)?;
    let blob = Blob::read(std::io::BufReader::new(std::fs::File::open(path)?))?;
    decode(&blob, &meta)
}

/// Reads only the sidecar of the model at `path`.
pub fn read_meta(path: &Path) -> Result<ModelMeta> {
    let text = std::fs::read_to_string(sidecar_path(path))?;
    Ok(serde_json::from_str(&text)?)
}
