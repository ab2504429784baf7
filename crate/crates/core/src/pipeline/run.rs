use std::collections::BTreeSet;
use std::fmt::Display;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::spec::{ExperimentSpec, InputSource, Reduction};
use super::synth::synth_generate;
use super::{PipelineError, Result};
use crate::classifiers::{Classifier, ClassifierSpec, FittedClassifier};
use crate::dimred::{ae_encode, ae_train, pca_fit, pca_transform, AutoencoderModel, PcaModel};
use crate::eval::{accuracy, error_rate, kfold_plan, ConfusionMatrix, CvResult};
use crate::features::{
    assemble_neighbor_matrix, normalize_rows, standardize_apply, standardize_fit, to_feature_matrix, FeatureMatrix,
    StandardizeStats,
};
use crate::las_io::{filter_classes, read_csv, read_las, subsample_uniform, PointCloud};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Record wall-clock stage timings in the report. Off by default so
    /// that reports of equal specs are byte-identical.
    pub timings: bool,
    /// Worker threads for suites; `None` lets the thread pool decide.
    pub workers: Option<usize>,
}

/// One pipeline stage with its input and output widths.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageInfo {
    pub name: String,
    pub input_width: usize,
    pub output_width: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub train_rows: usize,
    pub test_rows: usize,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub version: String,
    pub spec: ExperimentSpec,
    pub points_loaded: usize,
    pub points_discarded: usize,
    pub points_used: usize,
    pub class_codes: Vec<u8>,
    pub stages: Vec<StageInfo>,
    pub fold_sizes: Vec<usize>,
    pub stratified: bool,
    pub folds: Vec<FoldReport>,
    pub cv: CvResult,
    pub accuracy: f64,
    pub error_rate: f64,
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timings: Option<Vec<StageTiming>>,
}

impl RunReport {
    pub fn f1_mean(&self) -> f64 {
        self.cv.summary.mean
    }

    pub fn stage(&self, name: &str) -> Option<&StageInfo> {
        self.stages.iter().find(|s| s.name == name)
    }
}

/// SplitMix64 of `seed` mixed with a stage tag and an index, so every
/// stage and fold draws from its own stream.
pub fn derive_seed(seed: u64, tag: &str, index: u64) -> u64 {
    let mut h = seed ^ 0x9e37_79b9_7f4a_7c15;
    for b in tag.bytes().chain(index.to_le_bytes()) {
        h = (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = h.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn echo(spec: &ExperimentSpec) -> String {
    format!(
        "framework={} classifier={} seed={}",
        spec.framework.label(),
        spec.classifier.label(),
        spec.seed
    )
}

fn stage_err<'a, E: Display>(spec: &'a ExperimentSpec, stage: &str) -> impl Fn(E) -> PipelineError + 'a {
    let stage = stage.to_string();
    move |e| PipelineError::Stage {
        stage: stage.clone(),
        echo: echo(spec),
        message: e.to_string(),
    }
}

struct Timer {
    enabled: bool,
    entries: Vec<StageTiming>,
}

impl Timer {
    fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        if self.enabled {
            let seconds = start.elapsed().as_secs_f64();
            match self.entries.iter_mut().find(|t| t.stage == stage) {
                Some(t) => t.seconds += seconds,
                None => self.entries.push(StageTiming {
                    stage: stage.to_string(),
                    seconds,
                }),
            }
        }
        out
    }
}

/// Data after the fold-independent stages.
struct Prepared {
    matrix: FeatureMatrix,
    base_width: usize,
    points_loaded: usize,
    points_discarded: usize,
    warnings: Vec<String>,
}

fn load(spec: &ExperimentSpec, warnings: &mut Vec<String>) -> Result<PointCloud> {
    let err = stage_err(spec, "load");
    Ok(match &spec.input {
        InputSource::Las { path } => {
            let file = read_las(path).map_err(&err)?;
            warnings.extend(file.warnings.iter().map(|w| w.to_string()));
            file.cloud
        }
        InputSource::Csv { path } => {
            let (cloud, w) = read_csv(path).map_err(&err)?;
            warnings.extend(w.iter().map(|w| w.to_string()));
            cloud
        }
        InputSource::Synthetic(synth) => synth_generate(synth, spec.seed),
    })
}

fn prepare(spec: &ExperimentSpec, timer: &mut Timer) -> Result<Prepared> {
    spec.validate()?;
    let mut warnings = Vec::new();
    let cloud = timer.time("load", || load(spec, &mut warnings))?;
    let points_loaded = cloud.len();
    let codes: BTreeSet<u8> = spec.class_codes.iter().copied().collect();
    let filtered = timer.time("filter", || filter_classes(&cloud, &codes));
    let points_discarded = points_loaded - filtered.len();
    if points_discarded > 0 {
        log::info!("discarded {points_discarded} points outside classes {codes:?}");
    }
    let sampled = match spec.subsample {
        Some(s) => timer.time("subsample", || subsample_uniform(&filtered, s).map_err(stage_err(spec, "subsample")))?,
        None => filtered,
    };
    let base = to_feature_matrix(&sampled).map_err(stage_err(spec, "features"))?;
    let base_width = base.cols();
    let matrix = if spec.framework.uses_neighbors() {
        timer.time("neighbor_matrix", || {
            assemble_neighbor_matrix(&base, spec.k)
                .map(|nm| nm.into_inner())
                .map_err(stage_err(spec, "neighbor_matrix"))
        })?
    } else {
        base
    };
    Ok(Prepared {
        matrix,
        base_width,
        points_loaded,
        points_discarded,
        warnings,
    })
}

/// A fitted reduction stage.
#[derive(Debug, Clone)]
pub enum FittedReduction {
    Pca(PcaModel),
    Autoencoder(AutoencoderModel),
}

impl FittedReduction {
    pub fn transform(&self, x: &FeatureMatrix) -> crate::dimred::Result<FeatureMatrix> {
        match self {
            FittedReduction::Pca(m) => pca_transform(m, x),
            FittedReduction::Autoencoder(m) => ae_encode(m, x),
        }
    }

    pub fn output_width(&self) -> usize {
        match self {
            FittedReduction::Pca(m) => m.n_components(),
            FittedReduction::Autoencoder(m) => m.arch.code_width(),
        }
    }
}

/// Preprocessing fitted on one training set.
struct FittedTransform {
    stats: StandardizeStats,
    reduction: Option<FittedReduction>,
}

impl FittedTransform {
    fn fit(spec: &ExperimentSpec, train: &FeatureMatrix, fold: u64, timer: &mut Timer) -> Result<(Self, FeatureMatrix)> {
        let stats = timer.time("standardize", || standardize_fit(train).map_err(stage_err(spec, "standardize")))?;
        let std_train = standardize_apply(train, &stats).map_err(stage_err(spec, "standardize"))?;
        let (norm_train, _) = timer.time("normalize", || normalize_rows(&std_train).map_err(stage_err(spec, "normalize")))?;
        let reduction = match spec.framework.reduction() {
            None => None,
            Some(Reduction::Pca) => Some(FittedReduction::Pca(
                timer.time("pca", || pca_fit(&norm_train, spec.pca_components()).map_err(stage_err(spec, "pca")))?,
            )),
            Some(Reduction::Autoencoder) => {
                let arch = spec.autoencoder.arch(norm_train.cols(), spec.framework.uses_neighbors());
                let cfg = spec.autoencoder.train_config(derive_seed(spec.seed, "autoencoder", fold));
                Some(FittedReduction::Autoencoder(timer.time("autoencoder", || {
                    ae_train(&norm_train, &arch, &cfg).map_err(stage_err(spec, "autoencoder"))
                })?))
            }
        };
        let out = match &reduction {
            Some(r) => r.transform(&norm_train).map_err(stage_err(spec, "reduce"))?,
            None => norm_train,
        };
        Ok((Self { stats, reduction }, out))
    }

    fn apply(&self, spec: &ExperimentSpec, x: &FeatureMatrix) -> Result<(FeatureMatrix, usize)> {
        let own;
        let stats = if spec.per_split_stats {
            own = standardize_fit(x).map_err(stage_err(spec, "standardize"))?;
            &own
        } else {
            &self.stats
        };
        let std = standardize_apply(x, stats).map_err(stage_err(spec, "standardize"))?;
        let (norm, zero_rows) = normalize_rows(&std).map_err(stage_err(spec, "normalize"))?;
        let out = match &self.reduction {
            Some(r) => r.transform(&norm).map_err(stage_err(spec, "reduce"))?,
            None => norm,
        };
        Ok((out, zero_rows.len()))
    }
}

/// Stage list with widths for `spec` given `base_width` raw attributes,
/// computed without touching data.
pub fn plan_stages(spec: &ExperimentSpec, base_width: usize) -> Vec<StageInfo> {
    let stage = |name: &str, input_width, output_width| StageInfo {
        name: name.to_string(),
        input_width,
        output_width,
    };
    let mut stages = vec![
        stage("load", base_width, base_width),
        stage("filter", base_width, base_width),
        stage("subsample", base_width, base_width),
    ];
    let mut width = base_width;
    if spec.framework.uses_neighbors() {
        width = (spec.k + 1) * base_width;
        stages.push(stage("neighbor_matrix", base_width, width));
    }
    stages.push(stage("standardize", width, width));
    stages.push(stage("normalize", width, width));
    match spec.framework.reduction() {
        Some(Reduction::Pca) => {
            stages.push(stage("pca", width, spec.pca_components()));
            width = spec.pca_components();
        }
        Some(Reduction::Autoencoder) => {
            let code = spec.autoencoder.arch(width, spec.framework.uses_neighbors()).code_width();
            stages.push(stage("autoencoder", width, code));
            width = code;
        }
        None => {}
    }
    stages.push(stage("classifier", width, width));
    stages
}

/// Runs one cross-validated experiment.
pub fn run_experiment(spec: &ExperimentSpec, opts: &RunOptions) -> Result<RunReport> {
    let classifier = spec.classifier.clone();
    run_group(spec, &[classifier], opts).pop().expect("one result per classifier")
}

/// Cross-validates several classifiers on one framework, sharing the
/// per-fold preprocessing. Each result equals what [`run_experiment`]
/// returns for `base` with that classifier substituted.
pub fn run_group(base: &ExperimentSpec, classifiers: &[ClassifierSpec], opts: &RunOptions) -> Vec<Result<RunReport>> {
    let specs: Vec<ExperimentSpec> = classifiers
        .iter()
        .map(|c| ExperimentSpec {
            classifier: c.clone(),
            ..base.clone()
        })
        .collect();
    let mut timer = Timer {
        enabled: opts.timings,
        entries: Vec::new(),
    };
    let fail_all = |e: PipelineError| specs.iter().map(|_| Err(e.clone())).collect();
    let prepared = match prepare(base, &mut timer) {
        Ok(p) => p,
        Err(e) => return fail_all(e),
    };
    let x = &prepared.matrix;
    let plan = match kfold_plan(x.labels(), base.folds, base.seed, base.stratified) {
        Ok(p) => p,
        Err(e) => return fail_all(stage_err(base, "folds")(e)),
    };
    let mut warnings = prepared.warnings.clone();
    warnings.extend(plan.fallback.clone());

    let mut matrices: Vec<Result<Vec<ConfusionMatrix>>> = specs.iter().map(|_| Ok(Vec::new())).collect();
    let mut class_timers: Vec<Timer> = specs
        .iter()
        .map(|_| Timer {
            enabled: opts.timings,
            entries: Vec::new(),
        })
        .collect();
    let mut stages = None;
    let mut fold_reports: Vec<FoldReport> = Vec::new();
    for fold in 0..plan.k {
        let (train_idx, test_idx) = plan.split(fold);
        let train = x.select_rows(&train_idx);
        let test = x.select_rows(&test_idx);
        let fitted = FittedTransform::fit(base, &train, fold as u64, &mut timer)
            .and_then(|(t, tr)| t.apply(base, &test).map(|(te, zeros)| (t, tr, te, zeros)));
        let (transform, train_t, test_t, zero_rows) = match fitted {
            Ok(v) => v,
            Err(e) => return fail_all(e.annotate_fold(fold)),
        };
        if zero_rows > 0 {
            warnings.push(format!("fold {fold}: {zero_rows} held-out rows were all zero after standardizing"));
        }
        if stages.is_none() {
            let mut s = plan_stages(base, prepared.base_width);
            if let Some(r) = &transform.reduction {
                let last = s.len() - 2;
                s[last].output_width = r.output_width();
            }
            let n = s.len();
            s[n - 1].input_width = train_t.cols();
            s[n - 1].output_width = train_t.cols();
            stages = Some(s);
        }
        fold_reports.push(FoldReport {
            fold,
            train_rows: train_idx.len(),
            test_rows: test_idx.len(),
            f1: 0.0,
        });
        for (i, spec) in specs.iter().enumerate() {
            let Ok(acc) = &mut matrices[i] else { continue };
            let seed = derive_seed(spec.seed, "classifier", fold as u64);
            let outcome = class_timers[i].time("classifier", || {
                spec.classifier
                    .fit(&train_t, seed)
                    .and_then(|m| m.predict(&test_t))
                    .map_err(stage_err(spec, "classifier"))
                    .and_then(|pred| {
                        ConfusionMatrix::from_predictions(test_t.labels(), &pred, x.n_classes())
                            .map_err(stage_err(spec, "evaluate"))
                    })
            });
            match outcome {
                Ok(cm) => acc.push(cm),
                Err(e) => matrices[i] = Err(e.annotate_fold(fold)),
            }
        }
    }

    let stages = stages.unwrap_or_default();
    specs
        .iter()
        .zip(matrices)
        .zip(class_timers)
        .map(|((spec, cms), ct)| {
            let cv = CvResult::from_fold_matrices(cms?).map_err(stage_err(spec, "evaluate"))?;
            let mut folds = fold_reports.clone();
            for (f, score) in folds.iter_mut().zip(&cv.summary.fold_scores) {
                f.f1 = *score;
            }
            let mut warnings = warnings.clone();
            warnings.extend(cv.undefined_folds.iter().map(|f| format!("fold {f}: F1 undefined, scored as 0")));
            let timings = opts.timings.then(|| timer.entries.iter().chain(&ct.entries).cloned().collect());
            Ok(RunReport {
                version: crate::VERSION.to_string(),
                spec: spec.clone(),
                points_loaded: prepared.points_loaded,
                points_discarded: prepared.points_discarded,
                points_used: x.rows(),
                class_codes: x.class_map().codes().to_vec(),
                stages: stages.clone(),
                fold_sizes: plan.fold_sizes(),
                stratified: plan.stratified,
                folds,
                accuracy: accuracy(&cv.pooled).map_err(stage_err(spec, "evaluate"))?,
                error_rate: error_rate(&cv.pooled).map_err(stage_err(spec, "evaluate"))?,
                cv,
                warnings,
                timings,
            })
        })
        .collect()
}

impl PipelineError {
    fn annotate_fold(self, fold: usize) -> Self {
        match self {
            PipelineError::Stage { stage, echo, message } => PipelineError::Stage {
                stage,
                echo,
                message: format!("fold {fold}: {message}"),
            },
            other => other,
        }
    }
}

/// A pipeline fitted on every selected point, for saving and inspection.
#[derive(Debug, Clone)]
pub struct TrainedPipeline {
    pub spec: ExperimentSpec,
    pub class_codes: Vec<u8>,
    pub base_width: usize,
    pub stats: StandardizeStats,
    pub reduction: Option<FittedReduction>,
    pub classifier: FittedClassifier,
}

impl TrainedPipeline {
    /// Predicted class codes for a matrix shaped like the training input
    /// (raw attributes, or the neighbor matrix for Neigh frameworks).
    pub fn predict_codes(&self, x: &FeatureMatrix) -> Result<Vec<u8>> {
        let transform = FittedTransform {
            stats: self.stats.clone(),
            reduction: self.reduction.clone(),
        };
        let (xt, _) = transform.apply(&self.spec, x)?;
        let pred = self.classifier.predict(&xt).map_err(stage_err(&self.spec, "classifier"))?;
        Ok(pred.into_iter().map(|c| self.class_codes[c]).collect())
    }
}

/// Fits every stage on the whole prepared data set (no cross-validation).
pub fn fit_final(spec: &ExperimentSpec) -> Result<TrainedPipeline> {
    let mut timer = Timer {
        enabled: false,
        entries: Vec::new(),
    };
    let prepared = prepare(spec, &mut timer)?;
    let (transform, xt) = FittedTransform::fit(spec, &prepared.matrix, u64::MAX, &mut timer)?;
    let classifier = spec
        .classifier
        .fit(&xt, derive_seed(spec.seed, "classifier", u64::MAX))
        .map_err(stage_err(spec, "classifier"))?;
    Ok(TrainedPipeline {
        spec: spec.clone(),
        class_codes: prepared.matrix.class_map().codes().to_vec(),
        base_width: prepared.base_width,
        stats: transform.stats,
        reduction: transform.reduction,
        classifier,
    })
}

#[cfg(test)]
mod tests {
    use super::super::spec::Framework;
    use super::super::synth::{Layout, SynthClass, SynthSpec};
    use super::*;

    fn blobs() -> SynthSpec {
        let class = |code, x: f64| SynthClass {
            code,
            count: 200,
            layout: Layout::Patches { count: 1, radius: 4.0 },
            z_mean: x,
            z_sigma: 0.2,
            intensity_mean: 50.0 * x,
            intensity_sigma: 3.0,
            multi_return: 0.0,
        };
        SynthSpec {
            extent: 60.0,
            origin: [0.0, 0.0],
            scan_sigma: 1.0,
            seed: None,
            classes: vec![class(2, 1.0), class(9, 3.0), class(17, 5.0)],
        }
    }

    fn small_spec(framework: Framework, classifier: ClassifierSpec) -> ExperimentSpec {
        ExperimentSpec {
            input: InputSource::Synthetic(blobs()),
            subsample: None,
            framework,
            k: 3,
            classifier,
            autoencoder: crate::pipeline::AeSpec {
                epochs: 20,
                batch_size: 100,
                ..Default::default()
            },
            seed: 5,
            ..ExperimentSpec::default()
        }
    }

    #[test]
    fn raw_rf_on_separated_blobs() {
        let spec = small_spec(
            Framework::Raw,
            ClassifierSpec::Rf(crate::classifiers::ForestParams {
                n_trees: 20,
                ..Default::default()
            }),
        );
        let report = run_experiment(&spec, &RunOptions::default()).unwrap();
        assert_eq!(report.folds.len(), 5);
        assert_eq!(report.cv.pooled.n_classes(), 3);
        assert_eq!(report.cv.pooled.total(), 600);
        assert!(report.f1_mean() > 0.9);
        assert_eq!(report.class_codes, vec![2, 9, 17]);
    }

    #[test]
    fn neighbor_width_bookkeeping() {
        let spec = small_spec(Framework::Neigh, ClassifierSpec::knn());
        let report = run_experiment(&spec, &RunOptions::default()).unwrap();
        assert_eq!(report.stage("neighbor_matrix").unwrap().output_width, 28);
        assert_eq!(report.stage("classifier").unwrap().input_width, 28);
        assert_eq!(report.stages, plan_stages(&spec, 7));
    }

    #[test]
    fn stage_order_per_framework() {
        let names = |f| -> Vec<String> {
            plan_stages(&small_spec(f, ClassifierSpec::knn()), 7)
                .into_iter()
                .map(|s| s.name)
                .collect()
        };
        assert_eq!(
            names(Framework::NeighEnc),
            ["load", "filter", "subsample", "neighbor_matrix", "standardize", "normalize", "autoencoder", "classifier"]
        );
        assert_eq!(names(Framework::Pca), ["load", "filter", "subsample", "standardize", "normalize", "pca", "classifier"]);
        let spec = ExperimentSpec {
            framework: Framework::NeighPca,
            ..ExperimentSpec::default()
        };
        let stages = plan_stages(&spec, 7);
        assert_eq!(stages[3].output_width, 112);
        assert_eq!(stages[6].output_width, 40);
    }

    #[test]
    fn group_matches_single_runs_and_is_deterministic() {
        let spec = small_spec(Framework::Enc, ClassifierSpec::knn());
        let classifiers = [ClassifierSpec::knn(), ClassifierSpec::Knn { k_vote: 1 }];
        let group = run_group(&spec, &classifiers, &RunOptions::default());
        for (c, res) in classifiers.iter().zip(group) {
            let single = run_experiment(
                &ExperimentSpec {
                    classifier: c.clone(),
                    ..spec.clone()
                },
                &RunOptions::default(),
            )
            .unwrap();
            let res = res.unwrap();
            assert_eq!(serde_json::to_string(&res).unwrap(), serde_json::to_string(&single).unwrap());
        }
    }

    #[test]
    fn stage_errors_name_the_stage() {
        let mut spec = small_spec(Framework::Pca, ClassifierSpec::knn());
        spec.pca_components = Some(50);
        match run_experiment(&spec, &RunOptions::default()) {
            Err(PipelineError::Stage { stage, echo, message }) => {
                assert_eq!(stage, "pca");
                assert!(echo.contains("framework=PCA"));
                assert!(message.starts_with("fold 0"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn timings_only_on_request() {
        let spec = small_spec(Framework::Raw, ClassifierSpec::knn());
        assert!(run_experiment(&spec, &RunOptions::default()).unwrap().timings.is_none());
        let timed = run_experiment(
            &spec,
            &RunOptions {
                timings: true,
                workers: None,
            },
        )
        .unwrap();
        assert!(timed.timings.unwrap().iter().any(|t| t.stage == "classifier"));
    }

    #[test]
    fn final_fit_predicts_codes() {
        let spec = small_spec(Framework::Pca, ClassifierSpec::knn());
        let model = fit_final(&spec).unwrap();
        let cloud = synth_generate(&blobs(), spec.seed);
        let x = to_feature_matrix(&cloud).unwrap();
        let codes = model.predict_codes(&x).unwrap();
        let hits = codes.iter().zip(&cloud.points).filter(|(c, p)| **c == p.class_code).count();
        assert!(hits as f64 / codes.len() as f64 > 0.9);
    }
}
