use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use pointclass::classifiers::ClassifierSpec;
use pointclass::las_io::{read_csv, read_las, write_csv, write_las, PointCloud};
use pointclass::model_io::{load_model, read_meta, save_model, ClassifierMeta, ReductionMeta};
use pointclass::pipeline::{
    fit_final, run_experiment, run_suite, synth_generate, ExperimentSpec, Framework, InputSource, RunOptions,
    SuiteSpec, SynthSpec,
};

/// LiDAR point classification experiments: neighbor matrices, PCA and
/// autoencoder reduction, four classifiers, cross-validated micro-F1.
#[derive(Parser)]
#[command(name = "pointclass", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Read a LAS or CSV point file, print a summary and optionally convert it to CSV.
    Parse {
        input: PathBuf,
        /// Write the points as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Generate a synthetic labeled cloud.
    Synth {
        /// Output file; `.las` writes LAS 1.2 format 1, anything else CSV.
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long, default_value_t = 3000)]
        n: usize,
        /// `slabs` (four classes) or `two-planes`.
        #[arg(long, default_value = "slabs")]
        preset: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Cross-validate one framework/classifier combination and emit a JSON report.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        framework: Option<String>,
        /// knn, rf, rf-ens or nn.
        #[arg(long)]
        classifier: Option<String>,
        /// Also fit on all selected points and save the model here
        /// (sidecar written to `<path>.json`).
        #[arg(long)]
        save_model: Option<PathBuf>,
    },
    /// Run a frameworks × classifiers grid and print the table.
    Suite {
        #[command(flatten)]
        common: Common,
        /// Comma-separated frameworks (default: all six).
        #[arg(long, value_delimiter = ',')]
        frameworks: Vec<String>,
        /// Comma-separated classifiers (default: all four).
        #[arg(long, value_delimiter = ',')]
        classifiers: Vec<String>,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        text: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Saved-model utilities.
    Model {
        #[command(subcommand)]
        command: ModelCommand,
    },
}

#[derive(Subcommand)]
enum ModelCommand {
    /// Print dimensions and hyperparameters of a saved model.
    Inspect {
        path: PathBuf,
        /// Also load the binary part and check it against the sidecar.
        #[arg(long)]
        verify: bool,
    },
}

/// Options shared by `run` and `suite`; flags override the config file.
#[derive(Args)]
struct Common {
    /// TOML experiment (run) or suite (suite) file.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// LAS or CSV input, chosen by extension.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Use the synthetic slab scene with this many points.
    #[arg(long, conflicts_with = "input")]
    synthetic: Option<usize>,
    #[arg(long)]
    subsample: Option<usize>,
    /// Keep every filtered point.
    #[arg(long, conflicts_with = "subsample")]
    all_points: bool,
    /// Neighbor count for neighbor-matrix frameworks.
    #[arg(long)]
    k: Option<usize>,
    /// PCA components.
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    no_stratify: bool,
    /// Standardize test splits with their own mean and std.
    #[arg(long)]
    per_split_stats: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    ae_epochs: Option<usize>,
    /// 100,000 points, 200,000 autoencoder epochs, batch 1,000.
    #[arg(long)]
    full_scale: bool,
    /// Include wall-clock stage timings in reports.
    #[arg(long)]
    timings: bool,
    /// Write the JSON report here instead of stdout.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

impl Common {
    fn apply(&self, spec: &mut ExperimentSpec) {
        if let Some(path) = &self.input {
            spec.input = input_for(path);
        }
        if let Some(n) = self.synthetic {
            spec.input = InputSource::Synthetic(SynthSpec::slabs(n));
        }
        if self.full_scale {
            *spec = spec.clone().full_scale();
        }
        if let Some(s) = self.subsample {
            spec.subsample = Some(s);
        }
        if self.all_points {
            spec.subsample = None;
        }
        if let Some(k) = self.k {
            spec.k = k;
        }
        if let Some(p) = self.p {
            spec.pca_components = Some(p);
        }
        if let Some(f) = self.folds {
            spec.folds = f;
        }
        if self.no_stratify {
            spec.stratified = false;
        }
        if self.per_split_stats {
            spec.per_split_stats = true;
        }
        if let Some(seed) = self.seed {
            spec.seed = seed;
        }
        if let Some(e) = self.ae_epochs {
            spec.autoencoder.epochs = e;
        }
    }

    fn options(&self, workers: Option<usize>) -> RunOptions {
        RunOptions {
            timings: self.timings,
            workers,
        }
    }
}

fn is_las(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("las") || e.eq_ignore_ascii_case("laz"))
}

fn input_for(path: &Path) -> InputSource {
    if is_las(path) {
        InputSource::Las { path: path.to_path_buf() }
    } else {
        InputSource::Csv { path: path.to_path_buf() }
    }
}

fn parse_classifier(s: &str) -> Result<ClassifierSpec> {
    ClassifierSpec::from_label(s).with_context(|| format!("unknown classifier {s:?} (expected knn, rf, rf-ens or nn)"))
}

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_points(path: &Path) -> Result<(PointCloud, Vec<String>)> {
    if is_las(path) {
        let file = read_las(path).with_context(|| format!("reading {}", path.display()))?;
        let h = &file.header;
        println!(
            "LAS {}.{} point format {} ({} bytes/record), {} points",
            h.version_major, h.version_minor, h.point_data_format, h.point_record_length, h.point_count
        );
        Ok((file.cloud, file.warnings.iter().map(ToString::to_string).collect()))
    } else {
        let (cloud, warnings) = read_csv(path).with_context(|| format!("reading {}", path.display()))?;
        Ok((cloud, warnings.iter().map(ToString::to_string).collect()))
    }
}

fn cmd_parse(input: &Path, csv: Option<&Path>) -> Result<()> {
    let (cloud, warnings) = load_points(input)?;
    println!("{} points", cloud.len());
    for (code, count) in cloud.class_counts() {
        println!("  class {code:>3}: {count}");
    }
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    if let Some(path) = csv {
        let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
        write_csv(&cloud, std::io::BufWriter::new(file))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_synth(out: &Path, n: usize, preset: &str, seed: u64) -> Result<()> {
    let spec = match preset {
        "slabs" => SynthSpec::slabs(n),
        "two-planes" => SynthSpec::two_planes(n / 2, 5.0, 0.1),
        other => bail!("unknown preset {other:?} (expected slabs or two-planes)"),
    };
    let cloud = synth_generate(&spec, seed);
    if is_las(out) {
        let bytes = write_las(&cloud, 1, [0.001; 3], [spec.origin[0], spec.origin[1], 0.0])?;
        fs::write(out, bytes)?;
    } else {
        write_csv(&cloud, std::io::BufWriter::new(fs::File::create(out)?))?;
    }
    println!("wrote {} points to {}", cloud.len(), out.display());
    Ok(())
}

fn cmd_run(common: &Common, framework: Option<&str>, classifier: Option<&str>, save: Option<&Path>) -> Result<()> {
    let mut spec = match &common.config {
        Some(path) => ExperimentSpec::from_toml(&fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?)?,
        None => ExperimentSpec::default(),
    };
    common.apply(&mut spec);
    if let Some(f) = framework {
        spec.framework = f.parse::<Framework>()?;
    }
    if let Some(c) = classifier {
        spec.classifier = parse_classifier(c)?;
    }
    let report = run_experiment(&spec, &common.options(None))?;
    eprintln!(
        "{} / {}: F1 {}  accuracy {:.4}  error {:.4}",
        spec.framework,
        spec.classifier.label(),
        report.cv.summary,
        report.accuracy,
        report.error_rate
    );
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    write_output(common.out.as_deref(), &(serde_json::to_string_pretty(&report)? + "\n"))?;
    if let Some(path) = save {
        let model = fit_final(&spec)?;
        save_model(&model, path)?;
        eprintln!("saved model to {}", path.display());
    }
    Ok(())
}

fn cmd_suite(
    common: &Common,
    frameworks: &[String],
    classifiers: &[String],
    csv: Option<&Path>,
    text: Option<&Path>,
    workers: Option<usize>,
) -> Result<bool> {
    let mut suite = match &common.config {
        Some(path) => SuiteSpec::from_toml(&fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?)?,
        None => SuiteSpec::default(),
    };
    common.apply(&mut suite.base);
    if !frameworks.is_empty() {
        suite.frameworks = frameworks.iter().map(|f| f.parse()).collect::<Result<_, _>>()?;
    }
    if !classifiers.is_empty() {
        suite.classifiers = classifiers.iter().map(|c| parse_classifier(c)).collect::<Result<_>>()?;
    }
    let report = run_suite(&suite.experiments(), &common.options(workers));
    let table = report.to_text();
    match text {
        Some(path) => fs::write(path, &table)?,
        None => eprint!("{table}"),
    }
    if let Some(path) = csv {
        fs::write(path, report.to_csv())?;
    }
    if let Some(path) = &common.out {
        fs::write(path, serde_json::to_string_pretty(&report)? + "\n")?;
    }
    Ok(report.failed() == 0)
}

fn cmd_inspect(path: &Path, verify: bool) -> Result<()> {
    let meta = read_meta(path).with_context(|| format!("reading sidecar of {}", path.display()))?;
    println!("model format {} (library {})", meta.format_version, meta.library_version);
    println!("framework:  {}", meta.spec.framework);
    println!("classes:    {:?}", meta.class_codes);
    println!("input:      {} attributes, {} columns after feature assembly", meta.base_width, meta.input_width);
    match &meta.reduction {
        None => println!("reduction:  none"),
        Some(ReductionMeta::Pca {
            input_width,
            components,
            explained_variance,
        }) => {
            let total: f64 = explained_variance.iter().sum();
            println!("reduction:  PCA {input_width} -> {components} (explained variance sum {total:.4})");
        }
        Some(ReductionMeta::Autoencoder { arch, config, final_loss, .. }) => {
            println!(
                "reduction:  autoencoder {:?}, {:?}/{:?}, tied={}",
                arch.dims, arch.hidden_activation, arch.output_activation, arch.tied
            );
            println!(
                "            lr {} epochs {} batch {} final loss {}",
                config.learning_rate,
                config.epochs,
                config.batch_size,
                final_loss.map_or("-".into(), |l| format!("{l:.6}"))
            );
        }
    }
    match &meta.classifier {
        ClassifierMeta::Knn {
            k_vote,
            training_rows,
            width,
        } => println!("classifier: KNN k_vote={k_vote}, {training_rows} stored rows of width {width}"),
        ClassifierMeta::Rf {
            params,
            n_trees,
            max_tree_depth,
            total_leaves,
            ..
        } => println!(
            "classifier: RF {n_trees} trees (max_depth {:?}, features {:?}, bootstrap {}), deepest {max_tree_depth}, {total_leaves} leaves",
            params.max_depth, params.features, params.bootstrap
        ),
        ClassifierMeta::RfEns {
            n_forests,
            params,
            max_tree_depth,
            ..
        } => println!(
            "classifier: RF-Ens {n_forests} forests x {} trees (max_depth {:?}), deepest {max_tree_depth}",
            params.n_trees, params.max_depth
        ),
        ClassifierMeta::Nn {
            params,
            network,
            final_loss,
        } => println!(
            "classifier: NN {:?} ({:?} hidden), lr {} epochs {} batch {}, final loss {}",
            network.dims,
            params.activation,
            params.learning_rate,
            params.epochs,
            params.batch_size,
            final_loss.map_or("-".into(), |l| format!("{l:.6}"))
        ),
    }
    if verify {
        load_model(path).with_context(|| format!("loading {}", path.display()))?;
        println!("binary:     ok");
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match &cli.command {
        Command::Parse { input, csv } => cmd_parse(input, csv.as_deref()).map(|_| true),
        Command::Synth { out, n, preset, seed } => cmd_synth(out, *n, preset, *seed).map(|_| true),
        Command::Run {
            common,
            framework,
            classifier,
            save_model,
        } => cmd_run(common, framework.as_deref(), classifier.as_deref(), save_model.as_deref()).map(|_| true),
        Command::Suite {
            common,
            frameworks,
            classifiers,
            csv,
            text,
            workers,
        } => cmd_suite(common, frameworks, classifiers, csv.as_deref(), text.as_deref(), *workers),
        Command::Model {
            command: ModelCommand::Inspect { path, verify },
        } => cmd_inspect(path, *verify).map(|_| true),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
