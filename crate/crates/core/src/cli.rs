//! Command-line front end.
//!
//! Exit codes: 0 on success, 2 for bad input or configuration, 3 for numerical failure.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::capls::{run_uda, ProjectionKind, UdaConfig, DEFAULT_ITERATIONS};
use crate::data::{
    generate_synthetic, load_features, load_labels, load_matrix, load_split, save_features_binary,
    save_features_csv, save_labels, save_report, DatasetBundle, ExperimentReport, SynthConfig, Versions,
};
use crate::eval::{feature_digest, per_class_accuracy, per_image_accuracy};
use crate::preprocess::{l2_normalize_rows, zscore_columns, Domain, FeatureMatrix, ZScoreStats};
use crate::slpp::{LabeledDataset, DEFAULT_DIM};
use crate::zsl::{gzsl_metrics, make_split, run_zsl, summarize, ZslConfig, ZslSplit, DEFAULT_KNOWN_CLASSES};
use crate::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "capls", version, about = "Joint-subspace domain adaptation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Unsupervised adaptation with pseudo-label selection.
    Uda(UdaArgs),
    /// Adaptation with target labels for a subset of classes, generalized zero-shot evaluation.
    Zsl(ZslArgs),
    /// Write a synthetic source/target bundle.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProjectionArg {
    Slpp,
    Lda,
}

impl From<ProjectionArg> for ProjectionKind {
    fn from(p: ProjectionArg) -> Self {
        match p {
            ProjectionArg::Slpp => ProjectionKind::Slpp,
            ProjectionArg::Lda => ProjectionKind::Lda,
        }
    }
}

/// Fully resolved `uda` configuration, echoed into the report.
#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct UdaArgs {
    #[arg(long)]
    pub source_features: PathBuf,
    #[arg(long)]
    pub source_labels: PathBuf,
    #[arg(long)]
    pub target_features: PathBuf,
    /// Used for evaluation only.
    #[arg(long)]
    pub target_labels: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_DIM)]
    pub dim: usize,
    #[arg(long, default_value_t = DEFAULT_ITERATIONS)]
    pub iters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = ProjectionArg::Slpp)]
    pub projection: ProjectionArg,
    /// Z-score features (statistics fitted on source and target jointly) before l2 normalisation.
    #[arg(long)]
    pub zscore: bool,
    #[arg(long, default_value_t = 1.0)]
    pub ridge: f64,
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    /// Also write the final target predictions, one label per line.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct ZslArgs {
    #[arg(long)]
    pub source_features: PathBuf,
    #[arg(long)]
    pub source_labels: PathBuf,
    /// Fully labelled target domain, split automatically (or by --split-file).
    #[arg(long, requires = "target_labels")]
    pub target_features: Option<PathBuf>,
    #[arg(long)]
    pub target_labels: Option<PathBuf>,
    #[arg(long, requires = "target_train_labels", conflicts_with = "target_features")]
    pub target_train_features: Option<PathBuf>,
    #[arg(long)]
    pub target_train_labels: Option<PathBuf>,
    #[arg(long, requires = "target_test_labels", conflicts_with = "target_features")]
    pub target_test_features: Option<PathBuf>,
    #[arg(long)]
    pub target_test_labels: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_KNOWN_CLASSES)]
    pub known_classes: usize,
    #[arg(long, conflicts_with = "split_seeds")]
    pub split_file: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
    pub split_seeds: Vec<u64>,
    #[arg(long, default_value_t = DEFAULT_DIM)]
    pub dim: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Z-score features (statistics fitted on source and labelled target) before l2 normalisation.
    #[arg(long)]
    pub zscore: bool,
    #[arg(long, default_value_t = 1.0)]
    pub ridge: f64,
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FileFormat {
    Csv,
    Binary,
    Both,
}

#[derive(Clone, Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub classes: usize,
    #[arg(long, default_value_t = 100)]
    pub source_per_class: usize,
    #[arg(long, default_value_t = 100)]
    pub target_per_class: usize,
    #[arg(long, default_value_t = 32)]
    pub dim: usize,
    #[arg(long, default_value_t = 4.0)]
    pub class_sep: f64,
    /// Radians.
    #[arg(long, default_value_t = std::f64::consts::FRAC_PI_6)]
    pub rotation: f64,
    #[arg(long, default_value_t = SynthConfig::default().translation)]
    pub translation: f64,
    #[arg(long, default_value_t = SynthConfig::default().noise)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = FileFormat::Csv)]
    pub format: FileFormat,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Uda(a) => cmd_uda(&a).map(|_| ()),
        Command::Zsl(a) => cmd_zsl(&a).map(|_| ()),
        Command::Synth(a) => cmd_synth(&a).map(|_| ()),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_INPUT
    }
}

fn apply_zscore(
    fit_on: &[&FeatureMatrix<f64>],
    apply_to: &[&FeatureMatrix<f64>],
) -> Result<Vec<FeatureMatrix<f64>>> {
    let joint = FeatureMatrix::stack(fit_on)?;
    let stats = ZScoreStats::fit(&joint);
    apply_to
        .iter()
        .map(|x| zscore_columns(x, Some(&stats)).map(|(z, _)| z))
        .collect()
}

fn prepare(x: &FeatureMatrix<f64>) -> Result<FeatureMatrix<f64>> {
    l2_normalize_rows(x)
}

/// Runs `uda` and writes its report.
pub fn cmd_uda(args: &UdaArgs) -> Result<ExperimentReport> {
    let source: LabeledDataset<f64> = load_features(&args.source_features, &args.source_labels, Domain::Source)?;
    let target: FeatureMatrix<f64> = load_matrix(&args.target_features, Domain::Target)?;
    let truth = args.target_labels.as_deref().map(load_labels).transpose()?;
    if let Some(t) = &truth {
        if t.len() != target.rows() {
            return Err(Error::RowCountMismatch {
                features: target.rows(),
                labels: t.len(),
            });
        }
    }
    if source.features().cols() != target.cols() {
        return Err(Error::DimensionMismatch {
            expected: source.features().cols(),
            found: target.cols(),
        });
    }

    let (source_x, target_x) = if args.zscore {
        let z = apply_zscore(&[source.features(), &target], &[source.features(), &target])?;
        (z[0].clone(), z[1].clone())
    } else {
        (source.features().clone(), target.clone())
    };
    let source = source.with_features(prepare(&source_x)?)?;
    let target = prepare(&target_x)?;

    let cfg = UdaConfig {
        d_sub: args.dim,
        t_max: args.iters,
        projection: args.projection.into(),
        ridge: args.ridge,
        temperature: args.temperature,
        ..Default::default()
    };
    let outcome = run_uda(&source, &target, &cfg, truth.as_deref())?;

    let n_classes = source.n_classes();
    let mut metrics = json!({
        "effective_dim": outcome.effective_dim,
        "iterations": outcome.trace.len() - 1,
        "prediction_counts": histogram(&outcome.predicted, n_classes),
    });
    if let Some(t) = &truth {
        let n = n_classes.max(t.iter().max().map_or(0, |m| m + 1));
        let acc = per_image_accuracy(&outcome.predicted, t)?;
        metrics["accuracy"] = json!(acc);
        metrics["source_only_accuracy"] = json!(per_image_accuracy(&outcome.initial_predicted, t)?);
        metrics["per_class_accuracy"] = json!(per_class_accuracy(&outcome.predicted, t, n)?);
        println!("accuracy: {:.2}%", acc * 100.0);
    }

    let mut config = serde_json::to_value(args).expect("args serialise");
    config["preprocess_digest"] = json!({
        "source": feature_digest(source.features()),
        "target": feature_digest(&target),
    });
    let report = ExperimentReport {
        config,
        trace: outcome.trace,
        metrics,
        versions: Versions::default(),
    };
    save_report(&report, &args.out)?;
    if let Some(path) = &args.predictions {
        save_labels(&outcome.predicted, path)?;
    }
    Ok(report)
}

/// Resolves the `config` block of a `uda` report back into arguments.
pub fn uda_args_from_report(report: &ExperimentReport) -> Result<UdaArgs> {
    serde_json::from_value(report.config.clone())
        .map_err(|e| Error::Config(format!("report config is not a uda configuration: {e}")))
}

fn histogram(labels: &[usize], n: usize) -> Vec<usize> {
    let mut h = vec![0; n];
    for &l in labels {
        if l < n {
            h[l] += 1;
        }
    }
    h
}

struct ZslTask {
    split: ZslSplit,
    target_train: Option<LabeledDataset<f64>>,
    target_test: FeatureMatrix<f64>,
    truth: Vec<usize>,
}

fn zsl_tasks(args: &ZslArgs) -> Result<Vec<ZslTask>> {
    if let (Some(tf), Some(tl)) = (&args.target_features, &args.target_labels) {
        let target: LabeledDataset<f64> = load_features(tf, tl, Domain::Target)?;
        let splits = match &args.split_file {
            Some(path) => vec![load_split(path)?],
            None => {
                if args.split_seeds.is_empty() {
                    return Err(Error::Config("no split seeds given".into()));
                }
                args.split_seeds
                    .iter()
                    .map(|&s| make_split(target.labels(), args.known_classes, s))
                    .collect::<Result<_>>()?
            }
        };
        return splits
            .into_iter()
            .map(|split| {
                split.validate(target.labels())?;
                let target_train = if split.target_train_rows.is_empty() {
                    None
                } else {
                    Some(target.select(&split.target_train_rows)?)
                };
                let test = target.select(&split.target_test_rows)?;
                Ok(ZslTask {
                    target_train,
                    target_test: test.features().clone(),
                    truth: test.labels().to_vec(),
                    split,
                })
            })
            .collect();
    }

    let (Some(test_f), Some(test_l)) = (&args.target_test_features, &args.target_test_labels) else {
        return Err(Error::Config(
            "give --target-features/--target-labels or --target-test-features/--target-test-labels".into(),
        ));
    };
    let test: LabeledDataset<f64> = load_features(test_f, test_l, Domain::Target)?;
    let target_train = match (&args.target_train_features, &args.target_train_labels) {
        (Some(f), Some(l)) => Some(load_features::<f64>(f, l, Domain::Target)?),
        _ => None,
    };
    let mut known: Vec<usize> = target_train.as_ref().map_or(vec![], |t| t.labels().to_vec());
    known.sort_unstable();
    known.dedup();
    let mut unseen: Vec<usize> = test.labels().iter().copied().filter(|c| known.binary_search(c).is_err()).collect();
    unseen.sort_unstable();
    unseen.dedup();
    if unseen.is_empty() {
        return Err(Error::Config("test data contains no unseen class".into()));
    }
    let split = ZslSplit {
        known_classes: known,
        unseen_classes: unseen,
        target_train_rows: (0..target_train.as_ref().map_or(0, |t| t.len())).collect(),
        target_test_rows: (0..test.len()).collect(),
        seed: None,
    };
    Ok(vec![ZslTask {
        split,
        target_train,
        target_test: test.features().clone(),
        truth: test.labels().to_vec(),
    }])
}

/// Runs `zsl` once per split and writes the report.
pub fn cmd_zsl(args: &ZslArgs) -> Result<ExperimentReport> {
    let source: LabeledDataset<f64> = load_features(&args.source_features, &args.source_labels, Domain::Source)?;
    let tasks = zsl_tasks(args)?;
    let cfg = ZslConfig {
        d_sub: args.dim,
        ridge: args.ridge,
        temperature: args.temperature,
        ..Default::default()
    };

    let mut per_split = Vec::new();
    let mut all = Vec::new();
    for task in &tasks {
        let (src, train, test) = if args.zscore {
            let mut fit_on = vec![source.features()];
            if let Some(t) = &task.target_train {
                fit_on.push(t.features());
            }
            let mut apply = vec![source.features(), &task.target_test];
            if let Some(t) = &task.target_train {
                apply.push(t.features());
            }
            let z = apply_zscore(&fit_on, &apply)?;
            let train = match &task.target_train {
                Some(t) => Some(t.with_features(z[2].clone())?),
                None => None,
            };
            (source.with_features(z[0].clone())?, train, z[1].clone())
        } else {
            (source.clone(), task.target_train.clone(), task.target_test.clone())
        };
        let outcome = run_zsl(&src, train.as_ref(), &test, &cfg)?;
        let m = gzsl_metrics(outcome.predicted(), &task.truth, &task.split)?;
        println!(
            "split {}: known {:.2}% unseen {:.2}% harmonic {:.2}%",
            task.split.seed.map_or("file".to_string(), |s| s.to_string()),
            m.acc_known * 100.0,
            m.acc_unseen * 100.0,
            m.harmonic * 100.0
        );
        per_split.push(json!({
            "seed": task.split.seed,
            "n_known": task.split.known_classes.len(),
            "n_unseen": task.split.unseen_classes.len(),
            "acc_known": m.acc_known,
            "acc_unseen": m.acc_unseen,
            "harmonic": m.harmonic,
        }));
        all.push(m);
    }
    let (mean, sem) = summarize(&all);
    let report = ExperimentReport {
        config: serde_json::to_value(args).expect("args serialise"),
        trace: Vec::new(),
        metrics: json!({ "splits": per_split, "mean": mean, "sem": sem }),
        versions: Versions::default(),
    };
    save_report(&report, &args.out)?;
    Ok(report)
}

/// Writes the bundle and returns the paths written.
pub fn cmd_synth(args: &SynthArgs) -> Result<Vec<PathBuf>> {
    let cfg = SynthConfig {
        n_classes: args.classes,
        n_per_class_source: args.source_per_class,
        n_per_class_target: args.target_per_class,
        dim: args.dim,
        class_sep: args.class_sep,
        rotation: args.rotation,
        translation: args.translation,
        noise: args.noise,
        seed: args.seed,
    };
    let bundle: DatasetBundle<f64> = generate_synthetic(&cfg)?;
    fs::create_dir_all(&args.out_dir).map_err(|e| Error::Io {
        path: args.out_dir.clone(),
        source: e,
    })?;
    let mut written = Vec::new();
    for (name, ds) in &bundle.domains {
        let path = |ext: &str| args.out_dir.join(format!("{name}.{ext}"));
        if matches!(args.format, FileFormat::Csv | FileFormat::Both) {
            save_features_csv(ds.features(), &path("csv"))?;
            written.push(path("csv"));
        }
        if matches!(args.format, FileFormat::Binary | FileFormat::Both) {
            save_features_binary(ds.features(), &path("bin"))?;
            written.push(path("bin"));
        }
        save_labels(ds.labels(), &path("labels"))?;
        written.push(path("labels"));
    }
    Ok(written)
}

/// Paths `name.csv` and `name.labels` inside `dir`, as `cmd_synth` writes them.
pub fn synth_paths(dir: &Path, name: &str) -> (PathBuf, PathBuf) {
    (dir.join(format!("{name}.csv")), dir.join(format!("{name}.labels")))
}
