//! Command-line front end: argument and config-file parsing, and dispatch to
//! the library.
//!
//! Settings resolve as command-line flag, then config-file line, then the
//! per-model defaults. The config file holds flat `key = value` lines with
//! `#` comments; keys are the long flag names, with `-` or `_`.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Display;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use log::info;
use thiserror::Error;

use crate::data::{
    load_dataset, save_dataset, standardize, synthesize_dataset, EpochedDataset, SubjectRecord,
    SynthConfig,
};
use crate::model::{Model, ModelError, ModelKind, ModelSpec};
use crate::report::{emit_report, percent, ReportError};
use crate::stats::{compare_models, PostHoc, StatError, DEFAULT_ALPHA};
use crate::train::{fit, Monitor, TrainConfig};
use crate::transfer::{evaluate_fold, run_loso, EvalError, FoldRow, LosoOptions, RunSummary};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad invocation, configuration or inconsistent inputs.
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Failed(_) => EXIT_FAILED,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn failed(e: impl Display) -> CliError {
    CliError::Failed(e.to_string())
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Protocol(_) | EvalError::Model(ModelError::Spec(_)) => {
                CliError::Usage(e.to_string())
            }
            EvalError::Train(crate::train::TrainError::Config(_)) => CliError::Usage(e.to_string()),
            e => failed(e),
        }
    }
}

impl From<StatError> for CliError {
    fn from(e: StatError) -> Self {
        match e {
            StatError::Protocol(_) => CliError::Usage(e.to_string()),
            e => failed(e),
        }
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        match e {
            ReportError::Protocol(_) => CliError::Usage(e.to_string()),
            e => failed(e),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "mitransfer",
    version,
    about = "Cross-subject motor-imagery EEG decoding"
)]
struct Cli {
    /// Flat `key = value` file with defaults for any flag.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Folds trained concurrently.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Sub,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
    /// Train once, optionally scoring one held-out subject.
    Train(TrainArgs),
    /// Leave-one-subject-out evaluation.
    Loso(LosoArgs),
    /// Compare models over aligned per-fold CSVs.
    Stats(StatsArgs),
    /// Summary, fold table and plots from `loso` output.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    subjects: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    channels: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    sample_rate: Option<f32>,
    #[arg(long)]
    erd_depth: Option<f64>,
    #[arg(long)]
    noise_scale: Option<f64>,
    #[arg(long)]
    mu_amplitude: Option<f64>,
    /// Seconds.
    #[arg(long)]
    cue_onset: Option<f64>,
    #[arg(long)]
    gain_spread: Option<f64>,
}

#[derive(Debug, Args)]
struct Overrides {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, visible_alias = "lr")]
    learning_rate: Option<f64>,
    #[arg(long)]
    min_lr: Option<f64>,
    #[arg(long)]
    factor: Option<f64>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    es_patience: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    validation_fraction: Option<f64>,
    /// `val_loss` or `train_loss`.
    #[arg(long)]
    monitor: Option<String>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    bn_momentum: Option<f64>,
    /// Z-score inputs with training-subject statistics.
    #[arg(long)]
    standardize: Option<bool>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    model: ModelKind,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Subject left out of training and scored afterwards.
    #[arg(long)]
    test_subject: Option<String>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Debug, Args)]
struct LosoArgs {
    #[arg(long)]
    model: ModelKind,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Permute labels within each subject first (chance-level control).
    #[arg(long)]
    shuffle_labels: bool,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Debug, Args)]
struct StatsArgs {
    /// Per-fold CSVs, one per model.
    #[arg(required = true, num_args = 2..)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    /// `wilcoxon` or `sign`.
    #[arg(long)]
    post_hoc: Option<String>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Directory given to `loso --out`.
    #[arg(long)]
    results: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

const KNOWN_KEYS: [&str; 27] = [
    "seed",
    "jobs",
    "subjects",
    "trials",
    "channels",
    "samples",
    "sample_rate",
    "erd_depth",
    "noise_scale",
    "mu_amplitude",
    "cue_onset",
    "gain_spread",
    "epochs",
    "learning_rate",
    "min_lr",
    "factor",
    "patience",
    "es_patience",
    "batch_size",
    "validation_fraction",
    "monitor",
    "dropout",
    "bn_momentum",
    "standardize",
    "shuffle_labels",
    "alpha",
    "post_hoc",
];

/// Parsed config file: key to (value, line).
#[derive(Debug, Default)]
struct ConfigFile {
    path: PathBuf,
    entries: BTreeMap<String, (String, usize)>,
}

impl ConfigFile {
    fn parse(path: &Path, text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = |m: String| CliError::Usage(format!("{}:{}: {m}", path.display(), i + 1));
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| at(format!("expected `key = value`, got `{line}`")))?;
            let key = match key.trim().replace('-', "_") {
                k if k == "lr" => "learning_rate".to_string(),
                k => k,
            };
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(at(format!("unknown key `{key}`")));
            }
            if entries
                .insert(key.clone(), (value.trim().to_string(), i + 1))
                .is_some()
            {
                return Err(at(format!("duplicate key `{key}`")));
            }
        }
        Ok(Self {
            path: path.to_path_buf(),
            entries,
        })
    }

    fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        Self::parse(path, &text)
    }

    /// The flag value if given, else the file value if present.
    fn pick<T: FromStr>(&self, key: &str, flag: Option<T>) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.entries.get(key) {
            None => Ok(None),
            Some((v, line)) => v.parse().map(Some).map_err(|e| {
                CliError::Usage(format!(
                    "{}:{line}: invalid value `{v}` for `{key}`: {e}",
                    self.path.display()
                ))
            }),
        }
    }
}

fn parse_monitor(s: &str) -> Result<Monitor> {
    match s {
        "val_loss" => Ok(Monitor::ValLoss),
        "train_loss" => Ok(Monitor::TrainLoss),
        _ => Err(CliError::Usage(format!(
            "monitor must be val_loss or train_loss, got `{s}`"
        ))),
    }
}

fn parse_post_hoc(s: &str) -> Result<PostHoc> {
    match s {
        "wilcoxon" => Ok(PostHoc::Wilcoxon),
        "sign" => Ok(PostHoc::Sign),
        _ => Err(CliError::Usage(format!(
            "post-hoc test must be wilcoxon or sign, got `{s}`"
        ))),
    }
}

/// Model-spec fields settable from the command line.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SpecOverrides {
    pub dropout: Option<f64>,
    pub bn_momentum: Option<f64>,
}

impl SpecOverrides {
    pub fn apply(&self, spec: &mut ModelSpec) {
        if let Some(d) = self.dropout {
            spec.dropout_rate = Some(d);
        }
        if let Some(m) = self.bn_momentum {
            spec.bn_momentum = m;
        }
    }
}

/// Everything a training command needs apart from the data geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSetup {
    pub kind: ModelKind,
    pub train: TrainConfig,
    pub spec: SpecOverrides,
    pub standardize: bool,
}

impl ModelSetup {
    pub fn spec_for(&self, dataset: &EpochedDataset) -> ModelSpec {
        let mut spec = ModelSpec::new(
            self.kind,
            dataset.n_channels(),
            dataset.n_samples(),
            dataset.sample_rate() as f64,
        );
        self.spec.apply(&mut spec);
        spec
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Job {
    Synth {
        synth: SynthConfig,
        out: PathBuf,
    },
    Train {
        setup: ModelSetup,
        data: PathBuf,
        out: PathBuf,
        test_subject: Option<String>,
    },
    Loso {
        setup: ModelSetup,
        data: PathBuf,
        out: PathBuf,
        shuffle_labels: bool,
    },
    Stats {
        inputs: Vec<PathBuf>,
        alpha: f64,
        post_hoc: PostHoc,
        out: Option<PathBuf>,
    },
    Report {
        results: PathBuf,
        out: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub jobs: usize,
    pub job: Job,
}

fn must_exist(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "{} does not exist",
            path.display()
        )))
    }
}

fn resolve_setup(
    kind: ModelKind,
    o: Overrides,
    file: &ConfigFile,
    seed: u64,
) -> Result<ModelSetup> {
    let mut train = TrainConfig::for_model(kind);
    train.seed = seed;
    if let Some(v) = file.pick("epochs", o.epochs)? {
        train.epochs = v;
    }
    if let Some(v) = file.pick("learning_rate", o.learning_rate)? {
        train.learning_rate = v;
    }
    if let Some(v) = file.pick("min_lr", o.min_lr)? {
        train.min_lr = v;
    }
    if let Some(v) = file.pick("factor", o.factor)? {
        train.factor = v;
    }
    if let Some(v) = file.pick("patience", o.patience)? {
        train.patience = v;
    }
    if let Some(v) = file.pick("es_patience", o.es_patience)? {
        train.es_patience = v;
    }
    if let Some(v) = file.pick("batch_size", o.batch_size)? {
        train.batch_size = v;
    }
    if let Some(v) = file.pick("validation_fraction", o.validation_fraction)? {
        train.validation_fraction = v;
    }
    if let Some(v) = file.pick::<String>("monitor", o.monitor)? {
        train.monitor = parse_monitor(&v)?;
    }
    train
        .validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;

    let spec = SpecOverrides {
        dropout: file.pick("dropout", o.dropout)?,
        bn_momentum: file.pick("bn_momentum", o.bn_momentum)?,
    };
    if kind == ModelKind::Min2Net && spec.dropout.is_some() {
        return Err(CliError::Usage("min2net has no dropout rate".into()));
    }
    let standardize = file
        .pick("standardize", o.standardize)?
        .unwrap_or(LosoOptions::for_model(kind).standardize);
    Ok(ModelSetup {
        kind,
        train,
        spec,
        standardize,
    })
}

/// Parses `argv` (including the program name) and the config file it names.
pub fn parse_config<I, S>(argv: I) -> Result<RunConfig>
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(|e| CliError::Usage(e.to_string()))?;
    let file = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let seed = file.pick("seed", cli.seed)?.unwrap_or(0);
    let jobs = file.pick("jobs", cli.jobs)?.unwrap_or(1);
    if jobs == 0 {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    let job = match cli.command {
        Sub::Synth(a) => {
            let d = SynthConfig::default();
            let synth = SynthConfig {
                n_subjects: file.pick("subjects", a.subjects)?.unwrap_or(d.n_subjects),
                trials_per_subject: file
                    .pick("trials", a.trials)?
                    .unwrap_or(d.trials_per_subject),
                n_channels: file.pick("channels", a.channels)?.unwrap_or(d.n_channels),
                n_samples: file.pick("samples", a.samples)?.unwrap_or(d.n_samples),
                sample_rate: file
                    .pick("sample_rate", a.sample_rate)?
                    .unwrap_or(d.sample_rate),
                erd_depth: file.pick("erd_depth", a.erd_depth)?.unwrap_or(d.erd_depth),
                noise_scale: file
                    .pick("noise_scale", a.noise_scale)?
                    .unwrap_or(d.noise_scale),
                mu_amplitude: file
                    .pick("mu_amplitude", a.mu_amplitude)?
                    .unwrap_or(d.mu_amplitude),
                cue_onset_s: file
                    .pick("cue_onset", a.cue_onset)?
                    .unwrap_or(d.cue_onset_s),
                subject_gain_spread: file
                    .pick("gain_spread", a.gain_spread)?
                    .unwrap_or(d.subject_gain_spread),
                seed,
            };
            synth
                .validate()
                .map_err(|e| CliError::Usage(e.to_string()))?;
            Job::Synth { synth, out: a.out }
        }
        Sub::Train(a) => {
            must_exist(&a.data)?;
            Job::Train {
                setup: resolve_setup(a.model, a.overrides, &file, seed)?,
                data: a.data,
                out: a.out,
                test_subject: a.test_subject,
            }
        }
        Sub::Loso(a) => {
            must_exist(&a.data)?;
            let shuffle = a.shuffle_labels || file.pick("shuffle_labels", None)?.unwrap_or(false);
            Job::Loso {
                setup: resolve_setup(a.model, a.overrides, &file, seed)?,
                data: a.data,
                out: a.out,
                shuffle_labels: shuffle,
            }
        }
        Sub::Stats(a) => {
            for p in &a.inputs {
                must_exist(p)?;
            }
            let alpha = file.pick("alpha", a.alpha)?.unwrap_or(DEFAULT_ALPHA);
            if !(alpha > 0.0 && alpha < 1.0) {
                return Err(CliError::Usage(format!("alpha {alpha} outside (0, 1)")));
            }
            let post_hoc = match file.pick::<String>("post_hoc", a.post_hoc)? {
                Some(s) => parse_post_hoc(&s)?,
                None => PostHoc::default(),
            };
            Job::Stats {
                inputs: a.inputs,
                alpha,
                post_hoc,
                out: a.out,
            }
        }
        Sub::Report(a) => {
            must_exist(&a.results)?;
            Job::Report {
                results: a.results,
                out: a.out,
            }
        }
    };
    Ok(RunConfig { seed, jobs, job })
}

fn load(path: &Path) -> Result<EpochedDataset> {
    load_dataset(path).map_err(failed)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| failed(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, bytes).map_err(|e| failed(format!("{}: {e}", path.display())))
}

fn summary_line(s: &RunSummary) -> String {
    format!(
        "{}: median {}%, max {}%, {} of {} ≥ {}%",
        s.model,
        percent(s.median),
        percent(s.max),
        s.count_ge_70,
        s.accuracies.len(),
        percent(s.threshold)
    )
}

/// Per-fold rows of a `folds.csv`, sorted by subject. Errors carry the
/// file and record position.
pub fn read_fold_rows(path: &Path) -> Result<Vec<FoldRow>> {
    let mut reader =
        csv::Reader::from_path(path).map_err(|e| failed(format!("{}: {e}", path.display())))?;
    let mut rows: Vec<FoldRow> = reader
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| failed(format!("{}: {e}", path.display())))?;
    rows.sort_by(|a, b| a.subject_id.cmp(&b.subject_id));
    Ok(rows)
}

/// Label for a fold table: its directory name for `<model>/folds.csv`,
/// otherwise the file stem.
fn model_label(path: &Path) -> String {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    match path.parent().and_then(|p| p.file_name()) {
        Some(dir) if stem == "folds" => dir.to_string_lossy().into_owned(),
        _ => stem,
    }
}

/// Accuracy vectors aligned by subject; every table must cover the same
/// subjects.
pub fn align_fold_tables(tables: &[(String, Vec<FoldRow>)]) -> Result<Vec<(String, Vec<f64>)>> {
    let Some((first_name, first)) = tables.first() else {
        return Err(CliError::Usage("no fold tables".into()));
    };
    let ids: Vec<&str> = first.iter().map(|r| r.subject_id.as_str()).collect();
    let mut out = Vec::with_capacity(tables.len());
    for (name, rows) in tables {
        let these: Vec<&str> = rows.iter().map(|r| r.subject_id.as_str()).collect();
        if these != ids {
            return Err(CliError::Usage(format!(
                "subjects of {name} ({}) differ from those of {first_name} ({})",
                these.join(","),
                ids.join(",")
            )));
        }
        out.push((name.clone(), rows.iter().map(|r| r.accuracy).collect()));
    }
    Ok(out)
}

/// Runs a parsed command. Returns the number of failed folds.
pub fn dispatch(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<usize> {
    let say = |out: &mut dyn Write, line: String| writeln!(out, "{line}").map_err(failed);
    match &cfg.job {
        Job::Synth { synth, out } => {
            let ds = synthesize_dataset(synth).map_err(failed)?;
            save_dataset(&ds, out).map_err(failed)?;
            say(
                stdout,
                format!(
                    "wrote {} subjects to {}",
                    ds.subjects().len(),
                    out.display()
                ),
            )?;
            Ok(0)
        }
        Job::Train {
            setup,
            data,
            out,
            test_subject,
        } => {
            let ds = load(data)?;
            let spec = setup.spec_for(&ds);
            spec.validate()
                .map_err(|e| CliError::Usage(e.to_string()))?;
            let held_out = match test_subject {
                Some(id) => Some(ds.subject(id).ok_or_else(|| {
                    CliError::Usage(format!("no subject {id} in {}", data.display()))
                })?),
                None => None,
            };
            let train: Vec<&SubjectRecord> = ds
                .subjects()
                .iter()
                .filter(|s| Some(s.subject_id()) != test_subject.as_deref())
                .collect();
            if train.is_empty() {
                return Err(CliError::Usage("no training subjects left".into()));
            }
            let (train_z, test_z);
            let (train, held_out) = if setup.standardize {
                let (a, b, _) = standardize(&train, &held_out.into_iter().collect::<Vec<_>>());
                train_z = a;
                test_z = b;
                (train_z.iter().collect(), test_z.first())
            } else {
                (train, held_out)
            };
            let model = Model::<f32>::build(&spec, setup.train.seed)
                .map_err(|e| CliError::Usage(e.to_string()))?;
            let outcome = fit(model, &train, &setup.train).map_err(EvalError::from)?;
            let dir = out.join(setup.kind.name());
            fs::create_dir_all(&dir).map_err(|e| failed(format!("{}: {e}", dir.display())))?;
            outcome
                .model
                .save(&dir.join("model.ckpt"))
                .map_err(failed)?;
            outcome
                .trace
                .save_csv(&dir.join("trace.csv"))
                .map_err(failed)?;
            if let Some(test) = held_out {
                let mut result = evaluate_fold(&outcome.model, test)?;
                result.trace = outcome.trace;
                write_file(
                    &dir.join("result.json"),
                    &serde_json::to_vec_pretty(&result).expect("plain data serializes"),
                )?;
                say(
                    stdout,
                    format!(
                        "{} {}: {}/{} correct",
                        setup.kind, result.subject_id, result.n_correct, result.n_test
                    ),
                )?;
            }
            Ok(0)
        }
        Job::Loso {
            setup,
            data,
            out,
            shuffle_labels,
        } => {
            let mut ds = load(data)?;
            if *shuffle_labels {
                ds = ds.with_shuffled_labels(cfg.seed);
            }
            let spec = setup.spec_for(&ds);
            let opts = LosoOptions {
                out_dir: Some(out.clone()),
                jobs: cfg.jobs,
                standardize: setup.standardize,
            };
            let run = run_loso(&ds, &spec, &setup.train, &opts)?;
            info!("{} folds resumed", run.resumed.len());
            if !run.results.is_empty() {
                let failed_ids = run.failures.iter().map(|f| f.subject_id.clone()).collect();
                let summary = RunSummary::new(
                    setup.kind,
                    run.config_hash.clone(),
                    &run.results,
                    failed_ids,
                )?;
                say(stdout, summary_line(&summary))?;
            }
            for f in &run.failures {
                say(stdout, format!("fold {} failed: {}", f.subject_id, f.error))?;
            }
            Ok(run.failures.len())
        }
        Job::Stats {
            inputs,
            alpha,
            post_hoc,
            out,
        } => {
            let tables = inputs
                .iter()
                .map(|p| Ok((model_label(p), read_fold_rows(p)?)))
                .collect::<Result<Vec<_>>>()?;
            let aligned = align_fold_tables(&tables)?;
            let report = compare_models(&aligned, *alpha, *post_hoc)?;
            let mut json = serde_json::to_vec_pretty(&report).expect("plain data serializes");
            json.push(b'\n');
            match out {
                Some(path) => write_file(path, &json)?,
                None => stdout.write_all(&json).map_err(failed)?,
            }
            Ok(0)
        }
        Job::Report { results, out } => {
            let mut summaries = Vec::new();
            let mut folds = Vec::new();
            for kind in ModelKind::ALL {
                let dir = results.join(kind.name());
                let path = dir.join(crate::report::SUMMARY_JSON);
                if !path.exists() {
                    continue;
                }
                let bytes =
                    fs::read(&path).map_err(|e| failed(format!("{}: {e}", path.display())))?;
                let summary: RunSummary = serde_json::from_slice(&bytes)
                    .map_err(|e| failed(format!("{}: {e}", path.display())))?;
                folds.push((kind, read_fold_rows(&dir.join(crate::report::FOLDS_CSV))?));
                summaries.push(summary);
            }
            let bundle = emit_report(&summaries, &folds)?;
            bundle.write(out)?;
            for s in &summaries {
                say(stdout, summary_line(s))?;
            }
            Ok(0)
        }
    }
}

/// Full command-line entry point; returns the process exit code.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    // help and version requests are not usage errors
    if let Err(e) = Cli::try_parse_from(&argv) {
        if !e.use_stderr() {
            let _ = e.print();
            return EXIT_OK;
        }
    }
    let cfg = match parse_config(&argv) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    match dispatch(&cfg, &mut std::io::stdout().lock()) {
        Ok(0) => EXIT_OK,
        Ok(_) => EXIT_FAILED,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_lines_are_located() {
        let p = Path::new("run.cfg");
        let f =
            ConfigFile::parse(p, "# comment\nepochs = 50  # trailing\n\nbatch-size=32\n").unwrap();
        assert_eq!(f.pick::<usize>("epochs", None).unwrap(), Some(50));
        assert_eq!(f.pick::<usize>("batch_size", None).unwrap(), Some(32));
        assert_eq!(f.pick("epochs", Some(10)).unwrap(), Some(10));
        let err = ConfigFile::parse(p, "epochs = 5\nwarmup = 3\n")
            .unwrap_err()
            .to_string();
        assert!(err.starts_with("run.cfg:2:"), "{err}");
        let err = ConfigFile::parse(p, "epochs = ten\n")
            .unwrap()
            .pick::<usize>("epochs", None)
            .unwrap_err();
        assert!(err.to_string().starts_with("run.cfg:1:"));
        assert!(ConfigFile::parse(p, "just words\n").is_err());
    }

    #[test]
    fn labels_come_from_the_model_directory() {
        assert_eq!(model_label(Path::new("r/eegnet/folds.csv")), "eegnet");
        assert_eq!(model_label(Path::new("a.csv")), "a");
    }
}
