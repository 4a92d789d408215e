use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{standardize, EpochedDataset, SubjectRecord};
use crate::model::{Model, ModelKind, ModelSpec};
use crate::train::{fit, TrainConfig};

use super::{
    evaluate_fold, loso_split, summarize, EvalError, FoldPlan, FoldResult, Result,
    EFFICIENCY_THRESHOLD, HISTOGRAM_BINS,
};

const FOLD_DIR: &str = "folds";
const TRACE_DIR: &str = "traces";
pub(crate) const FOLD_CSV: &str = "folds.csv";
pub(crate) const SUMMARY_JSON: &str = "summary.json";

#[derive(Debug, Clone, PartialEq)]
pub struct LosoOptions {
    /// Results go to `<out_dir>/<model name>/`; nothing is written when unset.
    pub out_dir: Option<PathBuf>,
    /// Folds trained concurrently.
    pub jobs: usize,
    /// Z-score every fold with statistics of its training subjects.
    pub standardize: bool,
}

impl LosoOptions {
    /// Standardization on for MIN2Net only, whose reconstruction target
    /// needs bounded inputs.
    pub fn for_model(kind: ModelKind) -> Self {
        Self {
            out_dir: None,
            jobs: 1,
            standardize: kind == ModelKind::Min2Net,
        }
    }
}

/// A fold whose training diverged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldFailure {
    pub subject_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LosoRun {
    pub config_hash: String,
    /// Completed folds in subject order.
    pub results: Vec<FoldResult>,
    pub failures: Vec<FoldFailure>,
    /// Folds loaded from earlier output instead of being trained.
    pub resumed: Vec<String>,
}

/// Short hex digest identifying everything that shapes a fold's outcome.
pub fn config_hash(spec: &ModelSpec, cfg: &TrainConfig, standardize: bool) -> String {
    let key = serde_json::to_vec(&(spec, cfg, standardize)).expect("plain data serializes");
    let digest = Sha256::digest(&key);
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Persisted outcome of one fold, keyed for resumption.
#[derive(Debug, Serialize, Deserialize)]
struct FoldFile {
    model: ModelKind,
    config_hash: String,
    result: FoldResult,
}

/// Row of the per-fold CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRow {
    pub subject_id: String,
    pub n_test: usize,
    pub n_correct: usize,
    pub accuracy: f64,
    pub epochs_run: usize,
    pub stopped_early: bool,
}

impl From<&FoldResult> for FoldRow {
    fn from(r: &FoldResult) -> Self {
        Self {
            subject_id: r.subject_id.clone(),
            n_test: r.n_test,
            n_correct: r.n_correct,
            accuracy: r.accuracy,
            epochs_run: r.epochs_run(),
            stopped_early: r.trace.stopped_early,
        }
    }
}

/// Content of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub model: ModelKind,
    pub config_hash: String,
    pub subjects: Vec<String>,
    pub accuracies: Vec<f64>,
    pub median: f64,
    pub max: f64,
    pub threshold: f64,
    pub count_ge_70: usize,
    pub histogram: [usize; HISTOGRAM_BINS],
    pub failed: Vec<String>,
}

impl RunSummary {
    pub fn new(
        model: ModelKind,
        config_hash: String,
        results: &[FoldResult],
        failed: Vec<String>,
    ) -> Result<Self> {
        let accuracies: Vec<f64> = results.iter().map(|r| r.accuracy).collect();
        let s = summarize(&accuracies, EFFICIENCY_THRESHOLD)?;
        Ok(Self {
            model,
            config_hash,
            subjects: results.iter().map(|r| r.subject_id.clone()).collect(),
            accuracies,
            median: s.median,
            max: s.max,
            threshold: s.threshold,
            count_ge_70: s.count_above_threshold,
            histogram: s.histogram,
            failed,
        })
    }
}

fn io_err(path: &Path) -> impl Fn(String) -> EvalError + '_ {
    move |message| EvalError::Io {
        path: path.to_path_buf(),
        message,
    }
}

/// Writes through a sibling temporary file so readers never see a partial file.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let err = io_err(path);
    let tmp = path.with_extension("partial");
    fs::write(&tmp, bytes).map_err(|e| err(e.to_string()))?;
    fs::rename(&tmp, path).map_err(|e| err(e.to_string()))
}

pub fn write_fold_csv(results: &[FoldResult], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in results {
        w.serialize(FoldRow::from(r))
            .map_err(|e| io_err(path)(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| io_err(path)(e.to_string()))?;
    write_atomic(path, &bytes)
}

fn load_fold(path: &Path, kind: ModelKind, hash: &str) -> Option<FoldResult> {
    let bytes = fs::read(path).ok()?;
    match serde_json::from_slice::<FoldFile>(&bytes) {
        Ok(f) if f.model == kind && f.config_hash == hash => Some(f.result),
        Ok(_) => None,
        Err(e) => {
            warn!("ignoring unreadable fold file {}: {e}", path.display());
            None
        }
    }
}

fn train_fold(
    dataset: &EpochedDataset,
    plan: &FoldPlan,
    spec: &ModelSpec,
    cfg: &TrainConfig,
    opts: &LosoOptions,
) -> Result<FoldResult> {
    let pick = |id: &str| {
        dataset
            .subject(id)
            .ok_or_else(|| EvalError::Protocol(format!("unknown subject {id}")))
    };
    let train: Vec<&SubjectRecord> = plan
        .train_subjects
        .iter()
        .map(|id| pick(id))
        .collect::<Result<_>>()?;
    let held_out = pick(&plan.held_out)?;
    // the held-out record is only touched after training completes
    let (train_z, test_z);
    let (train, held_out): (Vec<&SubjectRecord>, &SubjectRecord) = if opts.standardize {
        let (a, mut b, _) = standardize(&train, &[held_out]);
        train_z = a;
        test_z = b.remove(0);
        (train_z.iter().collect(), &test_z)
    } else {
        (train, held_out)
    };
    let model = Model::<f32>::build(spec, cfg.seed)?;
    let outcome = fit(model, &train, cfg)?;
    let mut result = evaluate_fold(&outcome.model, held_out)?;
    result.trace = outcome.trace;
    Ok(result)
}

/// Trains and scores every fold, persisting each as it finishes. Folds with
/// a matching file from an earlier run are loaded instead of retrained; a
/// fold that produces non-finite values is reported in `failures` and the run goes on.
pub fn run_loso(
    dataset: &EpochedDataset,
    spec: &ModelSpec,
    cfg: &TrainConfig,
    opts: &LosoOptions,
) -> Result<LosoRun> {
    spec.validate()?;
    cfg.validate()?;
    let kind = spec.kind();
    let hash = config_hash(spec, cfg, opts.standardize);
    let plans = loso_split(&dataset.subject_ids())?;
    let model_dir = opts.out_dir.as_ref().map(|d| d.join(kind.name()));
    if let Some(dir) = &model_dir {
        for sub in [FOLD_DIR, TRACE_DIR] {
            let path = dir.join(sub);
            fs::create_dir_all(&path).map_err(|e| io_err(&path)(e.to_string()))?;
        }
    }
    let fold_path = |id: &str| {
        model_dir
            .as_ref()
            .map(|d| d.join(FOLD_DIR).join(format!("{id}.json")))
    };

    let job = |plan: &FoldPlan| -> Result<(std::result::Result<FoldResult, FoldFailure>, bool)> {
        let path = fold_path(&plan.held_out);
        if let Some(done) = path.as_deref().and_then(|p| load_fold(p, kind, &hash)) {
            return Ok((Ok(done), true));
        }
        let result = match train_fold(dataset, plan, spec, cfg, opts) {
            Ok(r) => r,
            Err(e) if e.is_divergence() => {
                warn!("{kind} fold {} failed: {e}", plan.held_out);
                let failure = FoldFailure {
                    subject_id: plan.held_out.clone(),
                    error: e.to_string(),
                };
                return Ok((Err(failure), false));
            }
            Err(e) => return Err(e),
        };
        info!(
            "{kind} fold {}: {}/{} correct",
            plan.held_out, result.n_correct, result.n_test
        );
        if let (Some(path), Some(dir)) = (path, &model_dir) {
            let trace_path = dir.join(TRACE_DIR).join(format!("{}.csv", plan.held_out));
            let mut csv = Vec::new();
            result
                .trace
                .write_csv(&mut csv)
                .map_err(|e| io_err(&trace_path)(e.to_string()))?;
            write_atomic(&trace_path, &csv)?;
            let file = FoldFile {
                model: kind,
                config_hash: hash.clone(),
                result: result.clone(),
            };
            write_atomic(
                &path,
                &serde_json::to_vec_pretty(&file).expect("plain data serializes"),
            )?;
        }
        Ok((Ok(result), false))
    };

    let outcomes: Vec<_> = if opts.jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.jobs)
            .build()
            .map_err(|e| EvalError::Protocol(format!("worker pool: {e}")))?;
        pool.install(|| plans.par_iter().map(job).collect::<Result<_>>())?
    } else {
        plans.iter().map(job).collect::<Result<_>>()?
    };

    let mut run = LosoRun {
        config_hash: hash.clone(),
        results: Vec::new(),
        failures: Vec::new(),
        resumed: Vec::new(),
    };
    for (outcome, resumed) in outcomes {
        match outcome {
            Ok(r) => {
                if resumed {
                    run.resumed.push(r.subject_id.clone());
                }
                run.results.push(r);
            }
            Err(f) => run.failures.push(f),
        }
    }
    if let Some(dir) = &model_dir {
        write_fold_csv(&run.results, &dir.join(FOLD_CSV))?;
        if !run.results.is_empty() {
            let failed = run.failures.iter().map(|f| f.subject_id.clone()).collect();
            let summary = RunSummary::new(kind, hash, &run.results, failed)?;
            let path = dir.join(SUMMARY_JSON);
            write_atomic(
                &path,
                &serde_json::to_vec_pretty(&summary).expect("plain data serializes"),
            )?;
        }
    }
    Ok(run)
}
