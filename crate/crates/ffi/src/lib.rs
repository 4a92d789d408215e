//! C interface to the `mitransfer` library.
//!
//! Objects cross the boundary as opaque handles that the caller releases
//! with the matching `*_free` function. Every fallible call returns a
//! [`MitStatus`]; on failure the message is kept per thread and can be read
//! with [`mit_last_error`]. Panics never unwind into C.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::slice;

use mitransfer::data::{
    load_dataset, save_dataset, synthesize_dataset, DataError, EpochedDataset, SynthConfig,
};
use mitransfer::model::{Model, ModelError, ModelKind, ModelSpec};
use mitransfer::stats::{friedman, holm_adjust, shapiro_wilk, wilcoxon_signed_rank, StatError};
use mitransfer::tensor::Tensor;
use mitransfer::train::TrainConfig;
use mitransfer::transfer::{run_loso, EvalError, LosoOptions, LosoRun};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MitStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    Format = 3,
    Io = 4,
    Model = 5,
    Training = 6,
    Statistics = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MitModelKind {
    EegNet = 0,
    DeepConvNet = 1,
    Min2Net = 2,
}

impl From<MitModelKind> for ModelKind {
    fn from(k: MitModelKind) -> Self {
        match k {
            MitModelKind::EegNet => ModelKind::EegNet,
            MitModelKind::DeepConvNet => ModelKind::DeepConvNet,
            MitModelKind::Min2Net => ModelKind::Min2Net,
        }
    }
}

/// Synthetic dataset parameters; start from [`mit_synth_defaults`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct MitSynthParams {
    pub n_subjects: usize,
    pub trials_per_subject: usize,
    pub n_channels: usize,
    pub n_samples: usize,
    pub sample_rate: f32,
    pub erd_depth: f64,
    pub noise_scale: f64,
    pub cue_onset_s: f64,
    pub seed: u64,
}

/// Opaque dataset handle.
pub struct MitDataset(EpochedDataset);

/// Opaque single-precision model handle.
pub struct MitModel(Model<f32>);

/// Opaque leave-one-subject-out result handle.
pub struct MitLoso(LosoRun);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure(MitStatus, String);

type Outcome = Result<(), Failure>;

fn fail(status: MitStatus, message: impl ToString) -> Failure {
    Failure(status, message.to_string())
}

impl From<DataError> for Failure {
    fn from(e: DataError) -> Self {
        let status = match e {
            DataError::Io { .. } => MitStatus::Io,
            DataError::Format { .. } => MitStatus::Format,
            _ => MitStatus::InvalidArgument,
        };
        fail(status, e)
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        fail(MitStatus::Model, e)
    }
}

impl From<StatError> for Failure {
    fn from(e: StatError) -> Self {
        fail(MitStatus::Statistics, e)
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        let status = match e {
            EvalError::Protocol(_) => MitStatus::InvalidArgument,
            EvalError::Data(_) => MitStatus::Format,
            EvalError::Model(_) => MitStatus::Model,
            EvalError::Train(_) => MitStatus::Training,
            EvalError::Io { .. } => MitStatus::Io,
        };
        fail(status, e)
    }
}

fn guard(f: impl FnOnce() -> Outcome) -> MitStatus {
    let (status, message) = match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => (MitStatus::Ok, String::new()),
        Ok(Err(Failure(s, m))) => (s, m),
        Err(_) => (MitStatus::Panic, "internal panic".to_string()),
    };
    // interior NULs cannot occur in our messages; replace defensively
    let c = CString::new(message.replace('\0', " ")).expect("NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
    status
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(fail(MitStatus::NullArgument, "path is null"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(MitStatus::InvalidArgument, "path is not UTF-8"))?;
    Ok(PathBuf::from(s))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(MitStatus::NullArgument, format!("{what} is null")));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut()
        .ok_or_else(|| fail(MitStatus::NullArgument, format!("{what} is null")))
}

unsafe fn handle<'a, T>(p: *const T) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| fail(MitStatus::NullArgument, "handle is null"))
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn mit_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mit_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub extern "C" fn mit_synth_defaults() -> MitSynthParams {
    let d = SynthConfig::default();
    MitSynthParams {
        n_subjects: d.n_subjects,
        trials_per_subject: d.trials_per_subject,
        n_channels: d.n_channels,
        n_samples: d.n_samples,
        sample_rate: d.sample_rate,
        erd_depth: d.erd_depth,
        noise_scale: d.noise_scale,
        cue_onset_s: d.cue_onset_s,
        seed: d.seed,
    }
}

/// # Safety
/// `params` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn mit_dataset_synthesize(
    params: *const MitSynthParams,
    out: *mut *mut MitDataset,
) -> MitStatus {
    guard(|| {
        let p = handle(params)?;
        let out = out_arg(out, "out")?;
        let cfg = SynthConfig {
            n_subjects: p.n_subjects,
            trials_per_subject: p.trials_per_subject,
            n_channels: p.n_channels,
            n_samples: p.n_samples,
            sample_rate: p.sample_rate,
            erd_depth: p.erd_depth,
            noise_scale: p.noise_scale,
            cue_onset_s: p.cue_onset_s,
            seed: p.seed,
            ..SynthConfig::default()
        };
        let ds = synthesize_dataset(&cfg)?;
        *out = Box::into_raw(Box::new(MitDataset(ds)));
        Ok(())
    })
}

/// # Safety
/// `dir` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mit_dataset_load(
    dir: *const c_char,
    out: *mut *mut MitDataset,
) -> MitStatus {
    guard(|| {
        let dir = path_arg(dir)?;
        let out = out_arg(out, "out")?;
        *out = Box::into_raw(Box::new(MitDataset(load_dataset(&dir)?)));
        Ok(())
    })
}

/// # Safety
/// `ds` must come from this library and `dir` be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn mit_dataset_save(ds: *const MitDataset, dir: *const c_char) -> MitStatus {
    guard(|| {
        let ds = handle(ds)?;
        save_dataset(&ds.0, &path_arg(dir)?)?;
        Ok(())
    })
}

/// Writes subject count, channels, samples per trial and total trials.
///
/// # Safety
/// `ds` must come from this library; out pointers may be null to skip.
#[no_mangle]
pub unsafe extern "C" fn mit_dataset_shape(
    ds: *const MitDataset,
    n_subjects: *mut usize,
    n_channels: *mut usize,
    n_samples: *mut usize,
    n_trials: *mut usize,
) -> MitStatus {
    guard(|| {
        let ds = &handle(ds)?.0;
        for (p, v) in [
            (n_subjects, ds.subjects().len()),
            (n_channels, ds.n_channels()),
            (n_samples, ds.n_samples()),
            (n_trials, ds.total_trials()),
        ] {
            if let Some(p) = p.as_mut() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// # Safety
/// `ds` must come from this library or be null; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn mit_dataset_free(ds: *mut MitDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Default architecture of `kind` for the given geometry.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mit_model_new(
    kind: MitModelKind,
    n_channels: usize,
    n_samples: usize,
    sample_rate: f64,
    seed: u64,
    out: *mut *mut MitModel,
) -> MitStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let spec = ModelSpec::new(kind.into(), n_channels, n_samples, sample_rate);
        *out = Box::into_raw(Box::new(MitModel(Model::build(&spec, seed)?)));
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mit_model_load(path: *const c_char, out: *mut *mut MitModel) -> MitStatus {
    guard(|| {
        let path = path_arg(path)?;
        let out = out_arg(out, "out")?;
        *out = Box::into_raw(Box::new(MitModel(Model::<f32>::load(&path)?)));
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library and `path` be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn mit_model_save(model: *const MitModel, path: *const c_char) -> MitStatus {
    guard(|| {
        handle(model)?.0.save(&path_arg(path)?)?;
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mit_model_n_params(model: *const MitModel, out: *mut usize) -> MitStatus {
    guard(|| {
        *out_arg(out, "out")? = handle(model)?.0.n_params();
        Ok(())
    })
}

/// Class probabilities for `n_trials` trials laid out trial, channel,
/// sample. `probs` receives `n_trials * 2` values, row-major.
///
/// # Safety
/// `data` must hold `n_trials * channels * samples` floats and `probs`
/// `probs_len` floats.
#[no_mangle]
pub unsafe extern "C" fn mit_model_predict_proba(
    model: *const MitModel,
    data: *const f32,
    n_trials: usize,
    probs: *mut f32,
    probs_len: usize,
) -> MitStatus {
    guard(|| {
        let model = &handle(model)?.0;
        let spec = model.spec();
        let len = n_trials * spec.n_channels * spec.n_samples;
        let data = slice_arg(data, len, "data")?;
        if n_trials == 0 {
            return Err(fail(MitStatus::InvalidArgument, "no trials"));
        }
        let need = n_trials * spec.n_classes;
        if probs.is_null() || probs_len < need {
            return Err(fail(
                MitStatus::InvalidArgument,
                format!("probs needs room for {need} values"),
            ));
        }
        let x = Tensor::new([n_trials, spec.n_channels, spec.n_samples], data.to_vec())
            .map_err(|e| fail(MitStatus::InvalidArgument, e))?;
        let p = model.predict_proba(&x)?;
        slice::from_raw_parts_mut(probs, need).copy_from_slice(p.data());
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library or be null; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn mit_model_free(model: *mut MitModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Leave-one-subject-out evaluation with the model's default schedule.
/// `epochs` 0 keeps the default budget; `out_dir` may be null to skip
/// writing results.
///
/// # Safety
/// `ds` must come from this library, `out_dir` be null or NUL-terminated and
/// `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mit_loso_run(
    ds: *const MitDataset,
    kind: MitModelKind,
    epochs: usize,
    seed: u64,
    jobs: usize,
    out_dir: *const c_char,
    out: *mut *mut MitLoso,
) -> MitStatus {
    guard(|| {
        let ds = &handle(ds)?.0;
        let out = out_arg(out, "out")?;
        let kind = ModelKind::from(kind);
        let mut cfg = TrainConfig::for_model(kind);
        cfg.seed = seed;
        if epochs > 0 {
            cfg.epochs = epochs;
        }
        let opts = LosoOptions {
            out_dir: if out_dir.is_null() {
                None
            } else {
                Some(path_arg(out_dir)?)
            },
            jobs: jobs.max(1),
            ..LosoOptions::for_model(kind)
        };
        let spec = ModelSpec::new(
            kind,
            ds.n_channels(),
            ds.n_samples(),
            ds.sample_rate() as f64,
        );
        *out = Box::into_raw(Box::new(MitLoso(run_loso(ds, &spec, &cfg, &opts)?)));
        Ok(())
    })
}

/// Completed and failed fold counts.
///
/// # Safety
/// `run` must come from this library; out pointers may be null to skip.
#[no_mangle]
pub unsafe extern "C" fn mit_loso_counts(
    run: *const MitLoso,
    n_completed: *mut usize,
    n_failed: *mut usize,
) -> MitStatus {
    guard(|| {
        let run = &handle(run)?.0;
        if let Some(p) = n_completed.as_mut() {
            *p = run.results.len();
        }
        if let Some(p) = n_failed.as_mut() {
            *p = run.failures.len();
        }
        Ok(())
    })
}

/// Accuracy of completed fold `index`, in subject order.
///
/// # Safety
/// `run` must come from this library and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mit_loso_accuracy(
    run: *const MitLoso,
    index: usize,
    out: *mut f64,
) -> MitStatus {
    guard(|| {
        let run = &handle(run)?.0;
        let fold = run.results.get(index).ok_or_else(|| {
            fail(
                MitStatus::InvalidArgument,
                format!("fold {index} of {}", run.results.len()),
            )
        })?;
        *out_arg(out, "out")? = fold.accuracy;
        Ok(())
    })
}

/// # Safety
/// `run` must come from this library or be null; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn mit_loso_free(run: *mut MitLoso) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// # Safety
/// `x` must hold `n` values; `w` and `p` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn mit_shapiro_wilk(
    x: *const f64,
    n: usize,
    w: *mut f64,
    p: *mut f64,
) -> MitStatus {
    guard(|| {
        let (stat, pv) = shapiro_wilk(slice_arg(x, n, "x")?)?;
        *out_arg(w, "w")? = stat;
        *out_arg(p, "p")? = pv;
        Ok(())
    })
}

/// Friedman test on a row-major `n_blocks × k` matrix, one row per subject.
///
/// # Safety
/// `values` must hold `n_blocks * k` values; `chi2` and `p` must be valid.
#[no_mangle]
pub unsafe extern "C" fn mit_friedman(
    values: *const f64,
    n_blocks: usize,
    k: usize,
    chi2: *mut f64,
    p: *mut f64,
) -> MitStatus {
    guard(|| {
        if k == 0 {
            return Err(fail(MitStatus::InvalidArgument, "k must be positive"));
        }
        let v = slice_arg(values, n_blocks * k, "values")?;
        let r = friedman(&v.chunks(k).map(<[f64]>::to_vec).collect::<Vec<_>>())?;
        *out_arg(chi2, "chi2")? = r.chi2;
        *out_arg(p, "p")? = r.p;
        Ok(())
    })
}

/// Paired Wilcoxon signed-rank test; `statistic` is the negative-rank sum.
///
/// # Safety
/// `x` and `y` must hold `n` values; `statistic` and `p` must be valid.
#[no_mangle]
pub unsafe extern "C" fn mit_wilcoxon(
    x: *const f64,
    y: *const f64,
    n: usize,
    statistic: *mut f64,
    p: *mut f64,
) -> MitStatus {
    guard(|| {
        let r = wilcoxon_signed_rank(slice_arg(x, n, "x")?, slice_arg(y, n, "y")?)?;
        *out_arg(statistic, "statistic")? = r.statistic;
        *out_arg(p, "p")? = r.p;
        Ok(())
    })
}

/// Holm step-down adjustment of `n` p-values into `adjusted`.
///
/// # Safety
/// `p_values` and `adjusted` must each hold `n` values.
#[no_mangle]
pub unsafe extern "C" fn mit_holm(p_values: *const f64, n: usize, adjusted: *mut f64) -> MitStatus {
    guard(|| {
        let adj = holm_adjust(slice_arg(p_values, n, "p_values")?)?;
        if n > 0 {
            if adjusted.is_null() {
                return Err(fail(MitStatus::NullArgument, "adjusted is null"));
            }
            slice::from_raw_parts_mut(adjusted, n).copy_from_slice(&adj);
        }
        Ok(())
    })
}
