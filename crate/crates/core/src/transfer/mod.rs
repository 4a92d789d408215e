//! Leave-one-subject-out evaluation: fold plans, per-fold scoring, the
//! resumable fold runner and accuracy summaries.

mod run;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, SubjectRecord};
use crate::model::{Model, ModelError};
use crate::tensor::{Tensor, TensorError};
use crate::train::{EpochTrace, TrainError};

pub use run::{
    config_hash, run_loso, write_fold_csv, FoldFailure, FoldRow, LosoOptions, LosoRun, RunSummary,
};

/// Accuracy at or above which a subject counts as an efficient user.
pub const EFFICIENCY_THRESHOLD: f64 = 0.70;
pub const HISTOGRAM_BINS: usize = 10;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("protocol: {0}")]
    Protocol(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
}

pub type Result<T> = std::result::Result<T, EvalError>;

impl EvalError {
    /// Non-finite values during training or while scoring the held-out subject.
    pub fn is_divergence(&self) -> bool {
        match self {
            EvalError::Train(e) => e.is_divergence(),
            EvalError::Model(ModelError::Tensor(TensorError::NonFinite(_))) => true,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub held_out: String,
    pub train_subjects: Vec<String>,
}

/// Fold `i` holds out subject `i`; the rest train, in the given order.
pub fn loso_split(subject_ids: &[String]) -> Result<Vec<FoldPlan>> {
    if subject_ids.len() < 2 {
        return Err(EvalError::Protocol(format!(
            "leave-one-subject-out needs at least 2 subjects, got {}",
            subject_ids.len()
        )));
    }
    Ok(subject_ids
        .iter()
        .enumerate()
        .map(|(i, held_out)| FoldPlan {
            held_out: held_out.clone(),
            train_subjects: subject_ids
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, s)| s.clone())
                .collect(),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub subject_id: String,
    pub n_test: usize,
    pub n_correct: usize,
    /// `n_correct / n_test`.
    pub accuracy: f64,
    pub trace: EpochTrace,
}

impl FoldResult {
    pub fn epochs_run(&self) -> usize {
        self.trace.len()
    }
}

/// Scores a trained model on every trial of the held-out subject.
pub fn evaluate_fold(model: &Model<f32>, held_out: &SubjectRecord) -> Result<FoldResult> {
    let x = Tensor::new(
        [
            held_out.n_trials(),
            held_out.n_channels(),
            held_out.n_samples(),
        ],
        held_out.trials().to_vec(),
    )
    .map_err(ModelError::from)?;
    let predictions = model.predict(&x)?;
    let n_correct = predictions
        .iter()
        .zip(held_out.labels())
        .filter(|&(&p, &l)| p == l as usize)
        .count();
    let n_test = held_out.n_trials();
    Ok(FoldResult {
        subject_id: held_out.subject_id().to_string(),
        n_test,
        n_correct,
        accuracy: n_correct as f64 / n_test as f64,
        trace: EpochTrace::default(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub accuracies: Vec<f64>,
    /// Lower middle element for an even count.
    pub median: f64,
    pub max: f64,
    pub threshold: f64,
    pub count_above_threshold: usize,
    /// Bin `k` counts accuracies in `[10k, 10k + 10)` percent; the last bin
    /// also holds 100%.
    pub histogram: [usize; HISTOGRAM_BINS],
}

/// Histogram bin of an accuracy in `[0, 1]`.
pub fn histogram_bin(accuracy: f64) -> usize {
    // nudge so that k/10 lands in bin k despite rounding in k/n
    ((accuracy * HISTOGRAM_BINS as f64 + 1e-9).floor().max(0.0) as usize).min(HISTOGRAM_BINS - 1)
}

pub fn summarize(accuracies: &[f64], threshold: f64) -> Result<EvalSummary> {
    if accuracies.is_empty() {
        return Err(EvalError::Protocol("no accuracies to summarize".into()));
    }
    if let Some(bad) = accuracies.iter().find(|a| !(0.0..=1.0).contains(*a)) {
        return Err(EvalError::Protocol(format!(
            "accuracy {bad} outside [0, 1]"
        )));
    }
    let mut sorted = accuracies.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut histogram = [0; HISTOGRAM_BINS];
    for &a in accuracies {
        histogram[histogram_bin(a)] += 1;
    }
    Ok(EvalSummary {
        accuracies: accuracies.to_vec(),
        median: sorted[(sorted.len() - 1) / 2],
        max: sorted[sorted.len() - 1],
        threshold,
        count_above_threshold: accuracies.iter().filter(|&&a| a >= threshold).count(),
        histogram,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_is_inclusive() {
        let s = summarize(&[0.71, 0.69, 0.70], EFFICIENCY_THRESHOLD).unwrap();
        assert_eq!(s.count_above_threshold, 2);
        assert_eq!(s.median, 0.70);
    }

    #[test]
    fn even_count_takes_the_lower_middle() {
        let s = summarize(&[0.4, 0.9, 0.6, 0.5], 0.7).unwrap();
        assert_eq!(s.median, 0.5);
        assert_eq!(s.max, 0.9);
    }

    #[test]
    fn bins_are_left_inclusive() {
        assert_eq!(histogram_bin(0.7), 7);
        assert_eq!(histogram_bin(84.0 / 120.0), 7);
        assert_eq!(histogram_bin(0.6999), 6);
        assert_eq!(histogram_bin(1.0), 9);
        assert_eq!(histogram_bin(0.0), 0);
        let s = summarize(&[0.45, 0.55, 0.55, 0.75], 0.7).unwrap();
        assert_eq!(s.histogram, [0, 0, 0, 0, 1, 2, 0, 1, 0, 0]);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(summarize(&[], 0.7), Err(EvalError::Protocol(_))));
        assert!(matches!(
            loso_split(&["S01".into()]),
            Err(EvalError::Protocol(_))
        ));
    }
}
