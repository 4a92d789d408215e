//! Epoched motor-imagery recordings: the in-memory model, the MIEP file
//! format, a synthetic generator and per-channel standardization.

mod miep;
mod standardize;
mod synth;

use std::collections::HashSet;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use miep::{export_csv, load_dataset, save_dataset, HEADER_LEN, MAGIC, MONTAGE_FILE, VERSION};
pub use standardize::{standardize, ChannelStats, STD_FLOOR};
pub use synth::{synthesize_dataset, SynthConfig};

/// The 16 sensorimotor electrodes of the reference recordings, in file order.
pub const DEFAULT_MONTAGE: [&str; 16] = [
    "F3", "Fz", "F4", "FC1", "FC5", "FC2", "FC6", "C3", "Cz", "C4", "CP1", "CP5", "CP2", "CP6",
    "T7", "T8",
];

pub const DEFAULT_SAMPLE_RATE: f32 = 250.0;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{file}: offset {offset}: {message}")]
    Format {
        file: PathBuf,
        offset: u64,
        message: String,
    },
    #[error("geometry: {0}")]
    Geometry(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("dataset has no subjects")]
    Empty,
}

pub type Result<T> = std::result::Result<T, DataError>;

/// One subject's trials, stored trial-major then channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectRecord {
    subject_id: String,
    n_channels: usize,
    n_samples: usize,
    trials: Vec<f32>,
    labels: Vec<u8>,
}

impl SubjectRecord {
    pub fn new(
        subject_id: impl Into<String>,
        n_channels: usize,
        n_samples: usize,
        trials: Vec<f32>,
        labels: Vec<u8>,
    ) -> Result<Self> {
        let subject_id = subject_id.into();
        if subject_id.is_empty() || subject_id.contains(['/', '\\']) {
            return Err(DataError::Config(format!(
                "unusable subject id '{subject_id}'"
            )));
        }
        if n_channels == 0 || n_samples == 0 || labels.is_empty() {
            return Err(DataError::Geometry(format!(
                "subject {subject_id} has an empty axis"
            )));
        }
        if trials.len() != labels.len() * n_channels * n_samples {
            return Err(DataError::Geometry(format!(
                "subject {subject_id}: {} values for {} trials × {n_channels} × {n_samples}",
                trials.len(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l > 1) {
            return Err(DataError::Geometry(format!(
                "subject {subject_id}: label {bad} is not 0 or 1"
            )));
        }
        Ok(Self {
            subject_id,
            n_channels,
            n_samples,
            trials,
            labels,
        })
    }

    pub fn subject_id(&self) -> &str {
        &self.subject_id
    }

    pub fn n_trials(&self) -> usize {
        self.labels.len()
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn trial_len(&self) -> usize {
        self.n_channels * self.n_samples
    }

    /// `[n_channels × n_samples]` of trial `i`.
    pub fn trial(&self, i: usize) -> &[f32] {
        &self.trials[i * self.trial_len()..(i + 1) * self.trial_len()]
    }

    pub fn trials(&self) -> &[f32] {
        &self.trials
    }

    /// 0 = left hand, 1 = right hand.
    pub fn labels(&self) -> &[u8] {
        &self.labels
    }
}

/// Subjects sharing one montage, sample rate and epoch length, sorted by id.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochedDataset {
    subjects: Vec<SubjectRecord>,
    montage: Vec<String>,
    sample_rate: f32,
}

impl EpochedDataset {
    pub fn new(
        mut subjects: Vec<SubjectRecord>,
        montage: Vec<String>,
        sample_rate: f32,
    ) -> Result<Self> {
        let first = subjects.first().ok_or(DataError::Empty)?;
        let (c, s) = (first.n_channels, first.n_samples);
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(DataError::Geometry(format!(
                "sample rate {sample_rate} is not positive"
            )));
        }
        if montage.len() != c {
            return Err(DataError::Geometry(format!(
                "montage names {} channels, data has {c}",
                montage.len()
            )));
        }
        if let Some(odd) = subjects
            .iter()
            .find(|r| r.n_channels != c || r.n_samples != s)
        {
            return Err(DataError::Geometry(format!(
                "subject {} is {} × {}, expected {c} × {s}",
                odd.subject_id, odd.n_channels, odd.n_samples
            )));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = subjects
            .iter()
            .find(|r| !seen.insert(r.subject_id.as_str()))
        {
            return Err(DataError::Geometry(format!(
                "duplicate subject id {}",
                dup.subject_id
            )));
        }
        subjects.sort_by(|a, b| a.subject_id.cmp(&b.subject_id));
        Ok(Self {
            subjects,
            montage,
            sample_rate,
        })
    }

    pub fn subjects(&self) -> &[SubjectRecord] {
        &self.subjects
    }

    pub fn subject(&self, id: &str) -> Option<&SubjectRecord> {
        self.subjects.iter().find(|r| r.subject_id == id)
    }

    pub fn subject_ids(&self) -> Vec<String> {
        self.subjects.iter().map(|r| r.subject_id.clone()).collect()
    }

    pub fn montage(&self) -> &[String] {
        &self.montage
    }

    pub fn sample_rate(&self) -> f32 {
        self.sample_rate
    }

    pub fn n_channels(&self) -> usize {
        self.montage.len()
    }

    pub fn n_samples(&self) -> usize {
        self.subjects[0].n_samples
    }

    pub fn total_trials(&self) -> usize {
        self.subjects.iter().map(SubjectRecord::n_trials).sum()
    }

    /// Copy with every subject's labels permuted among its own trials; the
    /// permutation-null control for the evaluation protocol.
    pub fn with_shuffled_labels(&self, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let subjects = self
            .subjects
            .iter()
            .map(|r| {
                let mut labels = r.labels.clone();
                labels.shuffle(&mut rng);
                SubjectRecord {
                    labels,
                    ..r.clone()
                }
            })
            .collect();
        Self {
            subjects,
            ..self.clone()
        }
    }
}

/// Default names for `n` channels: the reference montage for 16, otherwise
/// `Ch1 … ChN`.
pub fn default_montage(n: usize) -> Vec<String> {
    if n == DEFAULT_MONTAGE.len() {
        DEFAULT_MONTAGE.iter().map(|s| s.to_string()).collect()
    } else {
        (1..=n).map(|i| format!("Ch{i}")).collect()
    }
}
