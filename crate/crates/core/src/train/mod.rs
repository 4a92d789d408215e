//! Adam, the plateau learning-rate schedule, early stopping and the epoch
//! loop that trains a [`Model`](crate::model::Model).

mod adam;
mod fit;
mod schedule;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ModelError, ModelKind};
use crate::tensor::TensorError;

pub use adam::{adam_step, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use fit::{fit, mean_loss, stratified_batches, stratified_split, FitOutcome, TrialRef};
pub use schedule::{early_stop_epoch, lr_trajectory, Decision, Plateau, IMPROVEMENT_TOL};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("non-finite {what} at epoch {epoch}, batch {batch}")]
    NonFinite {
        what: String,
        epoch: usize,
        batch: usize,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, TrainError>;

impl TrainError {
    /// Whether training produced a non-finite value anywhere.
    pub fn is_divergence(&self) -> bool {
        matches!(
            self,
            TrainError::NonFinite { .. }
                | TrainError::Tensor(TensorError::NonFinite(_))
                | TrainError::Model(ModelError::Tensor(TensorError::NonFinite(_)))
        )
    }
}

/// Quantity that drives the plateau schedule, early stopping and the choice
/// of the restored epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Monitor {
    ValLoss,
    TrainLoss,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub min_lr: f64,
    /// LR multiplier applied on a plateau.
    pub factor: f64,
    /// Non-improving epochs before an LR cut.
    pub patience: usize,
    /// Non-improving epochs before stopping.
    pub es_patience: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Share of every (subject, class) group held out for validation.
    pub validation_fraction: f64,
    pub monitor: Monitor,
}

impl TrainConfig {
    /// Per-model schedule with batch size 64 and a 10% validation split.
    pub fn for_model(kind: ModelKind) -> Self {
        let (epochs, learning_rate, min_lr, factor, patience, es_patience) = match kind {
            ModelKind::EegNet => (100, 0.1, 0.001, 0.25, 7, 18),
            ModelKind::DeepConvNet => (120, 0.01, 0.001, 0.25, 10, 30),
            ModelKind::Min2Net => (200, 0.01, 0.0006, 0.5, 12, 32),
        };
        Self {
            epochs,
            learning_rate,
            min_lr,
            factor,
            patience,
            es_patience,
            batch_size: 64,
            seed: 0,
            validation_fraction: 0.1,
            monitor: Monitor::ValLoss,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(TrainError::Config(m));
        if self.epochs == 0 {
            return err("epochs must be positive".into());
        }
        if self.batch_size < 2 {
            return err(format!(
                "batch size {} leaves batch norm without statistics",
                self.batch_size
            ));
        }
        if !(self.factor > 0.0 && self.factor < 1.0) {
            return err(format!("factor {} outside (0, 1)", self.factor));
        }
        if !(self.min_lr > 0.0
            && self.min_lr <= self.learning_rate
            && self.learning_rate.is_finite())
        {
            return err(format!(
                "need 0 < min_lr ≤ learning_rate, got {} and {}",
                self.min_lr, self.learning_rate
            ));
        }
        if self.patience > self.es_patience {
            return err(format!(
                "patience {} exceeds es_patience {}",
                self.patience, self.es_patience
            ));
        }
        // without a validation split only the training loss can be watched
        let lower_ok = match self.monitor {
            Monitor::ValLoss => self.validation_fraction > 0.0,
            Monitor::TrainLoss => self.validation_fraction >= 0.0,
        };
        if !(lower_ok && self.validation_fraction < 0.5) {
            return err(format!(
                "validation_fraction {} invalid for monitor {:?}",
                self.validation_fraction, self.monitor
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    /// Learning rate in effect during this epoch.
    pub lr: f64,
    pub improved: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EpochTrace {
    pub records: Vec<EpochRecord>,
    pub stopped_early: bool,
    /// 1-based epoch whose parameters were restored.
    pub best_epoch: usize,
}

impl EpochTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Columns `epoch, train_loss, val_loss, lr, improved`; a missing
    /// validation loss is an empty field.
    pub fn write_csv<W: Write>(&self, out: W) -> std::result::Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let io = |source| TrainError::Io {
            path: path.to_path_buf(),
            source,
        };
        let file = File::create(path).map_err(io)?;
        self.write_csv(BufWriter::new(file))
            .map_err(|e| io(std::io::Error::other(e)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_schedules_validate() {
        for kind in ModelKind::ALL {
            TrainConfig::for_model(kind).validate().unwrap();
        }
        let eeg = TrainConfig::for_model(ModelKind::EegNet);
        assert_eq!(
            (eeg.epochs, eeg.learning_rate, eeg.patience, eeg.es_patience),
            (100, 0.1, 7, 18)
        );
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let base = TrainConfig::for_model(ModelKind::EegNet);
        let bad = [
            TrainConfig {
                epochs: 0,
                ..base.clone()
            },
            TrainConfig {
                factor: 1.0,
                ..base.clone()
            },
            TrainConfig {
                min_lr: 0.2,
                ..base.clone()
            },
            TrainConfig {
                patience: 19,
                ..base.clone()
            },
            TrainConfig {
                validation_fraction: 0.0,
                ..base.clone()
            },
            TrainConfig {
                validation_fraction: 0.5,
                ..base.clone()
            },
        ];
        for cfg in bad {
            assert!(
                matches!(cfg.validate(), Err(TrainError::Config(_))),
                "{cfg:?}"
            );
        }
        let no_split = TrainConfig {
            validation_fraction: 0.0,
            monitor: Monitor::TrainLoss,
            ..base
        };
        no_split.validate().unwrap();
    }

    #[test]
    fn trace_csv_columns() {
        let trace = EpochTrace {
            records: vec![EpochRecord {
                epoch: 1,
                train_loss: 0.5,
                val_loss: None,
                lr: 0.1,
                improved: true,
            }],
            stopped_early: false,
            best_epoch: 1,
        };
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "epoch,train_loss,val_loss,lr,improved\n1,0.5,,0.1,true\n"
        );
    }
}
