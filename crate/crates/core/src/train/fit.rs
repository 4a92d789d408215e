use std::time::Instant;

use log::debug;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::SubjectRecord;
use crate::model::{Mode, Model};
use crate::tensor::{Graph, Real, Tensor};

use super::{
    adam_step, AdamState, Decision, EpochRecord, EpochTrace, Monitor, Plateau, Result, TrainConfig,
    TrainError,
};

/// `(subject index, trial index)` into the training records.
pub type TrialRef = (usize, usize);

const SPLIT_STREAM: u64 = 0;
const SHUFFLE_STREAM: u64 = 1;
const DROPOUT_STREAM: u64 = 2;

/// Holds out `round(fraction · n)` trials of every (subject, class) group.
/// Returns `(train, validation)`, each sorted.
pub fn stratified_split(
    records: &[&SubjectRecord],
    fraction: f64,
    seed: u64,
) -> (Vec<TrialRef>, Vec<TrialRef>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SPLIT_STREAM);
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for (s, r) in records.iter().enumerate() {
        for class in 0..2u8 {
            let mut group: Vec<TrialRef> = (0..r.n_trials())
                .filter(|&t| r.labels()[t] == class)
                .map(|t| (s, t))
                .collect();
            group.shuffle(&mut rng);
            let k = (fraction * group.len() as f64).round() as usize;
            val.extend_from_slice(&group[..k]);
            train.extend_from_slice(&group[k..]);
        }
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

/// Shuffled minibatches in which every class is spread evenly: class `c`
/// contributes `⌊n_c/B⌋` or `⌈n_c/B⌉` trials to each of the `B` batches.
pub fn stratified_batches(
    labels: &[usize],
    batch_size: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<usize>> {
    let n_batches = labels.len().div_ceil(batch_size).max(1);
    let n_classes = labels.iter().max().map_or(0, |&m| m + 1);
    let mut order = Vec::with_capacity(labels.len());
    for class in 0..n_classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        members.shuffle(rng);
        order.extend(members);
    }
    let mut batches = vec![Vec::with_capacity(batch_size + 1); n_batches];
    for (k, i) in order.into_iter().enumerate() {
        batches[k % n_batches].push(i);
    }
    batches.retain(|b| !b.is_empty());
    for b in &mut batches {
        b.shuffle(rng);
    }
    batches.shuffle(rng);
    batches
}

/// Trials gathered into one contiguous block.
struct Samples<T> {
    data: Vec<T>,
    labels: Vec<usize>,
    n_channels: usize,
    n_samples: usize,
}

impl<T: Real> Samples<T> {
    fn gather(records: &[&SubjectRecord], refs: &[TrialRef]) -> Self {
        let (c, s) = records
            .first()
            .map_or((0, 0), |r| (r.n_channels(), r.n_samples()));
        let mut data = Vec::with_capacity(refs.len() * c * s);
        let mut labels = Vec::with_capacity(refs.len());
        for &(si, ti) in refs {
            data.extend(records[si].trial(ti).iter().map(|&v| T::lit(v as f64)));
            labels.push(records[si].labels()[ti] as usize);
        }
        Self {
            data,
            labels,
            n_channels: c,
            n_samples: s,
        }
    }

    fn len(&self) -> usize {
        self.labels.len()
    }

    fn batch(&self, idx: &[usize]) -> Result<(Tensor<T>, Vec<usize>)> {
        let row = self.n_channels * self.n_samples;
        let mut data = Vec::with_capacity(idx.len() * row);
        for &i in idx {
            data.extend_from_slice(&self.data[i * row..(i + 1) * row]);
        }
        let x = Tensor::new([idx.len(), self.n_channels, self.n_samples], data)?;
        Ok((x, idx.iter().map(|&i| self.labels[i]).collect()))
    }
}

/// Inference-mode objective averaged over trials, evaluated in chunks.
fn samples_loss<T: Real>(model: &Model<T>, samples: &Samples<T>, chunk: usize) -> Result<f64> {
    let (mut total, mut count) = (0.0, 0);
    let all: Vec<usize> = (0..samples.len()).collect();
    for idx in all.chunks(chunk) {
        let (x, labels) = samples.batch(idx)?;
        let mut g = Graph::new();
        let xv = g.input(x);
        let fwd = model.forward(&mut g, xv, Mode::Infer)?;
        let (_, bundle) = model.loss(&mut g, &fwd, xv, &labels)?;
        total += bundle.total() * idx.len() as f64;
        count += idx.len();
    }
    Ok(total / count.max(1) as f64)
}

/// Inference-mode objective over the given trials, in chunks of `chunk`.
pub fn mean_loss<T: Real>(
    model: &Model<T>,
    records: &[&SubjectRecord],
    refs: &[TrialRef],
    chunk: usize,
) -> Result<f64> {
    samples_loss(model, &Samples::gather(records, refs), chunk.max(1))
}

pub struct FitOutcome<T> {
    /// Parameters and running statistics of the best monitored epoch.
    pub model: Model<T>,
    pub trace: EpochTrace,
    pub validation: Vec<TrialRef>,
}

/// Trains `model` on `records` and returns it restored to its best epoch.
/// The records are only read.
pub fn fit<T: Real>(
    mut model: Model<T>,
    records: &[&SubjectRecord],
    cfg: &TrainConfig,
) -> Result<FitOutcome<T>> {
    cfg.validate()?;
    let spec = model.spec();
    if let Some(r) = records
        .iter()
        .find(|r| r.n_channels() != spec.n_channels || r.n_samples() != spec.n_samples)
    {
        return Err(TrainError::Config(format!(
            "subject {} is {} × {}, model expects {} × {}",
            r.subject_id(),
            r.n_channels(),
            r.n_samples(),
            spec.n_channels,
            spec.n_samples
        )));
    }
    let (train_refs, val_refs) = stratified_split(records, cfg.validation_fraction, cfg.seed);
    let train = Samples::<T>::gather(records, &train_refs);
    for class in 0..2 {
        if !train.labels.contains(&class) {
            return Err(TrainError::Config(format!(
                "training data has no trial of class {class}"
            )));
        }
    }
    let val = Samples::<T>::gather(records, &val_refs);
    if cfg.monitor == Monitor::ValLoss && val.len() == 0 {
        return Err(TrainError::Config("validation split is empty".into()));
    }

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    shuffle_rng.set_stream(SHUFFLE_STREAM);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    dropout_rng.set_stream(DROPOUT_STREAM);

    let mut adam = AdamState::new(model.params());
    let mut plateau = Plateau::new(cfg);
    let mut trace = EpochTrace::default();
    let mut best = model.clone();

    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        let lr = plateau.lr();
        let (mut loss_sum, mut seen) = (0.0, 0);
        for (b, idx) in stratified_batches(&train.labels, cfg.batch_size, &mut shuffle_rng)
            .iter()
            .enumerate()
        {
            let (x, labels) = train.batch(idx)?;
            let mut g = Graph::new();
            let xv = g.input(x);
            let fwd = model.forward(&mut g, xv, Mode::Train(&mut dropout_rng))?;
            let (loss, _) = model.loss(&mut g, &fwd, xv, &labels)?;
            let value = g.value(loss).item().to_f64().unwrap_or(f64::NAN);
            let non_finite = |what: &str| TrainError::NonFinite {
                what: what.into(),
                epoch,
                batch: b + 1,
            };
            if !value.is_finite() {
                return Err(non_finite("training loss"));
            }
            g.backward(loss)?;
            let grads: Vec<Tensor<T>> = fwd
                .params
                .iter()
                .zip(model.params())
                .map(|(&v, p)| {
                    g.take_grad(v)
                        .unwrap_or_else(|| Tensor::zeros(p.value.shape()))
                })
                .collect();
            adam_step(model.params_mut(), &grads, &mut adam, lr).map_err(|e| match e {
                TrainError::NonFinite { what, .. } => non_finite(&what),
                other => other,
            })?;
            for (i, stats) in fwd.stat_updates {
                model.set_running_stats(i, stats);
            }
            loss_sum += value * idx.len() as f64;
            seen += idx.len();
        }
        let train_loss = loss_sum / seen as f64;
        let val_loss = if val.len() > 0 {
            Some(samples_loss(&model, &val, cfg.batch_size)?)
        } else {
            None
        };
        let monitored = match cfg.monitor {
            Monitor::ValLoss => val_loss.expect("validation split checked"),
            Monitor::TrainLoss => train_loss,
        };
        if !monitored.is_finite() {
            return Err(TrainError::NonFinite {
                what: "monitored loss".into(),
                epoch,
                batch: 0,
            });
        }
        let (improved, decision) = plateau.observe(monitored);
        if improved {
            best = model.clone();
        }
        trace.records.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            lr,
            improved,
        });
        debug!(
            "epoch {epoch}: train {train_loss:.5} val {val_loss:?} lr {lr} improved {improved} ({:.2?})",
            started.elapsed()
        );
        if decision == Decision::Stop {
            trace.stopped_early = epoch < cfg.epochs;
            break;
        }
    }
    trace.best_epoch = plateau.best_epoch();
    Ok(FitOutcome {
        model: best,
        trace,
        validation: val_refs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batches_spread_each_class() {
        let labels: Vec<usize> = (0..130).map(|i| usize::from(i % 3 == 0)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let batches = stratified_batches(&labels, 64, &mut rng);
        assert_eq!(batches.len(), 3);
        let mut all: Vec<usize> = batches.concat();
        all.sort_unstable();
        assert_eq!(all, (0..130).collect::<Vec<_>>());
        for b in &batches {
            let ones = b.iter().filter(|&&i| labels[i] == 1).count();
            assert!((14..=15).contains(&ones), "{ones}");
            assert!((43..=44).contains(&b.len()));
        }
    }

    #[test]
    fn split_is_per_subject_and_class() {
        let rec = |id: &str| {
            SubjectRecord::new(
                id,
                1,
                1,
                vec![0.0; 40],
                (0..40).map(|i| (i % 2) as u8).collect(),
            )
            .unwrap()
        };
        let (a, b) = (rec("A"), rec("B"));
        let (train, val) = stratified_split(&[&a, &b], 0.1, 9);
        assert_eq!((train.len(), val.len()), (72, 8));
        for s in 0..2 {
            for class in 0..2u8 {
                let n = val
                    .iter()
                    .filter(|&&(si, ti)| si == s && a.labels()[ti] == class)
                    .count();
                assert_eq!(n, 2);
            }
        }
        assert_eq!(stratified_split(&[&a, &b], 0.1, 9).1, val);
    }
}
