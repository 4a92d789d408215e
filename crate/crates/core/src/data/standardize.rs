use serde::{Deserialize, Serialize};

use super::SubjectRecord;

/// Lower bound on a channel's standard deviation.
pub const STD_FLOOR: f64 = 1e-8;

/// Per-channel z-scoring statistics over every sample of every trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ChannelStats {
    /// Two-pass mean and population standard deviation, floored at
    /// [`STD_FLOOR`]. Panics on an empty slice or mixed channel counts.
    pub fn from_subjects(subjects: &[&SubjectRecord]) -> Self {
        let first = subjects
            .first()
            .expect("statistics need at least one subject");
        let (c, s) = (first.n_channels(), first.n_samples());
        assert!(
            subjects
                .iter()
                .all(|r| r.n_channels() == c && r.n_samples() == s),
            "mixed geometry"
        );
        let count: f64 = subjects.iter().map(|r| (r.n_trials() * s) as f64).sum();
        let rows = || {
            subjects.iter().flat_map(move |r| {
                r.trials()
                    .chunks(s)
                    .enumerate()
                    .map(move |(i, row)| (i % c, row))
            })
        };
        let mut mean = vec![0.0; c];
        for (ch, row) in rows() {
            mean[ch] += row.iter().map(|&v| v as f64).sum::<f64>();
        }
        mean.iter_mut().for_each(|m| *m /= count);
        let mut var = vec![0.0; c];
        for (ch, row) in rows() {
            var[ch] += row
                .iter()
                .map(|&v| (v as f64 - mean[ch]).powi(2))
                .sum::<f64>();
        }
        let std = var
            .iter()
            .map(|v| (v / count).sqrt().max(STD_FLOOR))
            .collect();
        Self { mean, std }
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    /// Standardizes one `[n_channels × n_samples]` trial into `out`.
    pub fn apply_trial(&self, trial: &[f32], out: &mut [f32]) {
        let s = trial.len() / self.channels();
        for (ch, (src, dst)) in trial.chunks(s).zip(out.chunks_mut(s)).enumerate() {
            let (m, sd) = (self.mean[ch], self.std[ch]);
            for (d, &v) in dst.iter_mut().zip(src) {
                *d = ((v as f64 - m) / sd) as f32;
            }
        }
    }

    pub fn apply(&self, record: &SubjectRecord) -> SubjectRecord {
        let mut trials = vec![0.0; record.trials().len()];
        for (src, dst) in record
            .trials()
            .chunks(record.trial_len())
            .zip(trials.chunks_mut(record.trial_len()))
        {
            self.apply_trial(src, dst);
        }
        SubjectRecord::new(
            record.subject_id(),
            record.n_channels(),
            record.n_samples(),
            trials,
            record.labels().to_vec(),
        )
        .expect("geometry unchanged")
    }
}

/// Fits statistics on `train` only and applies them to `train` and
/// `apply_to` alike.
pub fn standardize(
    train: &[&SubjectRecord],
    apply_to: &[&SubjectRecord],
) -> (Vec<SubjectRecord>, Vec<SubjectRecord>, ChannelStats) {
    let stats = ChannelStats::from_subjects(train);
    let a = train.iter().map(|r| stats.apply(r)).collect();
    let b = apply_to.iter().map(|r| stats.apply(r)).collect();
    (a, b, stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_channel_maps_to_zero() {
        let r = SubjectRecord::new("A", 2, 3, vec![5.0, 5.0, 5.0, 1.0, 2.0, 3.0], vec![0]).unwrap();
        let stats = ChannelStats::from_subjects(&[&r]);
        assert_eq!(stats.std[0], STD_FLOOR);
        let out = stats.apply(&r);
        assert_eq!(&out.trials()[..3], &[0.0, 0.0, 0.0]);
        assert!((stats.std[1] - (2.0f64 / 3.0).sqrt()).abs() < 1e-12);
    }
}
