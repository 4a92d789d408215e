//! Synthetic left/right motor-imagery trials.
//!
//! Every channel carries pink background noise. C3 and C4 additionally carry
//! a mu rhythm whose power, from the cue onward, drops by `erd_depth` over the
//! hemisphere contralateral to the imagined hand: right-hand trials (label 1)
//! attenuate C3, left-hand trials (label 0) attenuate C4.

use std::f64::consts::TAU;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{
    default_montage, DataError, EpochedDataset, Result, SubjectRecord, DEFAULT_SAMPLE_RATE,
};

/// Seconds over which the desynchronization sets in after the cue.
const ERD_RAMP_S: f64 = 0.5;
/// Samples discarded while the pink-noise filter settles.
const NOISE_WARMUP: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_subjects: usize,
    pub trials_per_subject: usize,
    pub n_channels: usize,
    /// Defaults to 3 s fixation + 1.25 s cue + 3.75 s imagery at 250 Hz.
    pub n_samples: usize,
    pub sample_rate: f32,
    /// Fraction of mu power removed contralaterally after the cue, in [0, 1].
    pub erd_depth: f64,
    /// Standard deviation of the pink background, µV.
    pub noise_scale: f64,
    /// Mu amplitude before the cue, µV.
    pub mu_amplitude: f64,
    /// Cue onset within the epoch, seconds.
    pub cue_onset_s: f64,
    /// Half-width of the uniform per-subject gain around 1.
    pub subject_gain_spread: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_subjects: 55,
            trials_per_subject: 120,
            n_channels: 16,
            n_samples: 2000,
            sample_rate: DEFAULT_SAMPLE_RATE,
            erd_depth: 0.5,
            noise_scale: 10.0,
            mu_amplitude: 10.0,
            cue_onset_s: 3.0,
            subject_gain_spread: 0.3,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn montage(&self) -> Vec<String> {
        default_montage(self.n_channels)
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(DataError::Config(m));
        if self.n_subjects == 0
            || self.trials_per_subject == 0
            || self.n_channels == 0
            || self.n_samples == 0
        {
            return err("subjects, trials, channels and samples must all be positive".into());
        }
        if !(self.sample_rate.is_finite() && self.sample_rate > 0.0) {
            return err(format!("sample rate {} is not positive", self.sample_rate));
        }
        if !(0.0..=1.0).contains(&self.erd_depth) {
            return err(format!("erd_depth {} outside [0, 1]", self.erd_depth));
        }
        for (name, v) in [
            ("noise_scale", self.noise_scale),
            ("mu_amplitude", self.mu_amplitude),
            ("cue_onset_s", self.cue_onset_s),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return err(format!("{name} must be ≥ 0, got {v}"));
            }
        }
        if !(0.0..1.0).contains(&self.subject_gain_spread) {
            return err(format!(
                "subject_gain_spread {} outside [0, 1)",
                self.subject_gain_spread
            ));
        }
        let montage = self.montage();
        if !montage.iter().any(|c| c == "C3") || !montage.iter().any(|c| c == "C4") {
            return err(format!(
                "montage of {} channels lacks C3/C4",
                self.n_channels
            ));
        }
        Ok(())
    }
}

/// Pink noise by Paul Kellet's three-pole economy filter, normalized to unit
/// standard deviation over the returned window.
fn pink_noise(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let (mut b0, mut b1, mut b2) = (0.0, 0.0, 0.0);
    let mut out = Vec::with_capacity(n);
    for i in 0..NOISE_WARMUP + n {
        let w: f64 = rng.sample(StandardNormal);
        b0 = 0.99765 * b0 + w * 0.0990460;
        b1 = 0.96300 * b1 + w * 0.2965164;
        b2 = 0.57000 * b2 + w * 1.0526913;
        if i >= NOISE_WARMUP {
            out.push(b0 + b1 + b2 + w * 0.1848);
        }
    }
    let mean = out.iter().sum::<f64>() / n as f64;
    let sd = (out.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64)
        .sqrt()
        .max(1e-12);
    out.iter_mut().for_each(|v| *v = (*v - mean) / sd);
    out
}

fn subject_id(index: usize, n_subjects: usize) -> String {
    let width = n_subjects.to_string().len().max(2);
    format!("S{:0width$}", index + 1)
}

fn synthesize_subject(cfg: &SynthConfig, index: usize, c3: usize, c4: usize) -> SubjectRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64);
    let (c, s) = (cfg.n_channels, cfg.n_samples);
    let fs = cfg.sample_rate as f64;

    let spread = cfg.subject_gain_spread;
    let gain = if spread > 0.0 {
        rng.random_range(1.0 - spread..1.0 + spread)
    } else {
        1.0
    };
    let hemi = [rng.random_range(0.9..1.1), rng.random_range(0.9..1.1)];
    let mu_freq = rng.random_range(9.0..11.0);

    let mut labels: Vec<u8> = (0..cfg.trials_per_subject).map(|i| (i % 2) as u8).collect();
    labels.shuffle(&mut rng);

    let residual = (1.0 - cfg.erd_depth).sqrt();
    let cue = cfg.cue_onset_s * fs;
    let ramp = (ERD_RAMP_S * fs).max(1.0);
    let envelope = |t: usize| {
        let progress = ((t as f64 - cue) / ramp).clamp(0.0, 1.0);
        1.0 - (1.0 - residual) * progress
    };

    let mut trials = Vec::with_capacity(cfg.trials_per_subject * c * s);
    for &label in &labels {
        let jitter = rng.random_range(0.8..1.2);
        for ch in 0..c {
            let noise = pink_noise(&mut rng, s);
            let mu = if ch == c3 || ch == c4 {
                let side = usize::from(ch == c4);
                // label 1 (right hand) desynchronizes the left hemisphere, C3
                let contralateral = (label == 1) == (ch == c3);
                let amp = cfg.mu_amplitude * gain * hemi[side] * jitter;
                let phase = rng.random_range(0.0..TAU);
                Some((amp, phase, contralateral))
            } else {
                None
            };
            for (t, n) in noise.iter().enumerate() {
                let mut v = cfg.noise_scale * gain * n;
                if let Some((amp, phase, contralateral)) = mu {
                    let env = if contralateral { envelope(t) } else { 1.0 };
                    v += amp * env * (TAU * mu_freq * t as f64 / fs + phase).sin();
                }
                trials.push(v as f32);
            }
        }
    }
    SubjectRecord::new(subject_id(index, cfg.n_subjects), c, s, trials, labels)
        .expect("consistent geometry")
}

/// Deterministic in `cfg.seed`; each subject draws from its own stream.
pub fn synthesize_dataset(cfg: &SynthConfig) -> Result<EpochedDataset> {
    cfg.validate()?;
    let montage = cfg.montage();
    let c3 = montage.iter().position(|m| m == "C3").expect("validated");
    let c4 = montage.iter().position(|m| m == "C4").expect("validated");
    let subjects = (0..cfg.n_subjects)
        .map(|i| synthesize_subject(cfg, i, c3, c4))
        .collect();
    EpochedDataset::new(subjects, montage, cfg.sample_rate)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_the_reference_geometry() {
        let cfg = SynthConfig::default();
        assert_eq!(cfg.n_samples as f32, (3.0 + 1.25 + 3.75) * cfg.sample_rate);
        assert_eq!(cfg.montage().len(), 16);
        assert_eq!(subject_id(0, 55), "S01");
        assert_eq!(subject_id(99, 120), "S100");
    }

    #[test]
    fn montage_without_motor_channels_is_rejected() {
        let cfg = SynthConfig {
            n_channels: 8,
            ..SynthConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(DataError::Config(_))));
    }

    #[test]
    fn pink_noise_is_normalized() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = pink_noise(&mut rng, 4096);
        let var = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
        assert!((var - 1.0).abs() < 1e-9);
    }
}
