//! Batch normalization over axis 1.
//!
//! Statistics are taken per channel over the batch axis and every trailing
//! axis, so a `[N, C, H, W]` input normalizes each of its `C` feature maps and
//! a `[N, F]` input each of its `F` features.

use crate::tensor::Real;

/// Per-channel running mean and (biased) variance used in inference mode.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

impl<T: Real> RunningStats<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            mean: vec![T::zero(); channels],
            var: vec![T::one(); channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    /// `running = momentum · running + (1 − momentum) · batch`.
    pub fn updated(&self, batch_mean: &[T], batch_var: &[T], momentum: T) -> Self {
        let blend = |old: &[T], new: &[T]| -> Vec<T> {
            old.iter()
                .zip(new)
                .map(|(&o, &b)| momentum * o + (T::one() - momentum) * b)
                .collect()
        };
        Self {
            mean: blend(&self.mean, batch_mean),
            var: blend(&self.var, batch_var),
        }
    }
}

/// Layout of a normalized tensor: `outer` batch entries, `channels`, and
/// `inner` trailing elements per channel.
#[derive(Debug, Clone, Copy)]
pub struct NormLayout {
    pub outer: usize,
    pub channels: usize,
    pub inner: usize,
}

impl NormLayout {
    fn count(&self) -> usize {
        self.outer * self.inner
    }

    fn for_each_channel_slice(&self, c: usize, mut f: impl FnMut(std::ops::Range<usize>)) {
        for n in 0..self.outer {
            let start = (n * self.channels + c) * self.inner;
            f(start..start + self.inner);
        }
    }
}

pub struct NormForward<T> {
    pub out: Vec<T>,
    pub xhat: Vec<T>,
    pub inv_std: Vec<T>,
    pub batch_mean: Vec<T>,
    pub batch_var: Vec<T>,
}

/// Normalizes with batch statistics (`stats == None`) or the given running
/// statistics.
pub fn forward<T: Real>(
    layout: NormLayout,
    x: &[T],
    gamma: &[T],
    beta: &[T],
    stats: Option<&RunningStats<T>>,
    eps: T,
) -> NormForward<T> {
    let m = T::lit(layout.count() as f64);
    let mut batch_mean = vec![T::zero(); layout.channels];
    let mut batch_var = vec![T::zero(); layout.channels];
    let mut inv_std = vec![T::zero(); layout.channels];
    let mut xhat = vec![T::zero(); x.len()];
    let mut out = vec![T::zero(); x.len()];
    for c in 0..layout.channels {
        let (mean, var) = match stats {
            Some(s) => (s.mean[c], s.var[c]),
            None => {
                let mut sum = T::zero();
                layout.for_each_channel_slice(c, |r| sum += x[r].iter().copied().sum::<T>());
                let mean = sum / m;
                let mut sq = T::zero();
                layout.for_each_channel_slice(c, |r| {
                    sq += x[r].iter().map(|&v| (v - mean) * (v - mean)).sum::<T>()
                });
                (mean, sq / m)
            }
        };
        batch_mean[c] = mean;
        batch_var[c] = var;
        let is = T::one() / (var + eps).sqrt();
        inv_std[c] = is;
        layout.for_each_channel_slice(c, |r| {
            for i in r {
                let h = (x[i] - mean) * is;
                xhat[i] = h;
                out[i] = gamma[c] * h + beta[c];
            }
        });
    }
    NormForward {
        out,
        xhat,
        inv_std,
        batch_mean,
        batch_var,
    }
}

pub struct NormBackward<T> {
    pub dx: Vec<T>,
    pub dgamma: Vec<T>,
    pub dbeta: Vec<T>,
}

/// `batch_stats` selects the train-mode adjoint, where mean and variance
/// depend on the input.
pub fn backward<T: Real>(
    layout: NormLayout,
    dy: &[T],
    xhat: &[T],
    inv_std: &[T],
    gamma: &[T],
    batch_stats: bool,
) -> NormBackward<T> {
    let m = T::lit(layout.count() as f64);
    let mut dx = vec![T::zero(); dy.len()];
    let mut dgamma = vec![T::zero(); layout.channels];
    let mut dbeta = vec![T::zero(); layout.channels];
    for c in 0..layout.channels {
        let (mut sb, mut sg) = (T::zero(), T::zero());
        layout.for_each_channel_slice(c, |r| {
            for i in r {
                sb += dy[i];
                sg += dy[i] * xhat[i];
            }
        });
        dbeta[c] = sb;
        dgamma[c] = sg;
        let scale = gamma[c] * inv_std[c];
        layout.for_each_channel_slice(c, |r| {
            for i in r {
                dx[i] = if batch_stats {
                    scale * (dy[i] - sb / m - xhat[i] * sg / m)
                } else {
                    scale * dy[i]
                };
            }
        });
    }
    NormBackward { dx, dgamma, dbeta }
}
