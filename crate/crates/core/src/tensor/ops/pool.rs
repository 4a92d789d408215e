use serde::{Deserialize, Serialize};

use super::conv::output_extent;
use crate::tensor::{Real, Result, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolKind {
    Max,
    Average,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolGeometry {
    pub batch_channels: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub window: (usize, usize),
    pub stride: (usize, usize),
    pub out_h: usize,
    pub out_w: usize,
}

impl PoolGeometry {
    pub fn resolve(
        input: [usize; 4],
        window: (usize, usize),
        stride: (usize, usize),
    ) -> Result<Self> {
        let [n, c, in_h, in_w] = input;
        match (
            output_extent(in_h, 0, window.0, stride.0),
            output_extent(in_w, 0, window.1, stride.1),
        ) {
            (Some(out_h), Some(out_w)) => Ok(Self {
                batch_channels: n * c,
                in_h,
                in_w,
                window,
                stride,
                out_h,
                out_w,
            }),
            _ => Err(TensorError::Dimension(format!(
                "pool window {window:?} stride {stride:?} does not fit input {in_h}x{in_w}"
            ))),
        }
    }
}

/// Max pooling. Returns outputs and, per output, the flat input index of the
/// first (lowest-index) maximum in its window.
pub fn max_forward<T: Real>(g: &PoolGeometry, x: &[T]) -> (Vec<T>, Vec<usize>) {
    let out_len = g.batch_channels * g.out_h * g.out_w;
    let mut out = Vec::with_capacity(out_len);
    let mut argmax = Vec::with_capacity(out_len);
    for plane in 0..g.batch_channels {
        let base = plane * g.in_h * g.in_w;
        for oy in 0..g.out_h {
            for ox in 0..g.out_w {
                let mut best_idx = base + oy * g.stride.0 * g.in_w + ox * g.stride.1;
                let mut best = x[best_idx];
                for i in 0..g.window.0 {
                    let row = base + (oy * g.stride.0 + i) * g.in_w + ox * g.stride.1;
                    for (j, &v) in x[row..row + g.window.1].iter().enumerate() {
                        if v > best {
                            best = v;
                            best_idx = row + j;
                        }
                    }
                }
                out.push(best);
                argmax.push(best_idx);
            }
        }
    }
    (out, argmax)
}

pub fn max_backward<T: Real>(input_len: usize, argmax: &[usize], dout: &[T]) -> Vec<T> {
    let mut dx = vec![T::zero(); input_len];
    for (&idx, &d) in argmax.iter().zip(dout) {
        dx[idx] += d;
    }
    dx
}

pub fn avg_forward<T: Real>(g: &PoolGeometry, x: &[T]) -> Vec<T> {
    let scale = T::one() / T::lit((g.window.0 * g.window.1) as f64);
    let mut out = Vec::with_capacity(g.batch_channels * g.out_h * g.out_w);
    for plane in 0..g.batch_channels {
        let base = plane * g.in_h * g.in_w;
        for oy in 0..g.out_h {
            for ox in 0..g.out_w {
                let mut acc = T::zero();
                for i in 0..g.window.0 {
                    let row = base + (oy * g.stride.0 + i) * g.in_w + ox * g.stride.1;
                    for &v in &x[row..row + g.window.1] {
                        acc += v;
                    }
                }
                out.push(acc * scale);
            }
        }
    }
    out
}

pub fn avg_backward<T: Real>(g: &PoolGeometry, dout: &[T]) -> Vec<T> {
    let scale = T::one() / T::lit((g.window.0 * g.window.1) as f64);
    let mut dx = vec![T::zero(); g.batch_channels * g.in_h * g.in_w];
    let mut k = 0;
    for plane in 0..g.batch_channels {
        let base = plane * g.in_h * g.in_w;
        for oy in 0..g.out_h {
            for ox in 0..g.out_w {
                let share = dout[k] * scale;
                k += 1;
                for i in 0..g.window.0 {
                    let row = base + (oy * g.stride.0 + i) * g.in_w + ox * g.stride.1;
                    for d in &mut dx[row..row + g.window.1] {
                        *d += share;
                    }
                }
            }
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn max_ties_route_to_first_index() {
        let g = PoolGeometry::resolve([1, 1, 1, 4], (1, 2), (1, 2)).unwrap();
        let (out, arg) = max_forward(&g, &[2.0f64, 2.0, 5.0, 5.0]);
        assert_eq!(out, vec![2.0, 5.0]);
        assert_eq!(arg, vec![0, 2]);
    }

    #[test]
    fn window_larger_than_input_is_rejected() {
        assert!(PoolGeometry::resolve([1, 1, 1, 2], (1, 3), (1, 1)).is_err());
    }
}
