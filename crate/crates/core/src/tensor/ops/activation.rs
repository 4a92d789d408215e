use serde::{Deserialize, Serialize};

use crate::tensor::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationKind {
    /// `x` for `x ≥ 0`, `e^x − 1` otherwise (α = 1).
    Elu,
    Relu,
    Linear,
}

impl ActivationKind {
    #[inline]
    pub fn apply<T: Real>(self, x: T) -> T {
        match self {
            ActivationKind::Elu => {
                if x >= T::zero() {
                    x
                } else {
                    x.exp_m1()
                }
            }
            ActivationKind::Relu => x.max(T::zero()),
            ActivationKind::Linear => x,
        }
    }

    /// Derivative at `x`; the kink of relu takes the left slope.
    #[inline]
    pub fn derivative<T: Real>(self, x: T) -> T {
        match self {
            ActivationKind::Elu => {
                if x >= T::zero() {
                    T::one()
                } else {
                    x.exp()
                }
            }
            ActivationKind::Relu => {
                if x > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            ActivationKind::Linear => T::one(),
        }
    }
}

/// Softmax over `axis` of a tensor viewed as `[outer, len, inner]`.
pub fn softmax_forward<T: Real>(x: &[T], outer: usize, len: usize, inner: usize) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    for o in 0..outer {
        for i in 0..inner {
            let idx = |k: usize| (o * len + k) * inner + i;
            let max = (0..len).map(|k| x[idx(k)]).fold(T::neg_infinity(), T::max);
            let mut sum = T::zero();
            for k in 0..len {
                let e = (x[idx(k)] - max).exp();
                out[idx(k)] = e;
                sum += e;
            }
            for k in 0..len {
                out[idx(k)] /= sum;
            }
        }
    }
    out
}

pub fn softmax_backward<T: Real>(
    y: &[T],
    dy: &[T],
    outer: usize,
    len: usize,
    inner: usize,
) -> Vec<T> {
    let mut dx = vec![T::zero(); y.len()];
    for o in 0..outer {
        for i in 0..inner {
            let idx = |k: usize| (o * len + k) * inner + i;
            let dot: T = (0..len).map(|k| y[idx(k)] * dy[idx(k)]).sum();
            for k in 0..len {
                dx[idx(k)] = y[idx(k)] * (dy[idx(k)] - dot);
            }
        }
    }
    dx
}
