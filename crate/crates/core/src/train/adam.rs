use crate::model::Param;
use crate::tensor::{Real, Tensor};

use super::{Result, TrainError};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// First and second moments, shaped like the parameters they track.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
    step: i32,
}

impl<T: Real> AdamState<T> {
    pub fn new(params: &[Param<T>]) -> Self {
        let zeros = || {
            params
                .iter()
                .map(|p| Tensor::zeros(p.value.shape()))
                .collect()
        };
        Self {
            m: zeros(),
            v: zeros(),
            step: 0,
        }
    }

    pub fn steps_taken(&self) -> i32 {
        self.step
    }
}

/// One bias-corrected Adam update followed by max-norm projection of every
/// capped parameter. Nothing is modified when a gradient is non-finite.
pub fn adam_step<T: Real>(
    params: &mut [Param<T>],
    grads: &[Tensor<T>],
    state: &mut AdamState<T>,
    lr: f64,
) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(TrainError::Config(format!(
            "{} parameters, {} gradients, {} moment slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for ((p, g), m) in params.iter().zip(grads).zip(&state.m) {
        if g.shape() != p.value.shape() || m.shape() != p.value.shape() {
            return Err(TrainError::Config(format!(
                "gradient of {} has shape {:?}",
                p.name,
                g.shape()
            )));
        }
        if !g.is_finite() {
            return Err(TrainError::NonFinite {
                what: format!("gradient of {}", p.name),
                epoch: 0,
                batch: 0,
            });
        }
    }
    state.step += 1;
    let c1 = 1.0 - ADAM_BETA1.powi(state.step);
    let c2 = 1.0 - ADAM_BETA2.powi(state.step);
    let (b1, b2) = (T::lit(ADAM_BETA1), T::lit(ADAM_BETA2));
    let (one, eps) = (T::one(), T::lit(ADAM_EPS));
    // lr·m̂/(√v̂ + ε) with m̂ = m/c1, v̂ = v/c2
    let (step_size, c2_sqrt) = (T::lit(lr / c1), T::lit(c2.sqrt()));
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for (((w, &gi), mi), vi) in p
            .value
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.iter_mut())
            .zip(v.iter_mut())
        {
            *mi = b1 * *mi + (one - b1) * gi;
            *vi = b2 * *vi + (one - b2) * gi * gi;
            *w -= step_size * *mi / (vi.sqrt() / c2_sqrt + eps);
        }
        p.constrain();
    }
    Ok(())
}
