//! AdamW with decoupled weight decay.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

impl AdamWConfig {
    pub fn with_lr(self, lr: f64) -> Self {
        AdamWConfig { lr, ..self }
    }
}

/// Moment estimates for one parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamWState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step_count: u64,
    pub config: AdamWConfig,
}

impl AdamWState {
    pub fn new(len: usize, config: AdamWConfig) -> Self {
        AdamWState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step_count: 0,
            config,
        }
    }
}

/// Applies one AdamW step to `params` in place.
///
/// Non-finite gradients are rejected before any state is touched.
pub fn adamw_update(params: &mut Tensor, grads: &[f64], state: &mut AdamWState) -> Result<()> {
    adamw_update_slice(params.data_mut(), grads, state)
}

pub(crate) fn adamw_update_slice(params: &mut [f64], grads: &[f64], state: &mut AdamWState) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::shape("adamw_update", &[params.len()], &[grads.len(), state.m.len()]));
    }
    if let Some(index) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient { index });
    }
    let AdamWConfig {
        lr,
        beta1,
        beta2,
        eps,
        weight_decay,
    } = state.config;
    state.step_count += 1;
    let t = state.step_count as i32;
    let bc1 = 1.0 - beta1.powi(t);
    let bc2 = 1.0 - beta2.powi(t);
    for (((p, &g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        if lr == 0.0 {
            continue;
        }
        if weight_decay != 0.0 {
            *p -= lr * weight_decay * *p;
        }
        let m_hat = *m / bc1;
        let denom = (*v / bc2).sqrt() + eps;
        if m_hat != 0.0 {
            *p -= lr * m_hat / denom;
        }
    }
    Ok(())
}
