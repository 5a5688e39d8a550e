//! Adam with bias correction, plus global-norm gradient clipping.

use alloc::format;
use alloc::vec::Vec;

use crate::math::sqrt;
use crate::{Error, Result, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.epsilon > 0.0
            && self.beta1 > 0.0
            && self.beta1 < 1.0
            && self.beta2 > 0.0
            && self.beta2 < 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid Adam settings {self:?}")))
        }
    }
}

/// First and second moment estimates plus the number of steps taken.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub first: Vec<Tensor>,
    pub second: Vec<Tensor>,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &[Tensor]) -> Self {
        let zeros = || params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        Self { first: zeros(), second: zeros(), step: 0 }
    }
}

fn check_shapes(params: &[Tensor], other: &[Tensor], what: &str) -> Result<()> {
    if params.len() != other.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} parameter tensors but {} {what}",
            params.len(),
            other.len()
        )));
    }
    for (i, (p, o)) in params.iter().zip(other).enumerate() {
        if p.shape() != o.shape() {
            return Err(Error::ShapeMismatch(format!(
                "tensor {i}: parameter {:?} vs {what} {:?}",
                p.shape(),
                o.shape()
            )));
        }
    }
    Ok(())
}

/// One bias-corrected Adam update; increments `state.step` first, so the
/// first call uses `t = 1`.
pub fn adam_step(params: &mut [Tensor], grads: &[Tensor], state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    cfg.validate()?;
    check_shapes(params, grads, "gradients")?;
    check_shapes(params, &state.first, "first moments")?;
    check_shapes(params, &state.second, "second moments")?;
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - crate::math::powi(cfg.beta1, t);
    let bc2 = 1.0 - crate::math::powi(cfg.beta2, t);
    for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut state.first).zip(&mut state.second) {
        for (((p, &g), m), v) in p.data_mut().iter_mut().zip(g.data()).zip(m.data_mut()).zip(v.data_mut()) {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= cfg.learning_rate * m_hat / (sqrt(v_hat) + cfg.epsilon);
        }
    }
    Ok(())
}

/// Euclidean norm over every entry of every tensor.
pub fn global_norm(grads: &[Tensor]) -> f64 {
    sqrt(grads.iter().map(Tensor::sum_squares).sum())
}

/// Rescales `grads` so their global norm is at most `max_norm`. Returns the
/// norm before clipping.
pub fn clip_global_norm(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            g.data_mut().iter_mut().for_each(|v| *v *= scale);
        }
    }
    norm
}
