use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Param, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Coupled L2: `weight_decay * w` is added to the gradient.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 1e-3,
        }
    }
}

/// Optimizer moments, one pair per parameter tensor in visiting order.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step_count: u64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Self {
        AdamState {
            config,
            step_count: 0,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
        }
    }
}

/// One bias-corrected Adam update of every parameter from its `grad`.
pub fn adam_step<T: Scalar>(params: &mut [&mut Param<T>], state: &mut AdamState) -> Result<()> {
    if state.first_moment.is_empty() {
        state.first_moment = params.iter().map(|p| vec![0.0; p.len()]).collect();
        state.second_moment = state.first_moment.clone();
    }
    if state.first_moment.len() != params.len()
        || state.first_moment.iter().zip(params.iter()).any(|(m, p)| m.len() != p.len())
    {
        return Err(Error::Dimension("optimizer moments do not match parameters".into()));
    }
    state.step_count += 1;
    let AdamConfig {
        learning_rate: lr,
        beta1: b1,
        beta2: b2,
        epsilon: eps,
        weight_decay: wd,
    } = state.config;
    let t = state.step_count as i32;
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for ((p, m), v) in params
        .iter_mut()
        .zip(state.first_moment.iter_mut())
        .zip(state.second_moment.iter_mut())
    {
        for i in 0..p.value.len() {
            let w = p.value[i].as_f64();
            let g = p.grad[i].as_f64() + wd * w;
            m[i] = b1 * m[i] + (1.0 - b1) * g;
            v[i] = b2 * v[i] + (1.0 - b2) * g * g;
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p.value[i] = T::of(w - lr * m_hat / (v_hat.sqrt() + eps));
        }
    }
    Ok(())
}

/// Step decay: `base * factor^floor(epoch / step_size)`, epochs from 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLr {
    pub base: f64,
    pub step_size: usize,
    pub factor: f64,
}

impl StepLr {
    pub fn rate(&self, epoch: usize) -> f64 {
        self.base * self.factor.powi((epoch / self.step_size.max(1)) as i32)
    }
}
