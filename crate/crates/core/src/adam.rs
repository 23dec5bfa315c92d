use crate::error::{Error, Result};
use crate::nn::{GradientVector, ParameterVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    first: Vec<f64>,
    second: Vec<f64>,
    step: u64,
}

impl AdamState {
    pub fn new(len: usize, config: AdamConfig) -> Self {
        Self {
            config,
            first: vec![0.0; len],
            second: vec![0.0; len],
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn reset(&mut self) {
        self.first.fill(0.0);
        self.second.fill(0.0);
        self.step = 0;
    }
}

/// One bias-corrected Adam update in place. Returns the displacement
/// `new θ_k − old θ_k` of every parameter.
pub fn adam_step(
    params: &mut ParameterVector,
    grad: &GradientVector,
    adam: &mut AdamState,
) -> Result<GradientVector> {
    if grad.len() != params.len() || adam.first.len() != params.len() {
        return Err(Error::Shape(format!(
            "adam: {} params, {} grads, {} moments",
            params.len(),
            grad.len(),
            adam.first.len()
        )));
    }
    if let Some(k) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!("gradient entry {k}")));
    }
    let AdamConfig {
        lr,
        beta1,
        beta2,
        eps,
    } = adam.config;
    adam.step += 1;
    let t = adam.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    let mut delta = GradientVector::zeros(params.len());
    for k in 0..params.len() {
        let g = grad[k];
        let m = beta1 * adam.first[k] + (1.0 - beta1) * g;
        let v = beta2 * adam.second[k] + (1.0 - beta2) * g * g;
        adam.first[k] = m;
        adam.second[k] = v;
        let old = params[k];
        params[k] = old - lr * (m / c1) / ((v / c2).sqrt() + eps);
        delta[k] = params[k] - old;
    }
    Ok(delta)
}
