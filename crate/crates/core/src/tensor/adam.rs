//! Bias-corrected Adam.

use super::{Element, Network, Parameter, TensorError, TensorResult};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn new(learning_rate: f64) -> Self {
        AdamConfig {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn with_betas(mut self, beta1: f64, beta2: f64) -> Self {
        self.beta1 = beta1;
        self.beta2 = beta2;
        self
    }

    pub fn validate(&self) -> TensorResult<()> {
        if self.learning_rate <= 0.0 || self.epsilon <= 0.0 {
            return Err(TensorError::InvalidArgument {
                op: "adam",
                message: format!(
                    "learning_rate and epsilon must be positive, got {} / {}",
                    self.learning_rate, self.epsilon
                ),
            });
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(TensorError::InvalidArgument {
                op: "adam",
                message: format!("betas must lie in [0,1), got {} / {}", self.beta1, self.beta2),
            });
        }
        Ok(())
    }
}

/// One Adam update over a parameter set. Checks every gradient for
/// non-finite values *before* touching any parameter, then updates values
/// and zeroes the gradients.
pub fn adam_step_params<E: Element>(
    params: &mut [&mut Parameter<E>],
    cfg: &AdamConfig,
) -> TensorResult<()> {
    cfg.validate()?;
    for p in params.iter() {
        if let Some(ix) = p.grad.iter().position(|g| !g.is_finite()) {
            return Err(TensorError::NonFiniteGradient {
                parameter: p.name.clone(),
                index: ix,
            });
        }
    }
    let b1 = E::of_f64(cfg.beta1);
    let b2 = E::of_f64(cfg.beta2);
    let lr = E::of_f64(cfg.learning_rate);
    let eps = E::of_f64(cfg.epsilon);
    for p in params.iter_mut() {
        p.step_count += 1;
        let t = p.step_count as i32;
        let bc1 = E::of_f64(1.0 - cfg.beta1.powi(t));
        let bc2 = E::of_f64(1.0 - cfg.beta2.powi(t));
        for i in 0..p.value.len() {
            let g = p.grad[i];
            p.adam_m[i] = b1 * p.adam_m[i] + (E::one() - b1) * g;
            p.adam_v[i] = b2 * p.adam_v[i] + (E::one() - b2) * g * g;
            let m_hat = p.adam_m[i] / bc1;
            let v_hat = p.adam_v[i] / bc2;
            p.value[i] = p.value[i] - lr * m_hat / (v_hat.sqrt() + eps);
            p.grad[i] = E::zero();
        }
    }
    Ok(())
}

impl<E: Element> Network<E> {
    /// Adam-update every parameter in the network.
    pub fn adam_step(&mut self, cfg: &AdamConfig) -> TensorResult<()> {
        let mut params = self.parameters_mut();
        adam_step_params(&mut params, cfg)
    }
}
