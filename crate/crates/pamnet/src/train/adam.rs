//! Adam optimizer with bias correction.

use serde::{Deserialize, Serialize};

use crate::error::{PamError, Result};
use crate::tape::Parameter;
use crate::tensor::{Real, Tensor};

/// Optimizer and schedule settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_adam: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps_adam: 1e-8,
            max_epochs: 30,
            patience: 5,
            batch_size: 32,
        }
    }
}

impl OptimConfig {
    /// A zero learning rate is accepted: it turns training into a pure
    /// evaluation loop, which is useful for determinism checks.
    pub fn validate(&self) -> Result<()> {
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(PamError::Config(format!(
                "learning rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        for (name, beta) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !beta.is_finite() || !(0.0..1.0).contains(&beta) {
                return Err(PamError::Config(format!(
                    "{name} must lie in [0, 1), got {beta}"
                )));
            }
        }
        if !self.eps_adam.is_finite() || self.eps_adam <= 0.0 {
            return Err(PamError::Config(format!(
                "adam epsilon must be positive, got {}",
                self.eps_adam
            )));
        }
        if self.max_epochs == 0 {
            return Err(PamError::Config("max_epochs must be at least 1".into()));
        }
        if self.patience == 0 {
            return Err(PamError::Config("patience must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(PamError::Config("batch_size must be at least 1".into()));
        }
        Ok(())
    }
}

/// First and second moment estimates, one pair per parameter, plus the
/// shared step counter.
#[derive(Clone)]
pub struct AdamState<T> {
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
    step: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(params: &[Parameter<T>]) -> Self {
        let m = params
            .iter()
            .map(|p| Tensor::zeros(p.value.shape().to_vec()))
            .collect();
        let v = params
            .iter()
            .map(|p| Tensor::zeros(p.value.shape().to_vec()))
            .collect();
        Self { m, v, step: 0 }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// Applies one Adam update from the gradients currently stored on the
/// parameters, then zeroes those gradients. Frozen parameters are left
/// untouched. A non-finite updated value aborts with a numeric error so
/// a diverged run fails loudly instead of training on garbage.
pub fn adam_step<T: Real>(
    params: &mut [Parameter<T>],
    state: &mut AdamState<T>,
    cfg: &OptimConfig,
) -> Result<()> {
    cfg.validate()?;
    if params.len() != state.m.len() {
        return Err(PamError::Dimension {
            op: "adam_step",
            left: vec![params.len()],
            right: vec![state.m.len()],
        });
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let (lr, b1, b2, eps) = (cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps_adam);

    for (i, p) in params.iter_mut().enumerate() {
        if p.frozen {
            continue;
        }
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        let grads = p.grad.data();
        let values = p.value.data_mut();
        for e in 0..values.len() {
            let g = grads[e].to_f64();
            let me = b1 * m[e].to_f64() + (1.0 - b1) * g;
            let ve = b2 * v[e].to_f64() + (1.0 - b2) * g * g;
            m[e] = T::from_f64(me);
            v[e] = T::from_f64(ve);
            let m_hat = me / bc1;
            let v_hat = ve / bc2;
            let next = values[e].to_f64() - lr * m_hat / (v_hat.sqrt() + eps);
            values[e] = T::from_f64(next);
        }
        p.value
            .check_finite(&format!("adam update for `{}`", p.name))?;
        p.zero_grad();
    }
    Ok(())
}
