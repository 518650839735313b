use serde::{Deserialize, Serialize};

use super::OptimError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled weight decay; zero gives plain Adam.
    pub weight_decay: f64,
    /// Gradients are rescaled to at most this L2 norm; `None` disables
    /// clipping.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clip_norm: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
            clip_norm: None,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<(), OptimError> {
        if !(self.lr > 0.0) {
            return Err(OptimError::InvalidConfig("lr must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(OptimError::InvalidConfig("betas must lie in [0, 1)"));
        }
        if !(self.eps > 0.0) {
            return Err(OptimError::InvalidConfig("eps must be positive"));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(OptimError::InvalidConfig("weight_decay must be non-negative"));
        }
        if self.clip_norm.is_some_and(|c| !(c > 0.0)) {
            return Err(OptimError::InvalidConfig("clip_norm must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step_count: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, dim: usize) -> Result<Self, OptimError> {
        config.validate()?;
        Ok(Self {
            config,
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            step_count: 0,
        })
    }

    /// Update `params` in place. Returns the gradient norm before clipping.
    ///
    /// `names` label parameters in error messages; it may be empty.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], names: &[String]) -> Result<f64, OptimError> {
        let dim = self.m.len();
        for got in [params.len(), grad.len()] {
            if got != dim {
                return Err(OptimError::Dimension { expected: dim, got });
            }
        }
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            let name = names.get(i).cloned().unwrap_or_else(|| format!("p{i}"));
            return Err(OptimError::NonFiniteGradient { name, value: grad[i] });
        }
        let c = self.config;
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        let scale = match c.clip_norm {
            Some(clip) if norm > clip => clip / norm,
            _ => 1.0,
        };

        self.step_count += 1;
        let t = self.step_count as i32;
        let bias1 = 1.0 - c.beta1.powi(t);
        let bias2 = 1.0 - c.beta2.powi(t);
        for i in 0..dim {
            let g = grad[i] * scale;
            self.m[i] = c.beta1 * self.m[i] + (1.0 - c.beta1) * g;
            self.v[i] = c.beta2 * self.v[i] + (1.0 - c.beta2) * g * g;
            let m_hat = self.m[i] / bias1;
            let v_hat = self.v[i] / bias2;
            if c.weight_decay > 0.0 {
                params[i] -= c.lr * c.weight_decay * params[i];
            }
            params[i] -= c.lr * m_hat / (v_hat.sqrt() + c.eps);
        }
        Ok(norm)
    }
}

/// Rescale `grad` to at most `max_norm`; exposed for callers that clip
/// before accumulating.
pub fn clip_to_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
    norm
}
