use serde::{Deserialize, Serialize};

use super::{ModelError, ModelParams, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled weight decay, applied as `θ ← θ − lr·λ·θ`.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.0 }
    }
}

/// Bias-corrected Adam with per-tensor moment buffers.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    steps: u64,
    m: ModelParams,
    v: ModelParams,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &ModelParams) -> Self {
        Self { config, steps: 0, m: params.zeros_like(), v: params.zeros_like() }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Fails without touching `params` if any gradient is non-finite.
    pub fn step(&mut self, params: &mut ModelParams, grads: &ModelParams) -> Result<()> {
        if let Some(name) = grads.first_non_finite() {
            return Err(ModelError::NonFiniteGradient(name));
        }
        self.steps += 1;
        let c = &self.config;
        let bc1 = 1.0 - c.beta1.powi(self.steps as i32);
        let bc2 = 1.0 - c.beta2.powi(self.steps as i32);
        let g = grads.tensors();
        let tensors = params.tensors_mut().into_iter().zip(self.m.tensors_mut()).zip(self.v.tensors_mut());
        for ((((_, p), (_, m)), (_, v)), (_, g)) in tensors.zip(g.iter()) {
            let (p, m, v) = (p.as_mut_slice(), m.as_mut_slice(), v.as_mut_slice());
            for i in 0..p.len() {
                let gi = g.as_slice()[i];
                m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * gi;
                v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * gi * gi;
                let update = (m[i] / bc1) / ((v[i] / bc2).sqrt() + c.eps);
                p[i] -= c.lr * (update + c.weight_decay * p[i]);
            }
        }
        Ok(())
    }
}

/// Plain gradient descent.
pub fn sgd_step(params: &mut ModelParams, grads: &ModelParams, lr: f64) -> Result<()> {
    if let Some(name) = grads.first_non_finite() {
        return Err(ModelError::NonFiniteGradient(name));
    }
    for ((_, p), (_, g)) in params.tensors_mut().into_iter().zip(grads.tensors()) {
        for (x, d) in p.as_mut_slice().iter_mut().zip(g.as_slice()) {
            *x -= lr * d;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    fn params() -> ModelParams {
        let cfg = ModelConfig { d_model: 4, n_layers: 1, n_heads: 1, n_max: 2, ..ModelConfig::new(2, 1) };
        ModelParams::init(&cfg, 3).unwrap()
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = params();
        let before = p.clone();
        let mut g = p.zeros_like();
        g.classifier.bias.as_mut_slice()[0] = 0.5;
        g.classifier.bias.as_mut_slice()[1] = -2.0;
        let mut adam = Adam::new(AdamConfig { lr: 0.01, ..AdamConfig::default() }, &p);
        adam.step(&mut p, &g).unwrap();
        let b = p.classifier.bias.as_slice();
        let b0 = before.classifier.bias.as_slice();
        assert!((b[0] - (b0[0] - 0.01)).abs() < 1e-9);
        assert!((b[1] - (b0[1] + 0.01)).abs() < 1e-9);
        assert_eq!(b[2], b0[2]);
        assert_eq!(p.input, before.input);
        assert_eq!(adam.steps(), 1);
    }

    #[test]
    fn non_finite_gradient_is_rejected_untouched() {
        let mut p = params();
        let before = p.clone();
        let mut g = p.zeros_like();
        g.input.bias.as_mut_slice()[0] = 1.0;
        g.layers[0].ffn_in.weight.as_mut_slice()[3] = f64::NAN;
        let mut adam = Adam::new(AdamConfig::default(), &p);
        let err = adam.step(&mut p, &g).unwrap_err();
        assert!(matches!(&err, ModelError::NonFiniteGradient(n) if n == "layers.0.ffn_in.weight"), "{err}");
        assert_eq!(p, before);
        assert_eq!(adam.steps(), 0);
        assert!(sgd_step(&mut p, &g, 0.1).is_err());
        assert_eq!(p, before);
    }

    #[test]
    fn weight_decay_shrinks_idle_weights() {
        let mut p = params();
        let w0 = p.input.weight.as_slice()[0];
        let g = p.zeros_like();
        let mut adam = Adam::new(AdamConfig { lr: 0.1, weight_decay: 0.5, ..AdamConfig::default() }, &p);
        adam.step(&mut p, &g).unwrap();
        assert!((p.input.weight.as_slice()[0] - w0 * 0.95).abs() < 1e-15);
    }
}
