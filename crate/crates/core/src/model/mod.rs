//! The trainable network: input projection, pre-norm transformer encoder over
//! the feature columns, a mean-pooled classifier head, per-role key encoders
//! and the masked-frame matching head, with hand-written reverse-mode
//! gradients.

mod checkpoint;
mod network;
mod optim;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{FeatureError, Role, DEFAULT_N_MAX};
use crate::tensor::Matrix;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC};
pub use network::{
    accumulate_gradients, backward, forward_classify, forward_ssl, loss_and_gradients, loss_total, ssl_scores, DropoutRng,
    LossBreakdown,
};
pub use optim::{sgd_step, Adam, AdamConfig};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch for {what}: expected {expected}, found {found}")]
    Shape { what: String, expected: String, found: String },
    #[error("matching head needs a masked matrix")]
    MaskNotSet,
    #[error("classification needs an unmasked matrix")]
    UnexpectedMask,
    #[error("expected {expected} candidate vectors, got {found}")]
    CandidateCount { expected: usize, found: usize },
    #[error("alpha {0} is outside [0, 1]")]
    InvalidAlpha(f64),
    #[error("label index {0} is not a class")]
    InvalidLabel(usize),
    #[error("target position {t} out of range for {n}")]
    TargetOutOfRange { t: usize, n: usize },
    #[error("non-finite gradient in tensor {0}")]
    NonFiniteGradient(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;

pub const N_CLASSES: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_tok: usize,
    pub d_factor: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub ffn_ratio: usize,
    pub n_max: usize,
    pub dropout: f64,
    pub layer_norm_eps: f64,
}

impl ModelConfig {
    /// Desk-scale defaults for the given input widths.
    pub fn new(d_tok: usize, d_factor: usize) -> Self {
        Self {
            d_tok,
            d_factor,
            d_model: 128,
            n_layers: 2,
            n_heads: 4,
            ffn_ratio: 4,
            n_max: DEFAULT_N_MAX,
            dropout: 0.1,
            layer_norm_eps: 1e-5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(ModelError::InvalidConfig(m.to_string()));
        if self.d_tok == 0 || self.d_model == 0 || self.n_heads == 0 || self.n_max == 0 || self.ffn_ratio == 0 {
            return bad("dimensions must be positive");
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return bad("d_model must be divisible by n_heads");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must be in [0, 1)");
        }
        if !(self.layer_norm_eps > 0.0) {
            return bad("layer_norm_eps must be positive");
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        3 * self.d_tok + self.d_factor
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn ffn_dim(&self) -> usize {
        self.d_model * self.ffn_ratio
    }
}

/// Affine map `y = x·W + b` with `W` stored `in × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Matrix,
    pub bias: Matrix,
}

impl Linear {
    fn zeros(inp: usize, out: usize) -> Self {
        Self { weight: Matrix::zeros(inp, out), bias: Matrix::zeros(1, out) }
    }

    fn init(inp: usize, out: usize, std: f64, rng: &mut ChaCha8Rng) -> Self {
        Self { weight: normal(inp, out, std, rng), bias: Matrix::zeros(1, out) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gain: Matrix,
    pub bias: Matrix,
}

impl LayerNorm {
    fn zeros(d: usize) -> Self {
        Self { gain: Matrix::zeros(1, d), bias: Matrix::zeros(1, d) }
    }

    fn identity(d: usize) -> Self {
        let mut gain = Matrix::zeros(1, d);
        gain.fill(1.0);
        Self { gain, bias: Matrix::zeros(1, d) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayer {
    pub attn_norm: LayerNorm,
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub ffn_norm: LayerNorm,
    pub ffn_in: Linear,
    pub ffn_out: Linear,
}

/// Every trainable tensor. Gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub input: Linear,
    /// `n_max × d_model` learned position rows.
    pub positions: Matrix,
    pub layers: Vec<EncoderLayer>,
    pub final_norm: LayerNorm,
    pub classifier: Linear,
    pub role_v: Linear,
    pub role_a0: Linear,
    pub role_a1: Linear,
}

fn normal(rows: usize, cols: usize, std: f64, rng: &mut ChaCha8Rng) -> Matrix {
    let dist = Normal::new(0.0, std).expect("positive std");
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| dist.sample(rng)).collect())
}

impl ModelParams {
    pub fn zeros(config: &ModelConfig) -> Self {
        let d = config.d_model;
        Self {
            config: config.clone(),
            input: Linear::zeros(config.input_dim(), d),
            positions: Matrix::zeros(config.n_max, d),
            layers: (0..config.n_layers)
                .map(|_| EncoderLayer {
                    attn_norm: LayerNorm::zeros(d),
                    query: Linear::zeros(d, d),
                    key: Linear::zeros(d, d),
                    value: Linear::zeros(d, d),
                    output: Linear::zeros(d, d),
                    ffn_norm: LayerNorm::zeros(d),
                    ffn_in: Linear::zeros(d, config.ffn_dim()),
                    ffn_out: Linear::zeros(config.ffn_dim(), d),
                })
                .collect(),
            final_norm: LayerNorm::zeros(d),
            classifier: Linear::zeros(d, N_CLASSES),
            role_v: Linear::zeros(config.d_tok, d),
            role_a0: Linear::zeros(config.d_tok, d),
            role_a1: Linear::zeros(config.d_tok, d),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.config)
    }

    /// Seeded initialization. Encoder weights use `1/sqrt(fan_in)`; key
    /// encoders start small enough that initial matching scores are near
    /// uniform.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.d_model;
        let fan = |n: usize| 1.0 / (n as f64).sqrt();
        let input = Linear::init(config.input_dim(), d, fan(config.input_dim()), &mut rng);
        let positions = normal(config.n_max, d, 0.02, &mut rng);
        let layers = (0..config.n_layers)
            .map(|_| EncoderLayer {
                attn_norm: LayerNorm::identity(d),
                query: Linear::init(d, d, fan(d), &mut rng),
                key: Linear::init(d, d, fan(d), &mut rng),
                value: Linear::init(d, d, fan(d), &mut rng),
                output: Linear::init(d, d, fan(d) / (2.0 * config.n_layers as f64).sqrt(), &mut rng),
                ffn_norm: LayerNorm::identity(d),
                ffn_in: Linear::init(d, config.ffn_dim(), fan(d), &mut rng),
                ffn_out: Linear::init(
                    config.ffn_dim(),
                    d,
                    fan(config.ffn_dim()) / (2.0 * config.n_layers as f64).sqrt(),
                    &mut rng,
                ),
            })
            .collect();
        let final_norm = LayerNorm::identity(d);
        let classifier = Linear::init(d, N_CLASSES, fan(d), &mut rng);
        let role_std = fan(config.d_tok) / d as f64;
        let role_v = Linear::init(config.d_tok, d, role_std, &mut rng);
        let role_a0 = Linear::init(config.d_tok, d, role_std, &mut rng);
        let role_a1 = Linear::init(config.d_tok, d, role_std, &mut rng);
        Ok(Self { config: config.clone(), input, positions, layers, final_norm, classifier, role_v, role_a0, role_a1 })
    }

    pub fn role_encoder(&self, role: Role) -> &Linear {
        match role {
            Role::V => &self.role_v,
            Role::A0 => &self.role_a0,
            Role::A1 => &self.role_a1,
        }
    }

    pub(crate) fn role_encoder_mut(&mut self, role: Role) -> &mut Linear {
        match role {
            Role::V => &mut self.role_v,
            Role::A0 => &mut self.role_a0,
            Role::A1 => &mut self.role_a1,
        }
    }

    /// `(name, tensor)` in a fixed order.
    pub fn tensors(&self) -> Vec<(String, &Matrix)> {
        let mut out: Vec<(String, &Matrix)> = Vec::new();
        push_linear(&mut out, "input", &self.input);
        out.push(("positions".into(), &self.positions));
        for (i, l) in self.layers.iter().enumerate() {
            let p = format!("layers.{i}");
            push_norm(&mut out, &format!("{p}.attn_norm"), &l.attn_norm);
            push_linear(&mut out, &format!("{p}.query"), &l.query);
            push_linear(&mut out, &format!("{p}.key"), &l.key);
            push_linear(&mut out, &format!("{p}.value"), &l.value);
            push_linear(&mut out, &format!("{p}.output"), &l.output);
            push_norm(&mut out, &format!("{p}.ffn_norm"), &l.ffn_norm);
            push_linear(&mut out, &format!("{p}.ffn_in"), &l.ffn_in);
            push_linear(&mut out, &format!("{p}.ffn_out"), &l.ffn_out);
        }
        push_norm(&mut out, "final_norm", &self.final_norm);
        push_linear(&mut out, "classifier", &self.classifier);
        push_linear(&mut out, "role_v", &self.role_v);
        push_linear(&mut out, "role_a0", &self.role_a0);
        push_linear(&mut out, "role_a1", &self.role_a1);
        out
    }

    /// Same order as [`ModelParams::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        let mut out: Vec<(String, &mut Matrix)> = Vec::new();
        out.push(("input.weight".into(), &mut self.input.weight));
        out.push(("input.bias".into(), &mut self.input.bias));
        out.push(("positions".into(), &mut self.positions));
        for (i, l) in self.layers.iter_mut().enumerate() {
            let p = format!("layers.{i}");
            out.push((format!("{p}.attn_norm.gain"), &mut l.attn_norm.gain));
            out.push((format!("{p}.attn_norm.bias"), &mut l.attn_norm.bias));
            for (n, lin) in [("query", &mut l.query), ("key", &mut l.key), ("value", &mut l.value), ("output", &mut l.output)] {
                out.push((format!("{p}.{n}.weight"), &mut lin.weight));
                out.push((format!("{p}.{n}.bias"), &mut lin.bias));
            }
            out.push((format!("{p}.ffn_norm.gain"), &mut l.ffn_norm.gain));
            out.push((format!("{p}.ffn_norm.bias"), &mut l.ffn_norm.bias));
            out.push((format!("{p}.ffn_in.weight"), &mut l.ffn_in.weight));
            out.push((format!("{p}.ffn_in.bias"), &mut l.ffn_in.bias));
            out.push((format!("{p}.ffn_out.weight"), &mut l.ffn_out.weight));
            out.push((format!("{p}.ffn_out.bias"), &mut l.ffn_out.bias));
        }
        out.push(("final_norm.gain".into(), &mut self.final_norm.gain));
        out.push(("final_norm.bias".into(), &mut self.final_norm.bias));
        for (n, lin) in [
            ("classifier", &mut self.classifier),
            ("role_v", &mut self.role_v),
            ("role_a0", &mut self.role_a0),
            ("role_a1", &mut self.role_a1),
        ] {
            out.push((format!("{n}.weight"), &mut lin.weight));
            out.push((format!("{n}.bias"), &mut lin.bias));
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn add_assign(&mut self, other: &ModelParams) {
        let theirs = other.tensors();
        for ((_, mine), (_, t)) in self.tensors_mut().into_iter().zip(theirs) {
            mine.add_assign(t);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for (_, t) in self.tensors_mut() {
            t.scale(s);
        }
    }

    /// First tensor holding a non-finite value.
    pub fn first_non_finite(&self) -> Option<String> {
        self.tensors().into_iter().find(|(_, t)| !t.is_finite()).map(|(n, _)| n)
    }
}

fn push_linear<'a>(out: &mut Vec<(String, &'a Matrix)>, name: &str, l: &'a Linear) {
    out.push((format!("{name}.weight"), &l.weight));
    out.push((format!("{name}.bias"), &l.bias));
}

fn push_norm<'a>(out: &mut Vec<(String, &'a Matrix)>, name: &str, l: &'a LayerNorm) {
    out.push((format!("{name}.gain"), &l.gain));
    out.push((format!("{name}.bias"), &l.bias));
}

/// Stored dims of a named tensor: biases and gains are vectors.
pub(crate) fn stored_dims(name: &str, m: &Matrix) -> Vec<usize> {
    if name.ends_with(".bias") || name.ends_with(".gain") {
        vec![m.cols()]
    } else {
        vec![m.rows(), m.cols()]
    }
}
