//! Semantic-role pooled features.
//!
//! Each complete SRL frame contributes one feature column
//! `[e_V; e_A0; e_A1; F]`, where `e_*` is the mean token embedding over the
//! role's tokens and `F` is the event's scaled factor vector. Columns are
//! stored as rows of a `Matrix` (`N × (3·d_tok + d_F)`).

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event_data::{NewsEvent, TokenizedSentence};
use crate::tensor::Matrix;

/// Default maximum number of frame columns per event.
pub const DEFAULT_N_MAX: usize = 32;

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("cannot pool an empty token index set")]
    EmptyIndexSet,
    #[error("token index {index} out of range for {len} tokens")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("sentence has no embeddings attached")]
    MissingEmbeddings,
    #[error("event {0} has no complete SRL frame")]
    NoCompleteFrames(String),
    #[error("frame index {t} out of range for {n} columns")]
    FrameOutOfRange { t: usize, n: usize },
    #[error("matrix is already masked")]
    AlreadyMasked,
    #[error("cannot sample a mask from zero frames")]
    NoFrames,
    #[error("factor vector has {found} entries, expected {expected}")]
    FactorWidth { expected: usize, found: usize },
    #[error("embedding width {found} differs from {expected}")]
    EmbeddingWidth { expected: usize, found: usize },
    #[error("invalid mask role distribution: {0}")]
    InvalidRoleWeights(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    V,
    A0,
    A1,
}

impl Role {
    pub const ALL: [Role; 3] = [Role::V, Role::A0, Role::A1];

    /// Segment position within a column.
    pub fn slot(self) -> usize {
        match self {
            Role::V => 0,
            Role::A0 => 1,
            Role::A1 => 2,
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::V => "V",
            Role::A0 => "A0",
            Role::A1 => "A1",
        })
    }
}

/// Pooled role vectors of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct RoleFeatures {
    pub v: Vec<f64>,
    pub a0: Vec<f64>,
    pub a1: Vec<f64>,
}

/// The masked element of `E′`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameMask {
    pub frame: usize,
    pub role: Role,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SrlpMatrix {
    d_tok: usize,
    d_factor: usize,
    columns: Matrix,
    mask: Option<FrameMask>,
}

impl SrlpMatrix {
    /// Builds from explicit role features and a shared factor vector.
    pub fn from_features(frames: &[RoleFeatures], factors: &[f64]) -> Result<Self, FeatureError> {
        let first = frames.first().ok_or(FeatureError::NoFrames)?;
        let d_tok = first.v.len();
        let width = 3 * d_tok + factors.len();
        let mut columns = Matrix::zeros(frames.len(), width);
        for (j, f) in frames.iter().enumerate() {
            for part in [&f.v, &f.a0, &f.a1] {
                if part.len() != d_tok {
                    return Err(FeatureError::EmbeddingWidth { expected: d_tok, found: part.len() });
                }
            }
            let row = columns.row_mut(j);
            row[..d_tok].copy_from_slice(&f.v);
            row[d_tok..2 * d_tok].copy_from_slice(&f.a0);
            row[2 * d_tok..3 * d_tok].copy_from_slice(&f.a1);
            row[3 * d_tok..].copy_from_slice(factors);
        }
        Ok(Self { d_tok, d_factor: factors.len(), columns, mask: None })
    }

    pub fn n_frames(&self) -> usize {
        self.columns.rows()
    }

    pub fn d_tok(&self) -> usize {
        self.d_tok
    }

    pub fn d_factor(&self) -> usize {
        self.d_factor
    }

    pub fn column_len(&self) -> usize {
        self.columns.cols()
    }

    /// `N × column_len`; row `j` is column `j` of E.
    pub fn columns(&self) -> &Matrix {
        &self.columns
    }

    pub fn column(&self, j: usize) -> &[f64] {
        self.columns.row(j)
    }

    pub fn mask(&self) -> Option<FrameMask> {
        self.mask
    }

    pub fn role_segment(&self, j: usize, role: Role) -> &[f64] {
        let start = role.slot() * self.d_tok;
        &self.columns.row(j)[start..start + self.d_tok]
    }

    pub fn factor_segment(&self, j: usize) -> &[f64] {
        &self.columns.row(j)[3 * self.d_tok..]
    }

    /// The `N` role vectors of type `role`, one per column.
    pub fn role_vectors(&self, role: Role) -> Vec<Vec<f64>> {
        (0..self.n_frames()).map(|j| self.role_segment(j, role).to_vec()).collect()
    }

    /// Debug dump: one line per column.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let mut header = vec!["frame".to_string()];
        for role in Role::ALL {
            header.extend((0..self.d_tok).map(|i| format!("{role}_{i}")));
        }
        header.extend((0..self.d_factor).map(|i| format!("F_{i}")));
        writeln!(w, "{}", header.join(","))?;
        for j in 0..self.n_frames() {
            let vals: Vec<String> = self.column(j).iter().map(|v| v.to_string()).collect();
            writeln!(w, "{j},{}", vals.join(","))?;
        }
        Ok(())
    }
}

/// Arithmetic mean of the embedding rows at `indices`.
pub fn pool_role(sentence: &TokenizedSentence, indices: &[usize]) -> Result<Vec<f64>, FeatureError> {
    let emb = sentence.embeddings.as_ref().ok_or(FeatureError::MissingEmbeddings)?;
    pool_rows(emb, indices)
}

pub(crate) fn pool_rows(emb: &Matrix, indices: &[usize]) -> Result<Vec<f64>, FeatureError> {
    if indices.is_empty() {
        return Err(FeatureError::EmptyIndexSet);
    }
    let mut out = vec![0.0; emb.cols()];
    for &i in indices {
        if i >= emb.rows() {
            return Err(FeatureError::IndexOutOfRange { index: i, len: emb.rows() });
        }
        for (o, v) in out.iter_mut().zip(emb.row(i)) {
            *o += v;
        }
    }
    let n = indices.len() as f64;
    out.iter_mut().for_each(|o| *o /= n);
    Ok(out)
}

/// Pooled features of every complete frame in document order.
pub fn event_role_features(event: &NewsEvent) -> Result<Vec<RoleFeatures>, FeatureError> {
    let mut out = Vec::new();
    for sentence in &event.sentences {
        for frame in sentence.frames.iter().filter(|f| f.is_complete()) {
            out.push(RoleFeatures {
                v: pool_role(sentence, &frame.v)?,
                a0: pool_role(sentence, &frame.a0)?,
                a1: pool_role(sentence, &frame.a1)?,
            });
        }
    }
    Ok(out)
}

/// One column per complete frame (sentence order, then frame order), at most
/// `n_max` columns.
pub fn build_event_matrix(event: &NewsEvent, scaled_factors: &[f64], n_max: usize) -> Result<SrlpMatrix, FeatureError> {
    let mut frames = event_role_features(event)?;
    if frames.is_empty() {
        return Err(FeatureError::NoCompleteFrames(event.event_id.clone()));
    }
    frames.truncate(n_max.max(1));
    SrlpMatrix::from_features(&frames, scaled_factors)
}

/// Copy of `e` with the `role` segment of column `t` zeroed.
pub fn mask_matrix(e: &SrlpMatrix, t: usize, role: Role) -> Result<SrlpMatrix, FeatureError> {
    if e.mask.is_some() {
        return Err(FeatureError::AlreadyMasked);
    }
    if t >= e.n_frames() {
        return Err(FeatureError::FrameOutOfRange { t, n: e.n_frames() });
    }
    let mut out = e.clone();
    let start = role.slot() * e.d_tok;
    out.columns.row_mut(t)[start..start + e.d_tok].iter_mut().for_each(|x| *x = 0.0);
    out.mask = Some(FrameMask { frame: t, role });
    Ok(out)
}

/// Probability of masking each role, in `[V, A0, A1]` order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoleWeights(pub [f64; 3]);

impl RoleWeights {
    pub fn validate(&self) -> Result<(), FeatureError> {
        let w = self.0;
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) || w.iter().sum::<f64>() <= 0.0 {
            return Err(FeatureError::InvalidRoleWeights(format!("{w:?}")));
        }
        Ok(())
    }
}

/// Named mask-role distributions.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskPreset {
    /// Always mask the predicate.
    #[default]
    V,
    /// Mask A0 or A1 with equal probability, never V.
    A0A1,
    /// Each role with probability 1/3.
    Uniform,
    Custom(RoleWeights),
}

impl MaskPreset {
    pub fn weights(&self) -> RoleWeights {
        match self {
            MaskPreset::V => RoleWeights([1.0, 0.0, 0.0]),
            MaskPreset::A0A1 => RoleWeights([0.0, 0.5, 0.5]),
            MaskPreset::Uniform => RoleWeights([1.0, 1.0, 1.0]),
            MaskPreset::Custom(w) => *w,
        }
    }
}

impl FromStr for MaskPreset {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<Self, FeatureError> {
        match s {
            "v" => Ok(MaskPreset::V),
            "a0a1" => Ok(MaskPreset::A0A1),
            "uniform" => Ok(MaskPreset::Uniform),
            other => Err(FeatureError::InvalidRoleWeights(format!("unknown preset {other:?}"))),
        }
    }
}

/// Uniform frame index, role drawn from `weights`.
pub fn sample_mask<R: Rng + ?Sized>(rng: &mut R, n: usize, weights: &RoleWeights) -> Result<FrameMask, FeatureError> {
    if n == 0 {
        return Err(FeatureError::NoFrames);
    }
    weights.validate()?;
    let frame = rng.random_range(0..n);
    let w = weights.0;
    let total: f64 = w.iter().sum();
    let u: f64 = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut role = Role::V;
    for r in Role::ALL {
        if w[r.slot()] == 0.0 {
            continue;
        }
        // last positive-weight role absorbs rounding at the top end
        role = r;
        acc += w[r.slot()];
        if u < acc {
            break;
        }
    }
    Ok(FrameMask { frame, role })
}
