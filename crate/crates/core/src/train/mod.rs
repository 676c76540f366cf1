//! Training loop, evaluation metrics and prediction files.
//!
//! A batch is a gradient-accumulation group of events with similar frame
//! counts; every event's matrix is processed on its own, so there is no
//! padding inside attention.

mod eval;
mod predict;

use std::path::PathBuf;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event_data::{DataError, FactorScaler, NewsEvent, Split, SplitScheme};
use crate::features::{
    build_event_matrix, mask_matrix, sample_mask, FeatureError, MaskPreset, SrlpMatrix, DEFAULT_N_MAX,
};
use crate::model::{
    accumulate_gradients, forward_classify, forward_ssl, Adam, AdamConfig, Checkpoint, LossBreakdown, ModelConfig,
    ModelError, ModelParams,
};

pub use eval::{argmax, evaluate, ClassMetrics, EvalReport};
pub use predict::{
    predict, read_predictions, write_predictions, write_skipped, Prediction, Predictions, Skipped,
    PREDICTIONS_HEADER,
};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("{0} split has no usable events")]
    EmptySplit(&'static str),
    #[error("event {0} has no label")]
    Unlabeled(String),
    #[error("event {0} has no token embeddings")]
    MissingEmbeddings(String),
    #[error("checkpoint has no fitted factor scaler")]
    MissingScaler,
    #[error("non-finite loss at epoch {epoch}, step {step}, event {event_id}: {loss:?}")]
    NonFiniteLoss { epoch: usize, step: usize, event_id: String, loss: LossBreakdown },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

pub type Result<T, E = TrainError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Cosine decay from `lr` to `lr · min_fraction` over the configured epochs.
    Cosine { min_fraction: f64 },
}

impl LrSchedule {
    pub fn lr_at(&self, base: f64, epoch: usize, epochs: usize) -> f64 {
        match *self {
            LrSchedule::Constant => base,
            LrSchedule::Cosine { min_fraction } => {
                let progress = if epochs <= 1 { 0.0 } else { epoch as f64 / (epochs - 1) as f64 };
                let min = base * min_fraction;
                min + 0.5 * (base - min) * (1.0 + (std::f64::consts::PI * progress).cos())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Seeds initialization, shuffling and dropout.
    pub seed: u64,
    /// Seeds mask sampling; falls back to `seed`.
    pub mask_seed: Option<u64>,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_schedule: LrSchedule,
    pub weight_decay: f64,
    pub alpha: f64,
    pub mask_preset: MaskPreset,
    pub patience: usize,
    pub split: SplitScheme,
    /// Share of the pre-cutoff pool held out for validation under the
    /// out-of-distribution scheme.
    pub validation_fraction: f64,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub ffn_ratio: usize,
    pub dropout: f64,
    pub n_max: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let m = ModelConfig::new(1, 0);
        Self {
            seed: 7,
            mask_seed: None,
            epochs: 30,
            batch_size: 32,
            lr: 1e-3,
            lr_schedule: LrSchedule::Constant,
            weight_decay: 0.0,
            alpha: 0.7,
            mask_preset: MaskPreset::V,
            patience: 5,
            split: SplitScheme::default(),
            validation_fraction: 0.1,
            d_model: m.d_model,
            n_layers: m.n_layers,
            n_heads: m.n_heads,
            ffn_ratio: m.ffn_ratio,
            dropout: m.dropout,
            n_max: DEFAULT_N_MAX,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if self.epochs == 0 || self.batch_size == 0 || self.patience == 0 || self.n_max == 0 {
            return bad("epochs, batch_size, patience and n_max must be positive");
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad("alpha must be in [0, 1]");
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) || !(self.weight_decay >= 0.0) {
            return bad("lr and weight_decay must be non-negative");
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return bad("validation_fraction must be in (0, 1)");
        }
        self.mask_preset.weights().validate()?;
        self.model_config(1, 0).validate()?;
        Ok(())
    }

    pub fn model_config(&self, d_tok: usize, d_factor: usize) -> ModelConfig {
        ModelConfig {
            d_model: self.d_model,
            n_layers: self.n_layers,
            n_heads: self.n_heads,
            ffn_ratio: self.ffn_ratio,
            dropout: self.dropout,
            n_max: self.n_max,
            ..ModelConfig::new(d_tok, d_factor)
        }
    }

    pub fn mask_seed(&self) -> u64 {
        self.mask_seed.unwrap_or(self.seed)
    }
}

/// Train, validation and test partitions ready for training. Under the
/// out-of-distribution scheme validation is a seeded sample of the
/// pre-cutoff pool.
#[derive(Debug, Clone, PartialEq)]
pub struct Partitions {
    pub train: Vec<NewsEvent>,
    pub validation: Vec<NewsEvent>,
    pub test: Vec<NewsEvent>,
}

impl Partitions {
    pub fn from_split(split: Split, validation_fraction: f64, seed: u64) -> Result<Self> {
        let parts = match split {
            Split::InDistribution { train, validation, test } => Self { train, validation, test },
            Split::OutOfDistribution { train: pool, ood_test } => {
                let n_val = ((pool.len() as f64) * validation_fraction).round() as usize;
                let mut order: Vec<usize> = (0..pool.len()).collect();
                order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
                let mut is_val = vec![false; pool.len()];
                order[..n_val.min(pool.len())].iter().for_each(|&i| is_val[i] = true);
                let (validation, train): (Vec<_>, Vec<_>) =
                    pool.into_iter().zip(is_val).partition(|(_, v)| *v);
                Self {
                    train: train.into_iter().map(|(e, _)| e).collect(),
                    validation: validation.into_iter().map(|(e, _)| e).collect(),
                    test: ood_test,
                }
            }
        };
        for (name, p) in [("train", &parts.train), ("validation", &parts.validation), ("test", &parts.test)] {
            if p.is_empty() {
                return Err(TrainError::EmptySplit(name));
            }
        }
        Ok(parts)
    }
}

/// One labeled training example.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub event_id: String,
    pub matrix: SrlpMatrix,
    pub label: usize,
}

/// Feature matrix of one event, or `None` when it has no complete frame.
pub fn event_matrix(event: &NewsEvent, scaler: &FactorScaler, n_max: usize) -> Result<Option<SrlpMatrix>> {
    if !event.has_embeddings() {
        return Err(TrainError::MissingEmbeddings(event.event_id.clone()));
    }
    let factors = scaler.transform(&event.factors)?;
    match build_event_matrix(event, &factors, n_max) {
        Ok(m) => Ok(Some(m)),
        Err(FeatureError::NoCompleteFrames(_)) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

/// Labeled examples plus the events that were skipped.
pub fn prepare_examples(
    events: &[NewsEvent],
    scaler: &FactorScaler,
    n_max: usize,
) -> Result<(Vec<Example>, Vec<Skipped>)> {
    let mut examples = Vec::with_capacity(events.len());
    let mut skipped = Vec::new();
    for e in events {
        let label = e.label.ok_or_else(|| TrainError::Unlabeled(e.event_id.clone()))?;
        match event_matrix(e, scaler, n_max)? {
            Some(matrix) => examples.push(Example { event_id: e.event_id.clone(), matrix, label: label.index() }),
            None => skipped.push(Skipped::no_frames(&e.event_id)),
        }
    }
    Ok((examples, skipped))
}

fn d_tok_of(events: &[NewsEvent]) -> Result<usize> {
    let first = events.first().ok_or(TrainError::EmptySplit("train"))?;
    first
        .sentences
        .iter()
        .find_map(|s| s.embeddings.as_ref().map(|m| m.cols()))
        .ok_or_else(|| TrainError::MissingEmbeddings(first.event_id.clone()))
}

/// SplitMix64 finalizer over a combination of stream inputs.
pub(crate) fn derive_seed(base: u64, a: u64, b: u64) -> u64 {
    let mut z = base ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const DROPOUT_STREAM: u64 = 0xD809_0000;
const SHUFFLE_STREAM: u64 = 0x5A0F_F1E5;
/// Fixed mask draw used for validation matching accuracy.
const VALIDATION_MASK_EPOCH: u64 = u64::MAX;
/// Events per parallel gradient chunk; fixed so results do not depend on the
/// thread count.
const GRAD_CHUNK: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub epoch: usize,
    pub step: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub loss: f64,
    pub cls: f64,
    pub ssl: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_cls: f64,
    pub train_ssl: f64,
    pub validation_accuracy: f64,
    /// Top-1 accuracy of the matching head on a fixed validation mask draw.
    pub validation_ssl_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Best-validation parameters with the training scaler.
    pub checkpoint: Checkpoint,
    pub best_epoch: usize,
    pub best_validation_accuracy: f64,
    pub epochs: Vec<EpochRecord>,
    pub steps: Vec<StepRecord>,
    pub skipped: Vec<Skipped>,
}

struct Masked {
    matrix: SrlpMatrix,
}

fn masked_example(ex: &Example, seed: u64, preset: &MaskPreset) -> Result<Masked> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mask = sample_mask(&mut rng, ex.matrix.n_frames(), &preset.weights())?;
    Ok(Masked { matrix: mask_matrix(&ex.matrix, mask.frame, mask.role)? })
}

/// Classification accuracy over `examples` with dropout off.
pub fn accuracy(params: &ModelParams, examples: &[Example]) -> Result<f64> {
    if examples.is_empty() {
        return Ok(0.0);
    }
    let correct: Vec<bool> = examples
        .par_iter()
        .map(|ex| Ok(argmax(&forward_classify(&ex.matrix, params)?) == ex.label))
        .collect::<Result<_>>()?;
    Ok(correct.iter().filter(|c| **c).count() as f64 / examples.len() as f64)
}

/// Top-1 accuracy of the matching head, masks drawn from `(mask_seed, epoch, index)`.
pub fn ssl_accuracy(
    params: &ModelParams,
    examples: &[Example],
    preset: &MaskPreset,
    mask_seed: u64,
    epoch: u64,
) -> Result<f64> {
    if examples.is_empty() {
        return Ok(0.0);
    }
    let hits: Vec<bool> = examples
        .par_iter()
        .enumerate()
        .map(|(i, ex)| {
            let m = masked_example(ex, derive_seed(mask_seed, epoch, i as u64), preset)?;
            let mask = m.matrix.mask().expect("masked");
            let p = forward_ssl(&m.matrix, &ex.matrix.role_vectors(mask.role), params)?;
            Ok(argmax(&p) == mask.frame)
        })
        .collect::<Result<_>>()?;
    Ok(hits.iter().filter(|h| **h).count() as f64 / examples.len() as f64)
}

/// Mean SSL loss over `examples` with dropout off.
pub fn mean_ssl_loss(
    params: &ModelParams,
    examples: &[Example],
    preset: &MaskPreset,
    mask_seed: u64,
) -> Result<f64> {
    let losses: Vec<f64> = examples
        .par_iter()
        .enumerate()
        .map(|(i, ex)| {
            let m = masked_example(ex, derive_seed(mask_seed, 0, i as u64), preset)?;
            let mask = m.matrix.mask().expect("masked");
            let p = forward_ssl(&m.matrix, &ex.matrix.role_vectors(mask.role), params)?;
            Ok(-p[mask.frame].ln())
        })
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len().max(1) as f64)
}

/// Shuffled batches of example indices, grouped by power-of-two frame-count
/// bucket.
fn epoch_batches(examples: &[Example], batch_size: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, SHUFFLE_STREAM, epoch as u64));
    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.shuffle(&mut rng);
    order.sort_by_key(|&i| examples[i].matrix.n_frames().next_power_of_two());
    let mut batches: Vec<Vec<usize>> = Vec::new();
    let mut start = 0;
    while start < order.len() {
        let bucket = examples[order[start]].matrix.n_frames().next_power_of_two();
        let mut end = start;
        while end < order.len()
            && end - start < batch_size
            && examples[order[end]].matrix.n_frames().next_power_of_two() == bucket
        {
            end += 1;
        }
        batches.push(order[start..end].to_vec());
        start = end;
    }
    batches.shuffle(&mut rng);
    batches
}

struct StepContext<'a> {
    cfg: &'a TrainConfig,
    examples: &'a [Example],
    epoch: usize,
    step: usize,
}

/// Mean loss and mean gradient over one batch.
fn batch_gradients(ctx: &StepContext, params: &ModelParams, batch: &[usize]) -> Result<(LossBreakdown, ModelParams)> {
    let cfg = ctx.cfg;
    let partials: Vec<(Vec<LossBreakdown>, ModelParams)> = batch
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let mut grads = params.zeros_like();
            let mut losses = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let ex = &ctx.examples[i];
                let masked = masked_example(ex, derive_seed(cfg.mask_seed(), ctx.epoch as u64, i as u64), &cfg.mask_preset)?;
                let mut dropout =
                    ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed ^ DROPOUT_STREAM, ctx.epoch as u64, i as u64));
                let loss =
                    accumulate_gradients(&ex.matrix, &masked.matrix, ex.label, cfg.alpha, params, Some(&mut dropout), &mut grads)?;
                if !loss.total.is_finite() {
                    return Err(TrainError::NonFiniteLoss {
                        epoch: ctx.epoch,
                        step: ctx.step,
                        event_id: ex.event_id.clone(),
                        loss,
                    });
                }
                losses.push(loss);
            }
            Ok((losses, grads))
        })
        .collect::<Result<_>>()?;

    let mut total = LossBreakdown::default();
    let mut grads = params.zeros_like();
    for (losses, g) in &partials {
        for l in losses {
            total.total += l.total;
            total.cls += l.cls;
            total.ssl += l.ssl;
        }
        grads.add_assign(g);
    }
    let n = batch.len() as f64;
    grads.scale(1.0 / n);
    Ok((LossBreakdown { total: total.total / n, cls: total.cls / n, ssl: total.ssl / n }, grads))
}

/// Trains from seeded initial parameters; returns the parameters with the
/// best validation accuracy (earliest on ties) and the full log.
pub fn train(train: &[NewsEvent], validation: &[NewsEvent], cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with(train, validation, cfg, |_| {})
}

/// [`train`] with a callback after every epoch.
pub fn train_with(
    train: &[NewsEvent],
    validation: &[NewsEvent],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(TrainError::EmptySplit("train"));
    }
    if validation.is_empty() {
        return Err(TrainError::EmptySplit("validation"));
    }
    let scaler = FactorScaler::fit(train)?;
    let (train_ex, mut skipped) = prepare_examples(train, &scaler, cfg.n_max)?;
    let (val_ex, val_skipped) = prepare_examples(validation, &scaler, cfg.n_max)?;
    skipped.extend(val_skipped);
    if train_ex.is_empty() {
        return Err(TrainError::EmptySplit("train"));
    }
    if val_ex.is_empty() {
        return Err(TrainError::EmptySplit("validation"));
    }

    let model_cfg = cfg.model_config(d_tok_of(train)?, scaler.dim());
    let mut params = ModelParams::init(&model_cfg, cfg.seed)?;
    let mut adam = Adam::new(AdamConfig { lr: cfg.lr, weight_decay: cfg.weight_decay, ..AdamConfig::default() }, &params);
    info!(
        "training {} parameters on {} events ({} validation, {} skipped)",
        params.parameter_count(),
        train_ex.len(),
        val_ex.len(),
        skipped.len()
    );

    let mut best = params.clone();
    let mut best_acc = f64::NEG_INFINITY;
    let mut best_epoch = 0;
    let mut since_best = 0;
    let mut epochs = Vec::new();
    let mut steps = Vec::new();

    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_schedule.lr_at(cfg.lr, epoch, cfg.epochs);
        adam.config.lr = lr;
        let mut sums = LossBreakdown::default();
        for batch in epoch_batches(&train_ex, cfg.batch_size, cfg.seed, epoch) {
            let ctx = StepContext { cfg, examples: &train_ex, epoch, step: steps.len() };
            let (loss, grads) = batch_gradients(&ctx, &params, &batch)?;
            adam.step(&mut params, &grads)?;
            let b = batch.len() as f64;
            sums.total += loss.total * b;
            sums.cls += loss.cls * b;
            sums.ssl += loss.ssl * b;
            debug!("epoch {epoch} step {} loss {:.6}", steps.len(), loss.total);
            steps.push(StepRecord {
                epoch,
                step: steps.len(),
                batch_size: batch.len(),
                lr,
                loss: loss.total,
                cls: loss.cls,
                ssl: loss.ssl,
            });
        }
        let n = train_ex.len() as f64;
        let record = EpochRecord {
            epoch,
            lr,
            train_loss: sums.total / n,
            train_cls: sums.cls / n,
            train_ssl: sums.ssl / n,
            validation_accuracy: accuracy(&params, &val_ex)?,
            validation_ssl_accuracy: ssl_accuracy(
                &params,
                &val_ex,
                &cfg.mask_preset,
                cfg.mask_seed(),
                VALIDATION_MASK_EPOCH,
            )?,
        };
        info!(
            "epoch {epoch}: loss {:.4} (cls {:.4}, ssl {:.4}), validation accuracy {:.4}",
            record.train_loss, record.train_cls, record.train_ssl, record.validation_accuracy
        );
        on_epoch(&record);
        let improved = record.validation_accuracy > best_acc;
        epochs.push(record);
        if improved {
            best_acc = epochs[epoch].validation_accuracy;
            best = params.clone();
            best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                info!("early stop after epoch {epoch}; best epoch {best_epoch}");
                break;
            }
        }
    }

    let training = serde_json::json!({ "config": cfg, "best_epoch": best_epoch });
    Ok(TrainOutcome {
        checkpoint: Checkpoint { params: best, scaler: Some(scaler), training: Some(training) },
        best_epoch,
        best_validation_accuracy: best_acc,
        epochs,
        steps,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{separable_corpus, SeparableConfig};

    fn tiny() -> TrainConfig {
        TrainConfig {
            epochs: 2,
            batch_size: 8,
            d_model: 8,
            n_layers: 1,
            n_heads: 2,
            lr: 1e-2,
            ..TrainConfig::default()
        }
    }

    fn corpus(n: usize) -> Vec<NewsEvent> {
        separable_corpus(&SeparableConfig { n_events: n, d_tok: 4, ..SeparableConfig::default() })
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        for bad in [
            TrainConfig { alpha: 1.1, ..tiny() },
            TrainConfig { epochs: 0, ..tiny() },
            TrainConfig { batch_size: 0, ..tiny() },
            TrainConfig { n_heads: 3, ..tiny() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn cosine_schedule_endpoints() {
        let s = LrSchedule::Cosine { min_fraction: 0.1 };
        assert_eq!(s.lr_at(1.0, 0, 11), 1.0);
        assert!((s.lr_at(1.0, 10, 11) - 0.1).abs() < 1e-15);
        assert_eq!(LrSchedule::Constant.lr_at(0.3, 5, 11), 0.3);
    }

    #[test]
    fn batches_cover_every_example_once() {
        let events = corpus(50);
        let scaler = FactorScaler::fit(&events).unwrap();
        let (ex, _) = prepare_examples(&events, &scaler, 32).unwrap();
        let batches = epoch_batches(&ex, 8, 3, 0);
        let mut seen: Vec<usize> = batches.iter().flatten().copied().collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..50).collect::<Vec<_>>());
        for b in &batches {
            assert!(b.len() <= 8);
            let bucket = ex[b[0]].matrix.n_frames().next_power_of_two();
            assert!(b.iter().all(|&i| ex[i].matrix.n_frames().next_power_of_two() == bucket));
        }
        assert_eq!(batches, epoch_batches(&ex, 8, 3, 0));
        assert_ne!(batches, epoch_batches(&ex, 8, 3, 1));
    }

    #[test]
    fn zero_lr_keeps_initial_params() {
        let events = corpus(30);
        let cfg = TrainConfig { lr: 0.0, patience: 10, epochs: 3, ..tiny() };
        let out = train(&events[..24], &events[24..], &cfg).unwrap();
        let init = ModelParams::init(&out.checkpoint.params.config, cfg.seed).unwrap();
        assert_eq!(out.checkpoint.params, init);
        let accs: Vec<f64> = out.epochs.iter().map(|e| e.validation_accuracy).collect();
        assert!(accs.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn empty_splits_are_errors() {
        let events = corpus(6);
        assert!(matches!(train(&[], &events, &tiny()), Err(TrainError::EmptySplit("train"))));
        assert!(matches!(train(&events, &[], &tiny()), Err(TrainError::EmptySplit("validation"))));
        let mut unlabeled = events.clone();
        unlabeled[0].label = None;
        assert!(matches!(train(&unlabeled, &events, &tiny()), Err(TrainError::Unlabeled(_))));
    }

    #[test]
    fn ood_partitions_carve_validation() {
        use chrono::NaiveDate;
        let events = corpus(100);
        let cutoff = NaiveDate::from_ymd_opt(2021, 1, 4).unwrap();
        // everything is published on 2021-01-04 or 05; move the tail later
        let mut events = events;
        for e in events.iter_mut().skip(80) {
            e.published_at += chrono::Duration::days(3);
        }
        let cutoff = cutoff + chrono::Duration::days(2);
        let split = crate::event_data::split_dataset(events, &SplitScheme::OutOfDistribution { cutoff }).unwrap();
        let p = Partitions::from_split(split, 0.1, 7).unwrap();
        assert_eq!((p.train.len(), p.validation.len(), p.test.len()), (72, 8, 20));
        assert!(p.train.iter().chain(&p.validation).all(|e| e.published_at.date_naive() < cutoff));
    }
}
