//! News events with SRL frames, token embeddings, stock factors and prices:
//! parsing, validation, return computation, quantile labeling, splitting and
//! factor scaling.

mod io;
mod labels;
mod prices;
mod returns;
mod scaler;
mod split;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, FixedOffset, SecondsFormat};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::tensor::Matrix;

pub use io::{
    parse_events, read_embeddings, read_events, write_embeddings, write_events, EmbeddingBlock,
    EMBEDDINGS_MAGIC,
};
pub use labels::{assign_labels, derive_labels, ExclusionReport, LabelThresholds, LabeledCorpus};
pub use prices::{
    load_price_dir, read_daily_bars, read_minute_bars, write_daily_bars, write_minute_bars,
    DailyBar, MinuteBar, PriceSeries,
};
pub use returns::{compute_return, compute_returns, ReturnHorizon};
pub use scaler::FactorScaler;
pub use split::{split_dataset, Split, SplitScheme};

/// Number of stock factors carried by every event.
pub const D_FACTOR: usize = 24;

/// The stock factors in file order.
pub const FACTOR_NAMES: [&str; D_FACTOR] = [
    "dividend_yield",
    "dividend_yield_ttm",
    "total_share",
    "circulated_share",
    "free_float_share",
    "market_cap",
    "pe",
    "pe_ttm",
    "pb",
    "ps",
    "ps_ttm",
    "circulated_market_cap",
    "open",
    "high",
    "low",
    "close",
    "pre_close",
    "price_change",
    "pct_change",
    "volume",
    "amount",
    "turnover_rate",
    "turnover_rate_free_float",
    "volume_ratio",
];

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed event record: {message}")]
    MalformedEvent { line: usize, message: String },
    #[error("embeddings offset {offset}: {message}")]
    MalformedEmbeddings { offset: u64, message: String },
    #[error("{path} row {row}: malformed price bar: {message}")]
    MalformedPrice { path: String, row: usize, message: String },
    #[error("event {event_id}: {message}")]
    InvalidEvent { event_id: String, message: String },
    #[error("event {event_id}: embedding dimension mismatch: {message}")]
    EmbeddingMismatch { event_id: String, message: String },
    #[error("embedding record references unknown event {event_id} sentence {sentence}")]
    DanglingEmbedding { event_id: String, sentence: usize },
    #[error("duplicate event_id {0}")]
    DuplicateEvent(String),
    #[error("event {event_id}: no minute bar at or after publication within the next trading day")]
    NoEntryPrice { event_id: String },
    #[error("event {event_id}: no exit bar for horizon {horizon}")]
    NoExitPrice { event_id: String, horizon: String },
    #[error("no price series for stock {0}")]
    MissingPrices(String),
    #[error("event {0} has no return rate")]
    MissingReturn(String),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("invalid label thresholds: {0}")]
    InvalidThresholds(String),
    #[error("partition {0} is empty")]
    EmptyPartition(&'static str),
    #[error("factor scaler has not been fitted")]
    ScalerNotFitted,
    #[error("factor vector has {found} entries, expected {expected}")]
    FactorLength { expected: usize, found: usize },
    #[error("invalid {what}: {value}")]
    InvalidValue { what: &'static str, value: String },
}

pub type Result<T, E = DataError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Outperforming,
    Neutral,
    Underperforming,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Outperforming, Label::Neutral, Label::Underperforming];

    /// Class index used by the classifier head.
    pub fn index(self) -> usize {
        match self {
            Label::Outperforming => 0,
            Label::Neutral => 1,
            Label::Underperforming => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Label> {
        Label::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Outperforming => "outperforming",
            Label::Neutral => "neutral",
            Label::Underperforming => "underperforming",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "outperforming" => Ok(Label::Outperforming),
            "neutral" => Ok(Label::Neutral),
            "underperforming" => Ok(Label::Underperforming),
            other => Err(DataError::InvalidValue { what: "label", value: other.to_string() }),
        }
    }
}

/// One predicate-argument frame: token indices of the predicate (V), the
/// proto-agent (A0) and the proto-patient (A1).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SrlFrame {
    pub v: Vec<usize>,
    pub a0: Vec<usize>,
    pub a1: Vec<usize>,
}

impl SrlFrame {
    /// Only frames with all three roles present contribute a feature column.
    pub fn is_complete(&self) -> bool {
        !self.v.is_empty() && !self.a0.is_empty() && !self.a1.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenizedSentence {
    pub tokens: Vec<String>,
    pub frames: Vec<SrlFrame>,
    /// `token_count × d_tok`; attached from the embeddings file.
    #[serde(skip)]
    pub embeddings: Option<Matrix>,
}

impl TokenizedSentence {
    pub fn new(tokens: Vec<String>, frames: Vec<SrlFrame>) -> Self {
        Self { tokens, frames, embeddings: None }
    }
}

/// Raw (possibly missing) or scaled stock factor values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FactorVector {
    pub values: Vec<Option<f64>>,
}

impl FactorVector {
    pub fn new(values: Vec<Option<f64>>) -> Self {
        Self { values }
    }

    pub fn dense(values: &[f64]) -> Self {
        Self { values: values.iter().copied().map(Some).collect() }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn missing_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_none()).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewsEvent {
    pub event_id: String,
    pub stock_id: String,
    #[serde(with = "timestamp")]
    pub published_at: DateTime<FixedOffset>,
    pub sentences: Vec<TokenizedSentence>,
    pub factors: FactorVector,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub return_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
}

impl NewsEvent {
    pub fn complete_frame_count(&self) -> usize {
        self.sentences.iter().flat_map(|s| &s.frames).filter(|f| f.is_complete()).count()
    }

    /// Structural checks that do not need embeddings.
    pub fn validate(&self) -> Result<()> {
        let invalid = |message: String| DataError::InvalidEvent { event_id: self.event_id.clone(), message };
        if self.event_id.is_empty() {
            return Err(DataError::InvalidValue { what: "event_id", value: String::new() });
        }
        if self.factors.len() != D_FACTOR {
            return Err(invalid(format!("expected {D_FACTOR} factors, found {}", self.factors.len())));
        }
        if self.factors.values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(invalid("non-finite factor value".into()));
        }
        if let Some(r) = self.return_rate {
            if !r.is_finite() {
                return Err(invalid("non-finite return_rate".into()));
            }
        }
        for (si, sentence) in self.sentences.iter().enumerate() {
            let n = sentence.tokens.len();
            for (fi, frame) in sentence.frames.iter().enumerate() {
                if frame.v.is_empty() {
                    return Err(invalid(format!("sentence {si} frame {fi} has no predicate tokens")));
                }
                for (role, idx) in [("v", &frame.v), ("a0", &frame.a0), ("a1", &frame.a1)] {
                    if let Some(&bad) = idx.iter().find(|&&i| i >= n) {
                        return Err(invalid(format!(
                            "sentence {si} frame {fi} {role} index {bad} out of range for {n} tokens"
                        )));
                    }
                }
            }
            if let Some(emb) = &sentence.embeddings {
                if emb.rows() != n {
                    return Err(DataError::EmbeddingMismatch {
                        event_id: self.event_id.clone(),
                        message: format!("sentence {si} has {n} tokens but {} embedding rows", emb.rows()),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn has_embeddings(&self) -> bool {
        self.sentences.iter().all(|s| s.embeddings.is_some())
    }
}

/// Events in canonical order plus the shared token-embedding width.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    pub d_tok: Option<usize>,
    pub events: Vec<NewsEvent>,
}

impl Corpus {
    pub fn new(d_tok: Option<usize>, mut events: Vec<NewsEvent>) -> Self {
        sort_events(&mut events);
        Self { d_tok, events }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::with_capacity(self.events.len());
        for event in &self.events {
            if !seen.insert(event.event_id.as_str()) {
                return Err(DataError::DuplicateEvent(event.event_id.clone()));
            }
            event.validate()?;
            if let Some(d) = self.d_tok {
                for (si, s) in event.sentences.iter().enumerate() {
                    if let Some(emb) = &s.embeddings {
                        if emb.cols() != d {
                            return Err(DataError::EmbeddingMismatch {
                                event_id: event.event_id.clone(),
                                message: format!("sentence {si} has width {}, corpus d_tok is {d}", emb.cols()),
                            });
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Canonical order: publication instant, then event id.
pub fn sort_events(events: &mut [NewsEvent]) {
    events.sort_by(|a, b| a.published_at.cmp(&b.published_at).then_with(|| a.event_id.cmp(&b.event_id)));
}

pub fn format_timestamp(ts: &DateTime<FixedOffset>) -> String {
    ts.to_rfc3339_opts(SecondsFormat::Secs, false)
}

pub fn parse_timestamp(s: &str) -> Result<DateTime<FixedOffset>> {
    DateTime::parse_from_rfc3339(s.trim())
        .map_err(|e| DataError::InvalidValue { what: "timestamp", value: format!("{s:?} ({e})") })
}

mod timestamp {
    use super::*;

    pub fn serialize<S: Serializer>(ts: &DateTime<FixedOffset>, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&format_timestamp(ts))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<DateTime<FixedOffset>, D::Error> {
        let raw = String::deserialize(d)?;
        parse_timestamp(&raw).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;

    pub fn ts(s: &str) -> DateTime<FixedOffset> {
        parse_timestamp(s).unwrap()
    }

    pub fn event(id: &str, published: &str, r: Option<f64>) -> NewsEvent {
        NewsEvent {
            event_id: id.to_string(),
            stock_id: "600000".to_string(),
            published_at: ts(published),
            sentences: vec![TokenizedSentence::new(
                vec!["a".into(), "b".into(), "c".into()],
                vec![SrlFrame { v: vec![1], a0: vec![0], a1: vec![2] }],
            )],
            factors: FactorVector::dense(&[1.0; D_FACTOR]),
            return_rate: r,
            label: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;

    #[test]
    fn label_index_round_trip() {
        for l in Label::ALL {
            assert_eq!(Label::from_index(l.index()), Some(l));
            assert_eq!(l.as_str().parse::<Label>().unwrap(), l);
        }
        assert!(Label::from_index(3).is_none());
    }

    #[test]
    fn frame_completeness() {
        assert!(SrlFrame { v: vec![0], a0: vec![1], a1: vec![2] }.is_complete());
        assert!(!SrlFrame { v: vec![0], a0: vec![], a1: vec![2] }.is_complete());
    }

    #[test]
    fn out_of_range_frame_index_names_event() {
        let mut e = event("bad-1", "2021-01-04T09:31:00+08:00", None);
        e.sentences[0].frames[0].a1 = vec![7];
        let err = e.validate().unwrap_err().to_string();
        assert!(err.contains("bad-1"), "{err}");
        assert!(err.contains("index 7"), "{err}");
    }

    #[test]
    fn wrong_factor_count_rejected() {
        let mut e = event("f", "2021-01-04T09:31:00+08:00", None);
        e.factors.values.pop();
        assert!(e.validate().is_err());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let a = event("x", "2021-01-04T09:31:00+08:00", None);
        let b = event("x", "2021-01-05T09:31:00+08:00", None);
        let corpus = Corpus::new(None, vec![a, b]);
        assert!(matches!(corpus.validate(), Err(DataError::DuplicateEvent(_))));
    }

    #[test]
    fn timestamp_format_is_canonical() {
        let t = ts("2021-01-04T09:31:00+08:00");
        assert_eq!(format_timestamp(&t), "2021-01-04T09:31:00+08:00");
    }
}
