use std::path::Path;

use chrono::{DateTime, FixedOffset};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{argmax, event_matrix, Result, TrainError};
use crate::event_data::{format_timestamp, parse_timestamp, Label, NewsEvent};
use crate::model::{forward_classify, Checkpoint};
use crate::tensor::softmax;

pub const PREDICTIONS_HEADER: [&str; 7] =
    ["event_id", "stock_id", "published_at", "pred_label", "p_outperform", "p_neutral", "p_underperform"];

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub event_id: String,
    pub stock_id: String,
    pub published_at: DateTime<FixedOffset>,
    pub label: Label,
    /// Outperforming, neutral, underperforming.
    pub probabilities: [f64; 3],
}

impl Prediction {
    /// Probability of the predicted class.
    pub fn confidence(&self) -> f64 {
        self.probabilities[self.label.index()]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skipped {
    pub event_id: String,
    pub reason: String,
}

impl Skipped {
    pub(crate) fn no_frames(event_id: &str) -> Self {
        Self { event_id: event_id.to_string(), reason: "no complete SRL frame".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Predictions {
    pub predictions: Vec<Prediction>,
    pub skipped: Vec<Skipped>,
}

/// Class probabilities for every event in input order. Events without a
/// complete frame are skipped, not fatal.
pub fn predict(checkpoint: &Checkpoint, events: &[NewsEvent]) -> Result<Predictions> {
    let scaler = checkpoint.scaler.as_ref().ok_or(TrainError::MissingScaler)?;
    let n_max = checkpoint.params.config.n_max;
    let rows: Vec<std::result::Result<Prediction, Skipped>> = events
        .par_iter()
        .map(|e| {
            let Some(m) = event_matrix(e, scaler, n_max)? else {
                return Ok(Err(Skipped::no_frames(&e.event_id)));
            };
            let p = softmax(&forward_classify(&m, &checkpoint.params)?);
            Ok(Ok(Prediction {
                event_id: e.event_id.clone(),
                stock_id: e.stock_id.clone(),
                published_at: e.published_at,
                label: Label::from_index(argmax(&p)).expect("three classes"),
                probabilities: [p[0], p[1], p[2]],
            }))
        })
        .collect::<Result<_>>()?;
    let mut out = Predictions::default();
    for r in rows {
        match r {
            Ok(p) => out.predictions.push(p),
            Err(s) => out.skipped.push(s),
        }
    }
    Ok(out)
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> TrainError + '_ {
    move |source| TrainError::Csv { path: path.to_path_buf(), source }
}

pub fn write_predictions(path: &Path, predictions: &[Prediction]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(PREDICTIONS_HEADER).map_err(csv_err(path))?;
    for p in predictions {
        let [a, b, c] = p.probabilities;
        w.write_record([
            p.event_id.clone(),
            p.stock_id.clone(),
            format_timestamp(&p.published_at),
            p.label.as_str().to_string(),
            a.to_string(),
            b.to_string(),
            c.to_string(),
        ])
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(|source| TrainError::Io { path: path.to_path_buf(), source })
}

pub fn write_skipped(path: &Path, skipped: &[Skipped]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(["event_id", "reason"]).map_err(csv_err(path))?;
    for s in skipped {
        w.write_record([&s.event_id, &s.reason]).map_err(csv_err(path))?;
    }
    w.flush().map_err(|source| TrainError::Io { path: path.to_path_buf(), source })
}

pub fn read_predictions(path: &Path) -> Result<Vec<Prediction>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let header = r.headers().map_err(csv_err(path))?.clone();
    if header.iter().ne(PREDICTIONS_HEADER) {
        return Err(TrainError::InvalidConfig(format!("{}: unexpected predictions header", path.display())));
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        let bad = |m: String| TrainError::InvalidConfig(format!("{} row {}: {m}", path.display(), i + 2));
        let num = |k: usize| rec[k].parse::<f64>().map_err(|e| bad(format!("{}: {e}", PREDICTIONS_HEADER[k])));
        out.push(Prediction {
            event_id: rec[0].to_string(),
            stock_id: rec[1].to_string(),
            published_at: parse_timestamp(&rec[2]).map_err(|e| bad(e.to_string()))?,
            label: rec[3].parse().map_err(|e: crate::event_data::DataError| bad(e.to_string()))?,
            probabilities: [num(4)?, num(5)?, num(6)?],
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event_data::test_support::ts;

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        let preds = vec![Prediction {
            event_id: "e1".into(),
            stock_id: "600000".into(),
            published_at: ts("2021-01-04T09:31:00+08:00"),
            label: Label::Neutral,
            probabilities: [0.1, 0.7, 0.20000000000000004],
        }];
        write_predictions(&path, &preds).unwrap();
        assert_eq!(read_predictions(&path).unwrap(), preds);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("event_id,stock_id,published_at,pred_label,p_outperform,p_neutral,p_underperform\n"));
        assert!(text.contains("2021-01-04T09:31:00+08:00,neutral,0.1,0.7,0.20000000000000004"));
    }

    #[test]
    fn empty_file_has_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        write_predictions(&path, &[]).unwrap();
        assert_eq!(
            std::fs::read_to_string(&path).unwrap(),
            "event_id,stock_id,published_at,pred_label,p_outperform,p_neutral,p_underperform\n"
        );
        assert!(read_predictions(&path).unwrap().is_empty());
    }
}
