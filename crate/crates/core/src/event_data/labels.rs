//! Quantile-rank labeling of events by return rate.
//!
//! Events are ranked by `r` descending (ties by event id ascending). Rank `i`
//! of `n` sits at percentile `100·i/n`; the top `a` percent are
//! outperforming, the `[b, c)` band neutral and the bottom `d` percent
//! underperforming. The gaps between the bands are dropped.

use serde::{Deserialize, Serialize};

use super::{DataError, Label, NewsEvent, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelThresholds {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Default for LabelThresholds {
    fn default() -> Self {
        Self { a: 20.0, b: 40.0, c: 60.0, d: 20.0 }
    }
}

impl LabelThresholds {
    pub fn validate(&self) -> Result<()> {
        let Self { a, b, c, d } = *self;
        for (name, v) in [("a", a), ("b", b), ("c", c), ("d", d)] {
            if !(v > 0.0 && v <= 100.0) {
                return Err(DataError::InvalidThresholds(format!("{name}={v} is outside (0, 100]")));
            }
        }
        if !(a <= b && b < c && c <= 100.0 - d) {
            return Err(DataError::InvalidThresholds(format!("need a <= b < c <= 100-d, got {a}, {b}, {c}, {d}")));
        }
        Ok(())
    }

    /// Class of rank `i` (0 = highest return) among `n`, or `None` when the
    /// rank falls in an excluded band. Compares `100·i` against `t·n` so
    /// integer thresholds are exact.
    pub fn classify_rank(&self, i: usize, n: usize) -> Option<Label> {
        let p = 100.0 * i as f64;
        let n = n as f64;
        if p < self.a * n {
            Some(Label::Outperforming)
        } else if p >= self.b * n && p < self.c * n {
            Some(Label::Neutral)
        } else if p >= (100.0 - self.d) * n {
            Some(Label::Underperforming)
        } else {
            None
        }
    }
}

/// Labels for `(id, r)` pairs, aligned with the input order.
pub fn assign_labels<S: AsRef<str>>(items: &[(S, f64)], thresholds: &LabelThresholds) -> Result<Vec<Option<Label>>> {
    thresholds.validate()?;
    if items.is_empty() {
        return Err(DataError::EmptyCorpus);
    }
    if let Some((id, _)) = items.iter().find(|(_, r)| !r.is_finite()) {
        return Err(DataError::InvalidEvent { event_id: id.as_ref().to_string(), message: "non-finite return rate".into() });
    }
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|&x, &y| {
        items[y].1.total_cmp(&items[x].1).then_with(|| items[x].0.as_ref().cmp(items[y].0.as_ref()))
    });
    let mut out = vec![None; items.len()];
    for (rank, &idx) in order.iter().enumerate() {
        out[idx] = thresholds.classify_rank(rank, items.len());
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExclusionReport {
    pub total: usize,
    pub outperforming: usize,
    pub neutral: usize,
    pub underperforming: usize,
    /// Events that fell between the labeled bands.
    pub excluded: Vec<String>,
    /// Factor values imputed by the scaler, when known.
    #[serde(default)]
    pub imputed_factor_values: usize,
    /// Events dropped for having no complete SRL frame, when known.
    #[serde(default)]
    pub no_complete_frames: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct LabeledCorpus {
    /// Labeled events in input order.
    pub events: Vec<NewsEvent>,
    pub report: ExclusionReport,
}

pub fn derive_labels(events: Vec<NewsEvent>, thresholds: &LabelThresholds) -> Result<LabeledCorpus> {
    let items = events
        .iter()
        .map(|e| e.return_rate.map(|r| (e.event_id.as_str(), r)).ok_or_else(|| DataError::MissingReturn(e.event_id.clone())))
        .collect::<Result<Vec<_>>>()?;
    let labels = assign_labels(&items, thresholds)?;
    let mut report = ExclusionReport { total: events.len(), ..Default::default() };
    let mut labeled = Vec::with_capacity(events.len());
    for (mut event, label) in events.into_iter().zip(labels) {
        match label {
            Some(l) => {
                match l {
                    Label::Outperforming => report.outperforming += 1,
                    Label::Neutral => report.neutral += 1,
                    Label::Underperforming => report.underperforming += 1,
                }
                event.label = Some(l);
                labeled.push(event);
            }
            None => report.excluded.push(event.event_id),
        }
    }
    Ok(LabeledCorpus { events: labeled, report })
}

#[cfg(test)]
mod tests {
    use super::super::test_support::event;
    use super::*;
    use proptest::prelude::*;

    fn ten_events() -> Vec<NewsEvent> {
        (1..=10)
            .map(|k| event(&format!("e{k:02}"), "2021-01-04T09:31:00+08:00", Some(k as f64 / 100.0)))
            .collect()
    }

    fn ids_with(out: &LabeledCorpus, label: Label) -> Vec<f64> {
        let mut rs: Vec<f64> =
            out.events.iter().filter(|e| e.label == Some(label)).map(|e| e.return_rate.unwrap()).collect();
        rs.sort_by(|a, b| b.total_cmp(a));
        rs
    }

    #[test]
    fn ten_event_example() {
        let out = derive_labels(ten_events(), &LabelThresholds::default()).unwrap();
        assert_eq!(ids_with(&out, Label::Outperforming), [0.10, 0.09]);
        assert_eq!(ids_with(&out, Label::Neutral), [0.06, 0.05]);
        assert_eq!(ids_with(&out, Label::Underperforming), [0.02, 0.01]);
        assert_eq!(out.report.excluded.len(), 4);
    }

    #[test]
    fn ties_break_by_event_id() {
        let events: Vec<_> =
            ["j", "c", "a", "h", "b", "e", "d", "g", "i", "f"].iter().map(|id| event(id, "2021-01-04T09:31:00+08:00", Some(0.0))).collect();
        let out = derive_labels(events, &LabelThresholds::default()).unwrap();
        let by = |l: Label| {
            let mut v: Vec<_> = out.events.iter().filter(|e| e.label == Some(l)).map(|e| e.event_id.clone()).collect();
            v.sort();
            v
        };
        assert_eq!(by(Label::Outperforming), ["a", "b"]);
        assert_eq!(by(Label::Neutral), ["e", "f"]);
        assert_eq!(by(Label::Underperforming), ["i", "j"]);
    }

    #[test]
    fn five_events() {
        let events: Vec<_> = (0..5).map(|k| event(&format!("e{k}"), "2021-01-04T09:31:00+08:00", Some(k as f64))).collect();
        let out = derive_labels(events, &LabelThresholds::default()).unwrap();
        assert_eq!((out.report.outperforming, out.report.neutral, out.report.underperforming), (1, 1, 1));
        assert_eq!(out.report.excluded.len(), 2);
    }

    #[test]
    fn errors() {
        assert!(matches!(derive_labels(vec![], &LabelThresholds::default()), Err(DataError::EmptyCorpus)));
        let bad = LabelThresholds { a: 50.0, b: 40.0, c: 60.0, d: 20.0 };
        assert!(derive_labels(ten_events(), &bad).is_err());
        let bad = LabelThresholds { a: 20.0, b: 40.0, c: 90.0, d: 20.0 };
        assert!(bad.validate().is_err());
        let missing = vec![event("x", "2021-01-04T09:31:00+08:00", None)];
        assert!(matches!(derive_labels(missing, &LabelThresholds::default()), Err(DataError::MissingReturn(_))));
    }

    proptest! {
        #[test]
        fn monotone_and_conserving(rs in prop::collection::vec(-0.2f64..0.2, 1..200)) {
            let events: Vec<_> = rs.iter().enumerate()
                .map(|(i, r)| event(&format!("e{i:04}"), "2021-01-04T09:31:00+08:00", Some((r * 100.0).round() / 100.0)))
                .collect();
            let n = events.len();
            let out = derive_labels(events, &LabelThresholds::default()).unwrap();
            let rep = &out.report;
            prop_assert_eq!(rep.outperforming + rep.neutral + rep.underperforming + rep.excluded.len(), n);
            // 100·i < 20·n  <=>  i < n/5
            prop_assert_eq!(rep.outperforming, n.div_ceil(5));
            let min_of = |l| ids_with(&out, l).last().copied();
            let max_of = |l| ids_with(&out, l).first().copied();
            if let (Some(lo), Some(hi)) = (min_of(Label::Outperforming), max_of(Label::Neutral)) {
                prop_assert!(lo >= hi);
            }
            if let (Some(lo), Some(hi)) = (min_of(Label::Neutral), max_of(Label::Underperforming)) {
                prop_assert!(lo >= hi);
            }
        }
    }
}
