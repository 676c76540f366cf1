#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use srlp::backtest::{BacktestResult, Trade};
use srlp::event_data::{
    compute_returns, derive_labels, load_price_dir, parse_events, read_daily_bars, DailyBar, Label, LabelThresholds,
    NewsEvent, PriceSeries, ReturnHorizon,
};
use srlp::train::Prediction;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

/// The 60-event separable corpus with embeddings.
pub fn small_corpus() -> Vec<NewsEvent> {
    let dir = fixtures().join("small");
    parse_events(&dir.join("events.jsonl"), Some(&dir.join("events.emb"))).unwrap().events
}

pub struct Market {
    pub events: Vec<NewsEvent>,
    pub prices: BTreeMap<String, PriceSeries>,
    pub index: Vec<DailyBar>,
}

/// Market fixture with next-close returns and default quantile labels.
pub fn labeled_market() -> Market {
    let dir = fixtures().join("market");
    let mut events = parse_events(&dir.join("events.jsonl"), Some(&dir.join("events.emb"))).unwrap().events;
    let prices = load_price_dir(&dir.join("prices")).unwrap();
    compute_returns(&mut events, &prices, ReturnHorizon::NextClose).unwrap();
    let events = derive_labels(events, &LabelThresholds::default()).unwrap().events;
    let index = read_daily_bars(&dir.join("index.csv")).unwrap();
    Market { events, prices, index }
}

/// Certain predictions of the given labels.
pub fn predictions_from(events: &[NewsEvent], labels: &[Label]) -> Vec<Prediction> {
    events
        .iter()
        .zip(labels)
        .map(|(e, &label)| {
            let mut probabilities = [0.0; 3];
            probabilities[label.index()] = 1.0;
            Prediction {
                event_id: e.event_id.clone(),
                stock_id: e.stock_id.clone(),
                published_at: e.published_at,
                label,
                probabilities,
            }
        })
        .collect()
}

/// Entry strictly after the signal, exit strictly after entry, and both
/// prices read from the series at those timestamps.
pub fn lookahead_violations(result: &BacktestResult, prices: &BTreeMap<String, PriceSeries>) -> Vec<String> {
    result.trades.iter().filter_map(|t| check_trade(t, prices).err()).collect()
}

fn check_trade(t: &Trade, prices: &BTreeMap<String, PriceSeries>) -> Result<(), String> {
    if t.entry_time <= t.signal_time {
        return Err(format!("{}: entry {} not after signal {}", t.event_id, t.entry_time, t.signal_time));
    }
    if t.exit_time <= t.entry_time {
        return Err(format!("{}: exit not after entry", t.event_id));
    }
    let series = prices.get(&t.stock_id).ok_or_else(|| format!("{}: unknown stock", t.event_id))?;
    let close_at = |ts| series.minute_bars.iter().find(|b| b.timestamp == ts).map(|b| b.close);
    if close_at(t.entry_time) != Some(t.entry_price) || close_at(t.exit_time) != Some(t.exit_price) {
        return Err(format!("{}: fill price not from the series", t.event_id));
    }
    Ok(())
}
