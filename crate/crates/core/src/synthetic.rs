//! Seeded synthetic corpora and market data for tests, demos and the
//! direction-of-effect check.
//!
//! Every embedding value is representable as `f32`, so generated corpora
//! survive a round trip through the embeddings file unchanged.

use std::collections::BTreeMap;

use chrono::{DateTime, Datelike, Duration, FixedOffset, NaiveDate, NaiveTime, TimeZone, Weekday};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::event_data::{
    DailyBar, FactorVector, Label, MinuteBar, NewsEvent, PriceSeries, SrlFrame, TokenizedSentence, D_FACTOR,
};
use crate::tensor::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SeparableConfig {
    pub seed: u64,
    pub n_events: usize,
    pub d_tok: usize,
    pub min_frames: usize,
    pub max_frames: usize,
    /// Fraction of factor values left missing.
    pub missing_factor_rate: f64,
}

impl Default for SeparableConfig {
    fn default() -> Self {
        Self { seed: 7, n_events: 2000, d_tok: 16, min_frames: 2, max_frames: 6, missing_factor_rate: 0.01 }
    }
}

/// Offset of the class-carrying component along the hidden direction.
const CLASS_OFFSETS: [f64; 3] = [2.0, 0.0, -2.0];
const JITTER: f64 = 0.6;

fn f32_round(x: f64) -> f64 {
    x as f32 as f64
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize, std: f64) -> Vec<f64> {
    (0..n).map(|_| std * rng.sample::<f64, _>(StandardNormal)).collect()
}

fn beijing() -> FixedOffset {
    FixedOffset::east_opt(8 * 3600).expect("valid offset")
}

fn at(date: NaiveDate, h: u32, m: u32) -> DateTime<FixedOffset> {
    let naive = date.and_time(NaiveTime::from_hms_opt(h, m, 0).expect("valid time"));
    beijing().from_local_datetime(&naive).single().expect("fixed offsets are unambiguous")
}

/// One sentence per frame: tokens `[A0, V, V, A1]` so the predicate is pooled
/// from two tokens.
fn frame_sentence(rng: &mut ChaCha8Rng, v: &[f64], a0: &[f64], a1: &[f64]) -> TokenizedSentence {
    let d = v.len();
    let delta = gaussian(rng, d, 0.1);
    let mut rows = Vec::with_capacity(4 * d);
    rows.extend(a0.iter().copied());
    rows.extend(v.iter().zip(&delta).map(|(x, e)| x + e));
    rows.extend(v.iter().zip(&delta).map(|(x, e)| x - e));
    rows.extend(a1.iter().copied());
    let tokens = ["agent", "verb", "verb", "patient"].iter().map(|s| s.to_string()).collect();
    let mut s = TokenizedSentence::new(tokens, vec![SrlFrame { v: vec![1, 2], a0: vec![0], a1: vec![3] }]);
    s.embeddings = Some(Matrix::from_vec(4, d, rows.into_iter().map(f32_round).collect()));
    s
}

fn random_factors(rng: &mut ChaCha8Rng, missing_rate: f64) -> FactorVector {
    FactorVector::new(
        (0..D_FACTOR)
            .map(|_| {
                let v: f64 = rng.sample(StandardNormal);
                (rng.random::<f64>() >= missing_rate).then_some(v)
            })
            .collect(),
    )
}

/// Labeled corpus whose class is an affine function of the predicate
/// features: every frame's `e_V` projects onto a hidden unit direction `w`
/// near `+2`, `0` or `−2` for outperforming, neutral and underperforming.
/// `e_A0` is a linear image of the frame's `e_V` residual, which makes the
/// masked-predicate matching task learnable. Classes are balanced.
pub fn separable_corpus(cfg: &SeparableConfig) -> Vec<NewsEvent> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let d = cfg.d_tok;
    let mut w = gaussian(&mut rng, d, 1.0);
    let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
    w.iter_mut().for_each(|x| *x /= norm);
    let mix: Vec<Vec<f64>> = (0..d).map(|_| gaussian(&mut rng, d, 1.0 / (d as f64).sqrt())).collect();
    let base = at(NaiveDate::from_ymd_opt(2021, 1, 4).expect("valid date"), 9, 31);

    (0..cfg.n_events)
        .map(|i| {
            let class = i % 3;
            let n_frames = rng.random_range(cfg.min_frames..=cfg.max_frames);
            let sentences = (0..n_frames)
                .map(|_| {
                    let mut resid = gaussian(&mut rng, d, 1.0);
                    let along: f64 = resid.iter().zip(&w).map(|(a, b)| a * b).sum();
                    resid.iter_mut().zip(&w).for_each(|(r, wi)| *r -= along * wi);
                    let proj = CLASS_OFFSETS[class] + rng.random_range(-JITTER..JITTER);
                    let v: Vec<f64> = resid.iter().zip(&w).map(|(r, wi)| r + proj * wi).collect();
                    let noise = gaussian(&mut rng, d, 0.1);
                    let a0: Vec<f64> = mix
                        .iter()
                        .zip(&noise)
                        .map(|(row, e)| row.iter().zip(&resid).map(|(m, r)| m * r).sum::<f64>() + e)
                        .collect();
                    let a1 = gaussian(&mut rng, d, 1.0);
                    frame_sentence(&mut rng, &v, &a0, &a1)
                })
                .collect();
            NewsEvent {
                event_id: format!("syn{i:05}"),
                stock_id: format!("{}", 600000 + i % 10),
                published_at: base + Duration::minutes(i as i64),
                sentences,
                factors: random_factors(&mut rng, cfg.missing_factor_rate),
                return_rate: None,
                label: Label::from_index(class),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MarketConfig {
    pub seed: u64,
    pub start: NaiveDate,
    pub n_days: usize,
    pub n_stocks: usize,
    pub events_per_day: usize,
    /// Mean and standard deviation of an event's next-close return.
    pub event_return_mean: f64,
    pub event_return_std: f64,
    /// Total index decline over the period, as a fraction.
    pub index_decline: f64,
    pub d_tok: usize,
}

impl Default for MarketConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            start: NaiveDate::from_ymd_opt(2021, 1, 4).expect("valid date"),
            n_days: 60,
            n_stocks: 30,
            events_per_day: 6,
            event_return_mean: -0.01,
            event_return_std: 0.03,
            index_decline: 0.02,
            d_tok: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarketFixture {
    /// Unlabeled events without return rates, published at 09:45.
    pub events: Vec<NewsEvent>,
    pub prices: BTreeMap<String, PriceSeries>,
    pub index: Vec<DailyBar>,
}

/// Bar times of the fixture's trading day.
pub const BAR_TIMES: [(u32, u32); 5] = [(9, 31), (10, 30), (11, 30), (13, 30), (15, 0)];

pub fn trading_days(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    start.iter_days().filter(|d| !matches!(d.weekday(), Weekday::Sat | Weekday::Sun)).take(n).collect()
}

/// Minute and daily bars for `n_stocks` stocks over `n_days` weekdays, with
/// events placed so that each one's next-close holding window (10:30 bar to
/// the next day's 15:00 bar) earns a return drawn from the configured
/// distribution. A stock has at most one open window at a time.
pub fn market_fixture(cfg: &MarketConfig) -> MarketFixture {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let days = trading_days(cfg.start, cfg.n_days);
    let bars_per_day = BAR_TIMES.len();
    let n_bars = days.len() * bars_per_day;
    let background = Normal::new(0.0003, 0.004).expect("valid normal");
    let event_dist = Normal::new(cfg.event_return_mean, cfg.event_return_std).expect("valid normal");

    let mut steps: Vec<Vec<f64>> =
        (0..cfg.n_stocks).map(|_| (0..n_bars).map(|_| background.sample(&mut rng)).collect()).collect();
    let stock_ids: Vec<String> = (0..cfg.n_stocks).map(|s| format!("{}", 600100 + s)).collect();
    let mut last_event_day: Vec<Option<usize>> = vec![None; cfg.n_stocks];
    let mut events = Vec::new();

    for d in 0..days.len().saturating_sub(1) {
        let mut free: Vec<usize> =
            (0..cfg.n_stocks).filter(|&s| last_event_day[s].is_none_or(|prev| prev + 2 <= d)).collect();
        free.shuffle(&mut rng);
        free.truncate(cfg.events_per_day);
        free.sort_unstable();
        for s in free {
            last_event_day[s] = Some(d);
            let entry = d * bars_per_day + 1;
            let exit = (d + 1) * bars_per_day + bars_per_day - 1;
            let r = event_dist.sample(&mut rng).max(-0.5);
            let window = &mut steps[s][entry + 1..=exit];
            let noise = gaussian(&mut rng, window.len(), cfg.event_return_std / (window.len() as f64).sqrt());
            let shift = ((1.0 + r).ln() - noise.iter().sum::<f64>()) / window.len() as f64;
            for (w, e) in window.iter_mut().zip(noise) {
                *w = e + shift;
            }
            let (v, a0, a1) =
                (gaussian(&mut rng, cfg.d_tok, 1.0), gaussian(&mut rng, cfg.d_tok, 1.0), gaussian(&mut rng, cfg.d_tok, 1.0));
            let sentence = frame_sentence(&mut rng, &v, &a0, &a1);
            events.push(NewsEvent {
                event_id: format!("mkt{:03}-{}", d, stock_ids[s]),
                stock_id: stock_ids[s].clone(),
                published_at: at(days[d], 9, 45),
                sentences: vec![sentence],
                factors: random_factors(&mut rng, 0.0),
                return_rate: None,
                label: None,
            });
        }
    }

    let mut prices = BTreeMap::new();
    for (s, id) in stock_ids.iter().enumerate() {
        let start_price = 10.0 * (0.3 * rng.sample::<f64, _>(StandardNormal)).exp();
        let mut log_p = start_price.ln();
        let mut prev_close = start_price;
        let mut minute = Vec::with_capacity(n_bars);
        for (k, step) in steps[s].iter().enumerate() {
            log_p += step;
            let close = log_p.exp();
            let (h, m) = BAR_TIMES[k % bars_per_day];
            minute.push(MinuteBar {
                timestamp: at(days[k / bars_per_day], h, m),
                open: prev_close,
                high: prev_close.max(close) * 1.001,
                low: prev_close.min(close) * 0.999,
                close,
                volume: 1000.0 + k as f64,
            });
            prev_close = close;
        }
        let daily = days
            .iter()
            .enumerate()
            .map(|(d, date)| {
                let bars = &minute[d * bars_per_day..(d + 1) * bars_per_day];
                DailyBar {
                    date: *date,
                    open: bars[0].open,
                    high: bars.iter().map(|b| b.high).fold(f64::MIN, f64::max),
                    low: bars.iter().map(|b| b.low).fold(f64::MAX, f64::min),
                    close: bars[bars_per_day - 1].close,
                    volume: bars.iter().map(|b| b.volume).sum(),
                }
            })
            .collect();
        prices.insert(id.clone(), PriceSeries::new(id.clone(), minute, daily).expect("generated bars are ordered"));
    }

    let last = days.len().saturating_sub(1).max(1) as f64;
    let index = days
        .iter()
        .enumerate()
        .map(|(d, date)| {
            let trend = 1000.0 * (1.0 - cfg.index_decline * d as f64 / last);
            let wiggle = if d == 0 || d + 1 == days.len() { 0.0 } else { 0.002 * (d as f64 * 1.7).sin() };
            let close = trend * (1.0 + wiggle);
            DailyBar { date: *date, open: close, high: close, low: close, close, volume: 0.0 }
        })
        .collect();

    MarketFixture { events, prices, index }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event_data::{compute_returns, ReturnHorizon};
    use crate::features::event_role_features;

    #[test]
    fn separable_corpus_is_balanced_and_separable() {
        let cfg = SeparableConfig { n_events: 300, ..SeparableConfig::default() };
        let events = separable_corpus(&cfg);
        assert_eq!(events.len(), 300);
        let mut counts = [0; 3];
        for e in &events {
            e.validate().unwrap();
            counts[e.label.unwrap().index()] += 1;
        }
        assert_eq!(counts, [100, 100, 100]);
        assert_eq!(separable_corpus(&cfg), events);
        let feats: Vec<_> = events.iter().map(|e| event_role_features(e).unwrap()).collect();
        assert!(feats.iter().all(|f| (2..=6).contains(&f.len())));
        // class means of e_V sit about 2 apart along the hidden direction
        let mut means = vec![vec![0.0; cfg.d_tok]; 3];
        let mut n = [0.0; 3];
        for (e, f) in events.iter().zip(&feats) {
            let c = e.label.unwrap().index();
            for frame in f {
                means[c].iter_mut().zip(&frame.v).for_each(|(m, x)| *m += x);
                n[c] += 1.0;
            }
        }
        let dist = |a: usize, b: usize| {
            means[a].iter().zip(&means[b]).map(|(x, y)| (x / n[a] - y / n[b]).powi(2)).sum::<f64>().sqrt()
        };
        assert!((dist(0, 2) - 4.0).abs() < 0.5, "{}", dist(0, 2));
        assert!((dist(0, 1) - 2.0).abs() < 0.5);
    }

    #[test]
    fn embeddings_are_f32_exact() {
        let events = separable_corpus(&SeparableConfig { n_events: 5, ..SeparableConfig::default() });
        for e in &events {
            for s in &e.sentences {
                for v in s.embeddings.as_ref().unwrap().as_slice() {
                    assert_eq!(*v, *v as f32 as f64);
                }
            }
        }
    }

    #[test]
    fn market_fixture_returns_follow_design() {
        let fx = market_fixture(&MarketConfig::default());
        assert_eq!(fx.index.len(), 60);
        assert!((fx.index[59].close / fx.index[0].close - 0.98).abs() < 1e-12);
        assert_eq!(fx.events.len(), 59 * 6);
        let mut events = fx.events.clone();
        compute_returns(&mut events, &fx.prices, ReturnHorizon::NextClose).unwrap();
        let rs: Vec<f64> = events.iter().map(|e| e.return_rate.unwrap()).collect();
        let mean = rs.iter().sum::<f64>() / rs.len() as f64;
        assert!((mean + 0.01).abs() < 0.006, "mean {mean}");
    }
}
