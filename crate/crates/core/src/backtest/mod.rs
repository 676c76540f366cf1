//! Event-driven trading simulation over prediction signals.
//!
//! Fills happen at bar closes. Within a timestamp exits settle before
//! entries, and the portfolio is marked at the close of every calendar day.

mod metrics;
mod report;

use std::collections::BTreeMap;
use std::path::PathBuf;

use chrono::{DateTime, FixedOffset, NaiveDate};
use log::info;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event_data::{DataError, Label, PriceSeries, ReturnHorizon};
use crate::train::Prediction;

pub use metrics::{annualized_return, daily_returns, max_drawdown, sharpe, SeriesMetrics, TRADING_DAYS_PER_YEAR};
pub use report::{
    benchmark_report, index_curve, read_curve_csv, read_report_csv, render_svg, write_curve_csv, write_report_csv,
    write_report_jsonl, write_trades_csv, REPORT_HEADER,
};

#[derive(Debug, Error)]
pub enum BacktestError {
    #[error("invalid strategy config: {0}")]
    InvalidConfig(String),
    #[error("equity curve is empty")]
    EmptyCurve,
    #[error("need at least {needed} samples, found {found}")]
    TooFewSamples { needed: usize, found: usize },
    #[error("not defined: {0}")]
    NotDefined(String),
    #[error("ruin on {date}: equity {equity}")]
    Ruin { date: NaiveDate, equity: f64 },
    #[error("series {series} has no close on {date}")]
    MissingDate { series: String, date: NaiveDate },
    #[error("trading calendar is empty")]
    EmptyCalendar,
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Data(#[from] DataError),
}

pub type Result<T, E = BacktestError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrategyConfig {
    pub allow_short: bool,
    pub horizon: ReturnHorizon,
    /// Share of equity committed to each new position.
    pub position_fraction: f64,
    pub max_positions: usize,
    /// Transaction cost per side, basis points.
    pub cost_bps: f64,
    /// Minimum predicted-class probability to act on a signal.
    pub confidence_threshold: f64,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        Self {
            allow_short: false,
            horizon: ReturnHorizon::NextClose,
            position_fraction: 0.1,
            max_positions: 10,
            cost_bps: 10.0,
            confidence_threshold: 0.0,
        }
    }
}

impl StrategyConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(BacktestError::InvalidConfig(m.to_string()));
        if !(self.position_fraction > 0.0 && self.position_fraction <= 1.0) {
            return bad("position_fraction must be in (0, 1]");
        }
        if self.max_positions == 0 {
            return bad("max_positions must be positive");
        }
        if !(self.cost_bps >= 0.0 && self.cost_bps < 10_000.0) {
            return bad("cost_bps must be in [0, 10000)");
        }
        if !(0.0..=1.0).contains(&self.confidence_threshold) {
            return bad("confidence_threshold must be in [0, 1]");
        }
        Ok(())
    }

    fn cost(&self) -> f64 {
        self.cost_bps / 10_000.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Long,
    Short,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trade {
    pub event_id: String,
    pub stock_id: String,
    pub direction: Direction,
    pub signal_time: DateTime<FixedOffset>,
    pub entry_time: DateTime<FixedOffset>,
    pub entry_price: f64,
    pub exit_time: DateTime<FixedOffset>,
    pub exit_price: f64,
    /// Shares held (long) or sold short.
    pub quantity: f64,
    /// Capital committed at entry, costs included.
    pub capital: f64,
    /// Net of both sides' costs, relative to `capital`.
    pub net_return: f64,
}

/// Value of a position opened with `capital` at `entry`, marked at `price`.
/// The entry cost is always deducted; the exit cost only when `closing`.
pub fn position_value(direction: Direction, capital: f64, entry: f64, price: f64, cost: f64, closing: bool) -> f64 {
    let q = capital * (1.0 - cost) / entry;
    let exit_cost = if closing { cost } else { 0.0 };
    match direction {
        Direction::Long => q * price * (1.0 - exit_cost),
        Direction::Short => q * (2.0 * entry - price) - q * price * exit_cost,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquityPoint {
    pub date: NaiveDate,
    pub equity: f64,
}

/// Daily-close equity samples with strictly increasing dates.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EquityCurve {
    pub points: Vec<EquityPoint>,
}

impl EquityCurve {
    pub fn flat(dates: &[NaiveDate]) -> Self {
        Self { points: dates.iter().map(|&date| EquityPoint { date, equity: 1.0 }).collect() }
    }

    pub fn equity(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.equity).collect()
    }

    pub fn dates(&self) -> Vec<NaiveDate> {
        self.points.iter().map(|p| p.date).collect()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedSignal {
    pub event_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BacktestResult {
    pub trades: Vec<Trade>,
    pub curve: EquityCurve,
    pub skipped: Vec<SkippedSignal>,
    /// `(date, cash, Σ position values)` at each mark.
    pub marks: Vec<(NaiveDate, f64, f64)>,
}

/// Union of the minute-bar dates of every series.
pub fn calendar_from_prices(prices: &BTreeMap<String, PriceSeries>) -> Vec<NaiveDate> {
    let mut days: Vec<NaiveDate> = prices.values().flat_map(|p| p.minute_dates()).collect();
    days.sort_unstable();
    days.dedup();
    days
}

struct Planned<'a> {
    pred: &'a Prediction,
    direction: Direction,
    series: &'a PriceSeries,
    entry: usize,
    exit: usize,
}

struct Open<'a> {
    plan: Planned<'a>,
    capital: f64,
}

/// Runs the strategy over `predictions` (any order; processed by
/// publication time, then event id). Unactionable signals are skipped with a
/// reason; only ruin is fatal.
pub fn simulate(
    predictions: &[Prediction],
    prices: &BTreeMap<String, PriceSeries>,
    cfg: &StrategyConfig,
    calendar: &[NaiveDate],
) -> Result<BacktestResult> {
    cfg.validate()?;
    if calendar.is_empty() {
        return Err(BacktestError::EmptyCalendar);
    }
    let (first_day, last_day) = (calendar[0], calendar[calendar.len() - 1]);
    let cost = cfg.cost();
    let mut result = BacktestResult::default();
    let mut skipped = Vec::new();
    let mut skip = |p: &Prediction, reason: String| {
        info!("signal {} skipped: {reason}", p.event_id);
        skipped.push(SkippedSignal { event_id: p.event_id.clone(), reason });
    };

    let mut ordered: Vec<&Prediction> = predictions.iter().collect();
    ordered.sort_by(|a, b| a.published_at.cmp(&b.published_at).then_with(|| a.event_id.cmp(&b.event_id)));

    let mut plans: Vec<Planned> = Vec::new();
    for p in ordered {
        let direction = match p.label {
            Label::Outperforming => Direction::Long,
            Label::Underperforming if cfg.allow_short => Direction::Short,
            _ => continue,
        };
        if p.confidence() < cfg.confidence_threshold {
            skip(p, format!("confidence {} below threshold", p.confidence()));
            continue;
        }
        let Some(series) = prices.get(&p.stock_id) else {
            skip(p, format!("no price series for stock {}", p.stock_id));
            continue;
        };
        let Some(entry) = series.entry_index(p.published_at, true) else {
            skip(p, "no entry bar after the signal minute".into());
            continue;
        };
        let Some(exit) = series.exit_index(entry, cfg.horizon) else {
            skip(p, format!("no exit bar for horizon {}", cfg.horizon));
            continue;
        };
        let (entry_day, exit_day) = (series.minute_bars[entry].date(), series.minute_bars[exit].date());
        if entry_day < first_day || exit_day > last_day || exit <= entry {
            skip(p, "holding window outside the calendar".into());
            continue;
        }
        plans.push(Planned { pred: p, direction, series, entry, exit });
    }
    plans.sort_by(|a, b| {
        let ta = a.series.minute_bars[a.entry].timestamp;
        let tb = b.series.minute_bars[b.entry].timestamp;
        ta.cmp(&tb)
            .then_with(|| a.pred.published_at.cmp(&b.pred.published_at))
            .then_with(|| a.pred.event_id.cmp(&b.pred.event_id))
    });

    let mut cash = 1.0;
    let mut marked_equity = 1.0;
    let mut open: Vec<Open> = Vec::new();
    let mut pending = plans.into_iter().peekable();

    let close_position = |pos: Open, cash: &mut f64, trades: &mut Vec<Trade>| {
        let bars = &pos.plan.series.minute_bars;
        let (e, x) = (&bars[pos.plan.entry], &bars[pos.plan.exit]);
        let proceeds = position_value(pos.plan.direction, pos.capital, e.close, x.close, cost, true);
        *cash += proceeds;
        trades.push(Trade {
            event_id: pos.plan.pred.event_id.clone(),
            stock_id: pos.plan.pred.stock_id.clone(),
            direction: pos.plan.direction,
            signal_time: pos.plan.pred.published_at,
            entry_time: e.timestamp,
            entry_price: e.close,
            exit_time: x.timestamp,
            exit_price: x.close,
            quantity: pos.capital * (1.0 - cost) / e.close,
            capital: pos.capital,
            net_return: proceeds / pos.capital - 1.0,
        });
    };

    for &day in calendar {
        // entries dated before the calendar's first day were skipped above
        while let Some(plan) = pending.next_if(|p| p.series.minute_bars[p.entry].date() <= day) {
            let entry_ts = plan.series.minute_bars[plan.entry].timestamp;
            // settle every exit at or before this entry
            let mut i = 0;
            while i < open.len() {
                if open[i].plan.series.minute_bars[open[i].plan.exit].timestamp <= entry_ts {
                    let pos = open.remove(i);
                    close_position(pos, &mut cash, &mut result.trades);
                } else {
                    i += 1;
                }
            }
            let capital = cfg.position_fraction * marked_equity;
            if open.len() >= cfg.max_positions {
                skip(plan.pred, format!("all {} position slots in use", cfg.max_positions));
                continue;
            }
            if capital > cash {
                skip(plan.pred, format!("insufficient cash {cash} for allocation {capital}"));
                continue;
            }
            cash -= capital;
            open.push(Open { plan, capital });
        }
        let mut i = 0;
        while i < open.len() {
            if open[i].plan.series.minute_bars[open[i].plan.exit].date() <= day {
                let pos = open.remove(i);
                close_position(pos, &mut cash, &mut result.trades);
            } else {
                i += 1;
            }
        }
        let held: f64 = open
            .iter()
            .map(|pos| {
                let entry = pos.plan.series.minute_bars[pos.plan.entry].close;
                let price = pos.plan.series.last_close_on_or_before(day).unwrap_or(entry);
                position_value(pos.plan.direction, pos.capital, entry, price, cost, false)
            })
            .sum();
        let equity = cash + held;
        if equity <= 0.0 || !equity.is_finite() {
            return Err(BacktestError::Ruin { date: day, equity });
        }
        marked_equity = equity;
        result.marks.push((day, cash, held));
        result.curve.points.push(EquityPoint { date: day, equity });
    }
    for plan in pending {
        skip(plan.pred, "entry after the calendar end".into());
    }
    result.skipped = skipped;
    result.trades.sort_by(|a, b| a.entry_time.cmp(&b.entry_time).then_with(|| a.event_id.cmp(&b.event_id)));
    Ok(result)
}
