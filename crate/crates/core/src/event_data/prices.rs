//! OHLCV price series read from per-stock CSV files.
//!
//! A price directory holds `minute/<stock>.csv` and `daily/<stock>.csv`; both
//! use the columns `timestamp,open,high,low,close,volume`. Daily timestamps
//! may be plain dates.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{DateTime, FixedOffset, NaiveDate};
use serde::{Deserialize, Serialize};

use super::{format_timestamp, parse_timestamp, DataError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinuteBar {
    pub timestamp: DateTime<FixedOffset>,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume: f64,
}

impl MinuteBar {
    /// Trading date in the bar's own offset.
    pub fn date(&self) -> NaiveDate {
        self.timestamp.date_naive()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DailyBar {
    pub date: NaiveDate,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PriceSeries {
    pub stock_id: String,
    pub minute_bars: Vec<MinuteBar>,
    pub daily_bars: Vec<DailyBar>,
}

impl PriceSeries {
    pub fn new(stock_id: impl Into<String>, minute_bars: Vec<MinuteBar>, daily_bars: Vec<DailyBar>) -> Result<Self> {
        let series = Self { stock_id: stock_id.into(), minute_bars, daily_bars };
        series.validate()?;
        Ok(series)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |row: usize, message: String| DataError::MalformedPrice { path: self.stock_id.clone(), row, message };
        for (i, w) in self.minute_bars.windows(2).enumerate() {
            if w[1].timestamp <= w[0].timestamp {
                return Err(bad(i + 2, "minute timestamps not strictly increasing".into()));
            }
        }
        for (i, w) in self.daily_bars.windows(2).enumerate() {
            if w[1].date <= w[0].date {
                return Err(bad(i + 2, "daily dates not strictly increasing".into()));
            }
        }
        for (i, b) in self.minute_bars.iter().enumerate() {
            check_prices(b.open, b.high, b.low, b.close).map_err(|m| bad(i + 1, m))?;
        }
        for (i, b) in self.daily_bars.iter().enumerate() {
            check_prices(b.open, b.high, b.low, b.close).map_err(|m| bad(i + 1, m))?;
        }
        Ok(())
    }

    /// Distinct trading dates of the minute bars, ascending.
    pub fn minute_dates(&self) -> Vec<NaiveDate> {
        let mut days: Vec<NaiveDate> = self.minute_bars.iter().map(MinuteBar::date).collect();
        days.dedup();
        days
    }

    /// Index of the last minute bar on `date`.
    pub fn close_index_on(&self, date: NaiveDate) -> Option<usize> {
        let end = self.minute_bars.partition_point(|b| b.date() <= date);
        (end > 0 && self.minute_bars[end - 1].date() == date).then(|| end - 1)
    }

    /// Close of the last minute bar dated on or before `date`.
    pub fn last_close_on_or_before(&self, date: NaiveDate) -> Option<f64> {
        let end = self.minute_bars.partition_point(|b| b.date() <= date);
        (end > 0).then(|| self.minute_bars[end - 1].close)
    }
}

fn check_prices(open: f64, high: f64, low: f64, close: f64) -> std::result::Result<(), String> {
    for (name, v) in [("open", open), ("high", high), ("low", low), ("close", close)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(format!("{name} price {v} is not positive"));
        }
    }
    Ok(())
}

pub const PRICE_HEADER: [&str; 6] = ["timestamp", "open", "high", "low", "close", "volume"];

#[derive(Debug, Deserialize, Serialize)]
struct BarRow {
    timestamp: String,
    open: f64,
    high: f64,
    low: f64,
    close: f64,
    volume: f64,
}

fn read_rows(path: &Path) -> Result<Vec<BarRow>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_err(path, 0, e))?;
    reader
        .deserialize()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| csv_err(path, i + 1, e)))
        .collect()
}

fn csv_err(path: &Path, row: usize, e: csv::Error) -> DataError {
    DataError::MalformedPrice { path: path.display().to_string(), row, message: e.to_string() }
}

pub fn read_minute_bars(path: &Path) -> Result<Vec<MinuteBar>> {
    read_rows(path)?
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            let timestamp = parse_timestamp(&r.timestamp).map_err(|e| DataError::MalformedPrice {
                path: path.display().to_string(),
                row: i + 1,
                message: e.to_string(),
            })?;
            Ok(MinuteBar { timestamp, open: r.open, high: r.high, low: r.low, close: r.close, volume: r.volume })
        })
        .collect()
}

pub fn read_daily_bars(path: &Path) -> Result<Vec<DailyBar>> {
    read_rows(path)?
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            let date = parse_date_or_timestamp(&r.timestamp).ok_or_else(|| DataError::MalformedPrice {
                path: path.display().to_string(),
                row: i + 1,
                message: format!("unparseable date {:?}", r.timestamp),
            })?;
            Ok(DailyBar { date, open: r.open, high: r.high, low: r.low, close: r.close, volume: r.volume })
        })
        .collect()
}

fn parse_date_or_timestamp(s: &str) -> Option<NaiveDate> {
    let s = s.trim();
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .or_else(|| parse_timestamp(s).ok().map(|t| t.date_naive()))
}

pub fn write_minute_bars(path: &Path, bars: &[MinuteBar]) -> Result<()> {
    let rows = bars.iter().map(|b| BarRow {
        timestamp: format_timestamp(&b.timestamp),
        open: b.open,
        high: b.high,
        low: b.low,
        close: b.close,
        volume: b.volume,
    });
    write_rows(path, rows)
}

pub fn write_daily_bars(path: &Path, bars: &[DailyBar]) -> Result<()> {
    let rows = bars.iter().map(|b| BarRow {
        timestamp: b.date.format("%Y-%m-%d").to_string(),
        open: b.open,
        high: b.high,
        low: b.low,
        close: b.close,
        volume: b.volume,
    });
    write_rows(path, rows)
}

fn write_rows(path: &Path, rows: impl Iterator<Item = BarRow>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path).map_err(|e| csv_err(path, 0, e))?;
    w.write_record(PRICE_HEADER).map_err(|e| csv_err(path, 0, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| csv_err(path, 0, e))?;
    }
    w.flush().map_err(|source| DataError::Io { path: path.display().to_string(), source })
}

/// Loads every `minute/*.csv` and `daily/*.csv` under `dir`, keyed by file stem.
pub fn load_price_dir(dir: &Path) -> Result<BTreeMap<String, PriceSeries>> {
    let mut out: BTreeMap<String, PriceSeries> = BTreeMap::new();
    for (sub, minute) in [("minute", true), ("daily", false)] {
        let sub_dir = dir.join(sub);
        if !sub_dir.is_dir() {
            continue;
        }
        let entries = std::fs::read_dir(&sub_dir)
            .map_err(|source| DataError::Io { path: sub_dir.display().to_string(), source })?;
        let mut paths: Vec<_> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .collect();
        paths.sort();
        for path in paths {
            let stock = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            let series = out.entry(stock.clone()).or_insert_with(|| PriceSeries { stock_id: stock, ..Default::default() });
            if minute {
                series.minute_bars = read_minute_bars(&path)?;
            } else {
                series.daily_bars = read_daily_bars(&path)?;
            }
        }
    }
    for series in out.values() {
        series.validate()?;
    }
    Ok(out)
}
