use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Duration, FixedOffset, NaiveDate, Timelike};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{DataError, NewsEvent, PriceSeries, Result};

/// Holding window used both for the return that labels an event and for
/// backtest exits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReturnHorizon {
    /// Close of the trading day after the entry day.
    #[default]
    NextClose,
    /// Close of the k-th trading day after the entry day.
    Close(u32),
    /// First bar at least `m` minutes after entry.
    Minutes(u32),
}

impl fmt::Display for ReturnHorizon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReturnHorizon::NextClose => f.write_str("next-close"),
            ReturnHorizon::Close(k) => write!(f, "close:{k}"),
            ReturnHorizon::Minutes(m) => write!(f, "minutes:{m}"),
        }
    }
}

impl FromStr for ReturnHorizon {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || DataError::InvalidValue { what: "horizon", value: s.to_string() };
        match s.split_once(':') {
            None if s == "next-close" => Ok(ReturnHorizon::NextClose),
            Some(("close", k)) => match k.parse::<u32>() {
                Ok(k) if k >= 1 => Ok(ReturnHorizon::Close(k)),
                _ => Err(bad()),
            },
            Some(("minutes", m)) => match m.parse::<u32>() {
                Ok(m) if m >= 1 => Ok(ReturnHorizon::Minutes(m)),
                _ => Err(bad()),
            },
            _ => Err(bad()),
        }
    }
}

impl Serialize for ReturnHorizon {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for ReturnHorizon {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

impl PriceSeries {
    /// First minute bar at (or, with `strict`, after the minute of) `ts`,
    /// restricted to the same or the next trading day.
    pub fn entry_index(&self, ts: DateTime<FixedOffset>, strict: bool) -> Option<usize> {
        let first = self.minute_bars.first()?;
        let local = ts.with_timezone(first.timestamp.offset());
        let news_day = local.date_naive();
        let days = self.minute_dates();
        let d0_pos = days.partition_point(|d| *d < news_day);
        let d0 = *days.get(d0_pos)?;
        let last_allowed: NaiveDate = if d0 == news_day {
            days.get(d0_pos + 1).copied().unwrap_or(d0)
        } else {
            d0
        };
        let idx = if strict {
            let minute = local.with_second(0).and_then(|t| t.with_nanosecond(0)).unwrap_or(local);
            let next_minute = minute + Duration::minutes(1);
            self.minute_bars.partition_point(|b| b.timestamp < next_minute)
        } else {
            self.minute_bars.partition_point(|b| b.timestamp < ts)
        };
        let bar = self.minute_bars.get(idx)?;
        (bar.date() <= last_allowed).then_some(idx)
    }

    /// Exit bar for a position entered at `entry`.
    pub fn exit_index(&self, entry: usize, horizon: ReturnHorizon) -> Option<usize> {
        let entry_bar = self.minute_bars.get(entry)?;
        match horizon {
            ReturnHorizon::NextClose => self.close_after(entry_bar.date(), 1),
            ReturnHorizon::Close(k) => self.close_after(entry_bar.date(), k as usize),
            ReturnHorizon::Minutes(m) => {
                let target = entry_bar.timestamp + Duration::minutes(m as i64);
                let idx = self.minute_bars.partition_point(|b| b.timestamp < target);
                (idx < self.minute_bars.len()).then_some(idx)
            }
        }
    }

    fn close_after(&self, day: NaiveDate, k: usize) -> Option<usize> {
        let days = self.minute_dates();
        let pos = days.binary_search(&day).ok()?;
        let exit_day = *days.get(pos + k)?;
        self.close_index_on(exit_day)
    }
}

/// `r = (p_exit − p_entry) / p_entry` with entry at the first minute close at
/// or after publication.
pub fn compute_return(event: &NewsEvent, prices: &PriceSeries, horizon: ReturnHorizon) -> Result<f64> {
    let entry = prices
        .entry_index(event.published_at, false)
        .ok_or_else(|| DataError::NoEntryPrice { event_id: event.event_id.clone() })?;
    let exit = prices.exit_index(entry, horizon).ok_or_else(|| DataError::NoExitPrice {
        event_id: event.event_id.clone(),
        horizon: horizon.to_string(),
    })?;
    let p_entry = prices.minute_bars[entry].close;
    let p_exit = prices.minute_bars[exit].close;
    Ok((p_exit - p_entry) / p_entry)
}

/// Fills `return_rate` for every event that lacks one.
pub fn compute_returns(
    events: &mut [NewsEvent],
    prices: &BTreeMap<String, PriceSeries>,
    horizon: ReturnHorizon,
) -> Result<()> {
    for event in events.iter_mut().filter(|e| e.return_rate.is_none()) {
        let series = prices.get(&event.stock_id).ok_or_else(|| DataError::MissingPrices(event.stock_id.clone()))?;
        event.return_rate = Some(compute_return(event, series, horizon)?);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::super::test_support::{event, ts};
    use super::super::MinuteBar;
    use super::*;

    fn bar(t: &str, close: f64) -> MinuteBar {
        MinuteBar { timestamp: ts(t), open: close, high: close, low: close, close, volume: 1.0 }
    }

    fn series() -> PriceSeries {
        PriceSeries::new(
            "600000",
            vec![
                bar("2021-01-04T09:31:00+08:00", 9.80),
                bar("2021-01-04T14:59:00+08:00", 10.00),
                bar("2021-01-04T15:00:00+08:00", 10.10),
                bar("2021-01-05T09:31:00+08:00", 10.20),
                bar("2021-01-05T15:00:00+08:00", 10.45),
                bar("2021-01-06T09:31:00+08:00", 10.30),
                bar("2021-01-06T15:00:00+08:00", 11.00),
            ],
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn horizon_parsing() {
        assert_eq!("next-close".parse::<ReturnHorizon>().unwrap(), ReturnHorizon::NextClose);
        assert_eq!("close:3".parse::<ReturnHorizon>().unwrap(), ReturnHorizon::Close(3));
        assert_eq!("minutes:30".parse::<ReturnHorizon>().unwrap(), ReturnHorizon::Minutes(30));
        assert!("close:0".parse::<ReturnHorizon>().is_err());
        assert!("weekly".parse::<ReturnHorizon>().is_err());
        for h in [ReturnHorizon::NextClose, ReturnHorizon::Close(2), ReturnHorizon::Minutes(5)] {
            assert_eq!(h.to_string().parse::<ReturnHorizon>().unwrap(), h);
        }
    }

    #[test]
    fn news_at_1459_exits_next_day_close() {
        // entry: 14:59 close 10.00; exit: 2021-01-05 last bar 10.45
        let e = event("e", "2021-01-04T14:59:00+08:00", None);
        let r = compute_return(&e, &series(), ReturnHorizon::NextClose).unwrap();
        assert!((r - 0.045).abs() < 1e-12, "{r}");
    }

    #[test]
    fn identity_and_analytic_cases() {
        let flat = PriceSeries::new(
            "s",
            vec![bar("2021-01-04T10:00:00+08:00", 10.0), bar("2021-01-05T15:00:00+08:00", 10.0)],
            vec![],
        )
        .unwrap();
        let e = event("e", "2021-01-04T09:45:00+08:00", None);
        assert_eq!(compute_return(&e, &flat, ReturnHorizon::NextClose).unwrap(), 0.0);

        let up = PriceSeries::new(
            "s",
            vec![bar("2021-01-04T10:00:00+08:00", 10.0), bar("2021-01-05T15:00:00+08:00", 11.0)],
            vec![],
        )
        .unwrap();
        assert!((compute_return(&e, &up, ReturnHorizon::NextClose).unwrap() - 0.10).abs() < 1e-15);
    }

    #[test]
    fn off_hours_news_enters_next_trading_day() {
        let e = event("e", "2021-01-04T20:00:00+08:00", None);
        // entry 2021-01-05 09:31 @ 10.20, exit 2021-01-06 close @ 11.00
        let r = compute_return(&e, &series(), ReturnHorizon::NextClose).unwrap();
        assert!((r - (11.0 - 10.2) / 10.2).abs() < 1e-12);
    }

    #[test]
    fn other_horizons() {
        let e = event("e", "2021-01-04T09:31:00+08:00", None);
        let r = compute_return(&e, &series(), ReturnHorizon::Close(2)).unwrap();
        assert!((r - (11.0 - 9.8) / 9.8).abs() < 1e-12);
        let r = compute_return(&e, &series(), ReturnHorizon::Minutes(60)).unwrap();
        assert!((r - (10.0 - 9.8) / 9.8).abs() < 1e-12);
    }

    #[test]
    fn missing_bars_are_errors() {
        let late = event("late", "2021-01-07T09:00:00+08:00", None);
        assert!(matches!(
            compute_return(&late, &series(), ReturnHorizon::NextClose),
            Err(DataError::NoEntryPrice { .. })
        ));
        let last_day = event("edge", "2021-01-06T10:00:00+08:00", None);
        assert!(matches!(
            compute_return(&last_day, &series(), ReturnHorizon::NextClose),
            Err(DataError::NoExitPrice { .. })
        ));
        let stale = PriceSeries::new(
            "s",
            vec![
                bar("2021-01-04T10:00:00+08:00", 1.0),
                bar("2021-01-05T10:00:00+08:00", 1.0),
                bar("2021-01-06T10:00:00+08:00", 1.0),
            ],
            vec![],
        )
        .unwrap();
        // published after the 2021-01-04 bars; the next day is allowed, not the one after
        let e = event("e", "2021-01-04T11:00:00+08:00", None);
        assert_eq!(stale.entry_index(e.published_at, false), Some(1));
        let e = event("e", "2021-01-05T11:00:00+08:00", None);
        assert_eq!(stale.entry_index(e.published_at, false), Some(2));
    }

    #[test]
    fn strict_entry_skips_the_news_minute() {
        let s = series();
        let t = ts("2021-01-04T14:59:30+08:00");
        assert_eq!(s.entry_index(t, true), Some(2));
        assert_eq!(s.entry_index(ts("2021-01-04T14:59:00+08:00"), true), Some(2));
        assert_eq!(s.entry_index(ts("2021-01-04T14:59:00+08:00"), false), Some(1));
    }
}
