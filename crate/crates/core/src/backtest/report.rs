use std::fmt::Write as _;
use std::path::Path;

use chrono::NaiveDate;

use super::{BacktestError, EquityCurve, EquityPoint, Result, SeriesMetrics, Trade};
use crate::event_data::{format_timestamp, DailyBar};

pub const REPORT_HEADER: &str = "series,annualized_return,max_drawdown,sharpe";

/// Index closes on `dates`, rescaled to start at 1.0.
pub fn index_curve(series: &str, bars: &[DailyBar], dates: &[NaiveDate]) -> Result<EquityCurve> {
    let mut closes = Vec::with_capacity(dates.len());
    for &date in dates {
        let bar = bars
            .binary_search_by(|b| b.date.cmp(&date))
            .map(|i| &bars[i])
            .map_err(|_| BacktestError::MissingDate { series: series.to_string(), date })?;
        closes.push(bar.close);
    }
    let base = *closes.first().ok_or(BacktestError::EmptyCurve)?;
    Ok(EquityCurve {
        points: dates.iter().zip(closes).map(|(&date, c)| EquityPoint { date, equity: c / base }).collect(),
    })
}

/// Metrics for the strategy (row `strategy`) and every index over the
/// strategy's dates.
pub fn benchmark_report(strategy: &EquityCurve, indices: &[(String, Vec<DailyBar>)]) -> Result<Vec<SeriesMetrics>> {
    let dates = strategy.dates();
    let mut rows = vec![SeriesMetrics::of("strategy", strategy)?];
    for (name, bars) in indices {
        rows.push(SeriesMetrics::of(name.clone(), &index_curve(name, bars, &dates)?)?);
    }
    Ok(rows)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| BacktestError::Io { path: path.to_path_buf(), source })
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| BacktestError::Io { path: path.to_path_buf(), source })
}

pub fn report_csv(rows: &[SeriesMetrics]) -> String {
    let mut out = format!("{REPORT_HEADER}\n");
    for r in rows {
        let sharpe = r.sharpe.map(|s| s.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{},{},{}", r.series, r.annualized_return, r.max_drawdown, sharpe);
    }
    out
}

pub fn write_report_csv(path: &Path, rows: &[SeriesMetrics]) -> Result<()> {
    write_file(path, &report_csv(rows))
}

/// One JSON object per series; an undefined Sharpe ratio is `null`.
pub fn write_report_jsonl(path: &Path, rows: &[SeriesMetrics]) -> Result<()> {
    let mut out = String::new();
    for r in rows {
        out.push_str(&serde_json::to_string(r).expect("metrics serialize"));
        out.push('\n');
    }
    write_file(path, &out)
}

pub fn read_report_csv(path: &Path) -> Result<Vec<SeriesMetrics>> {
    let text = read_file(path)?;
    let bad = |line: usize, m: &str| BacktestError::Format { path: path.to_path_buf(), message: format!("line {line}: {m}") };
    let mut lines = text.lines();
    if lines.next() != Some(REPORT_HEADER) {
        return Err(bad(1, "unexpected header"));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(bad(i + 2, "expected 4 fields"));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(i + 2, "bad number"));
            Ok(SeriesMetrics {
                series: f[0].to_string(),
                annualized_return: num(f[1])?,
                max_drawdown: num(f[2])?,
                sharpe: if f[3].is_empty() { None } else { Some(num(f[3])?) },
            })
        })
        .collect()
}

pub fn write_curve_csv(path: &Path, curve: &EquityCurve) -> Result<()> {
    let mut out = String::from("date,equity\n");
    for p in &curve.points {
        let _ = writeln!(out, "{},{}", p.date, p.equity);
    }
    write_file(path, &out)
}

pub fn read_curve_csv(path: &Path) -> Result<EquityCurve> {
    let text = read_file(path)?;
    let bad = |line: usize| BacktestError::Format { path: path.to_path_buf(), message: format!("line {line}: bad row") };
    let mut lines = text.lines();
    if lines.next() != Some("date,equity") {
        return Err(BacktestError::Format { path: path.to_path_buf(), message: "unexpected header".into() });
    }
    let points = lines
        .enumerate()
        .map(|(i, line)| {
            let (d, e) = line.split_once(',').ok_or_else(|| bad(i + 2))?;
            Ok(EquityPoint { date: d.parse().map_err(|_| bad(i + 2))?, equity: e.parse().map_err(|_| bad(i + 2))? })
        })
        .collect::<Result<Vec<_>>>()?;
    if points.windows(2).any(|w| w[1].date <= w[0].date) {
        return Err(BacktestError::Format { path: path.to_path_buf(), message: "dates not increasing".into() });
    }
    Ok(EquityCurve { points })
}

pub fn write_trades_csv(path: &Path, trades: &[Trade]) -> Result<()> {
    let mut out = String::from(
        "event_id,stock_id,direction,signal_time,entry_time,entry_price,exit_time,exit_price,quantity,capital,net_return\n",
    );
    for t in trades {
        let direction = match t.direction {
            super::Direction::Long => "long",
            super::Direction::Short => "short",
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            t.event_id,
            t.stock_id,
            direction,
            format_timestamp(&t.signal_time),
            format_timestamp(&t.entry_time),
            t.entry_price,
            format_timestamp(&t.exit_time),
            t.exit_price,
            t.quantity,
            t.capital,
            t.net_return
        );
    }
    write_file(path, &out)
}

const WIDTH: f64 = 800.0;
const PANEL_HEIGHT: f64 = 220.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 150.0;
const MARGIN_TOP: f64 = 40.0;
const PANEL_GAP: f64 = 60.0;
const PALETTE: [&str; 6] = ["#d62728", "#1f77b4", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

fn drawdown_series(equity: &[f64]) -> Vec<f64> {
    let mut peak = f64::NEG_INFINITY;
    equity
        .iter()
        .map(|&e| {
            peak = peak.max(e);
            e / peak - 1.0
        })
        .collect()
}

fn panel(out: &mut String, title: &str, top: f64, series: &[(&str, Vec<f64>)], dates: &[NaiveDate]) {
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let mut lo = series.iter().flat_map(|(_, v)| v.iter().copied()).fold(0.0f64, f64::min);
    let mut hi = series.iter().flat_map(|(_, v)| v.iter().copied()).fold(0.0f64, f64::max);
    if hi - lo < 1e-12 {
        lo -= 0.01;
        hi += 0.01;
    }
    let n = series.iter().map(|(_, v)| v.len()).max().unwrap_or(0);
    let x = |i: usize| MARGIN_LEFT + if n <= 1 { 0.0 } else { plot_w * i as f64 / (n - 1) as f64 };
    let y = |v: f64| top + PANEL_HEIGHT * (hi - v) / (hi - lo);

    let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" font-size="14">{title}</text>"#, MARGIN_LEFT, top - 10.0);
    let _ = writeln!(
        out,
        r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="#888"/>"##,
        MARGIN_LEFT, top, plot_w, PANEL_HEIGHT
    );
    let _ = writeln!(
        out,
        r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#bbb" stroke-dasharray="4 3"/>"##,
        MARGIN_LEFT,
        y(0.0),
        MARGIN_LEFT + plot_w,
        y(0.0)
    );
    for (v, anchor_y) in [(hi, top + 4.0), (lo, top + PANEL_HEIGHT)] {
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="end">{:.2}%</text>"#,
            MARGIN_LEFT - 6.0,
            anchor_y,
            v * 100.0
        );
    }
    if let (Some(first), Some(last)) = (dates.first(), dates.last()) {
        let base = top + PANEL_HEIGHT + 16.0;
        let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" font-size="11">{first}</text>"#, MARGIN_LEFT, base);
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="end">{last}</text>"#,
            MARGIN_LEFT + plot_w,
            base
        );
    }
    for (k, (name, values)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let points: Vec<String> = values.iter().enumerate().map(|(i, &v)| format!("{:.2},{:.2}", x(i), y(v))).collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            points.join(" ")
        );
        let ly = top + 14.0 + 18.0 * k as f64;
        let lx = WIDTH - MARGIN_RIGHT + 12.0;
        let _ = writeln!(
            out,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-width="2"/>"#,
            lx,
            ly - 4.0,
            lx + 18.0,
            ly - 4.0
        );
        let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" font-size="11">{}</text>"#, lx + 24.0, ly, escape(name));
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Return-rate and drawdown panels for every curve. Output depends only on
/// the inputs.
pub fn render_svg(curves: &[(String, EquityCurve)]) -> String {
    let height = MARGIN_TOP + 2.0 * PANEL_HEIGHT + PANEL_GAP + 40.0;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH:.0}" height="{height:.0}" viewBox="0 0 {WIDTH:.0} {height:.0}" font-family="sans-serif">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let dates = curves.first().map(|(_, c)| c.dates()).unwrap_or_default();
    let returns: Vec<(&str, Vec<f64>)> = curves
        .iter()
        .map(|(n, c)| {
            let eq = c.equity();
            let base = eq.first().copied().unwrap_or(1.0);
            (n.as_str(), eq.iter().map(|e| e / base - 1.0).collect())
        })
        .collect();
    let drawdowns: Vec<(&str, Vec<f64>)> =
        curves.iter().map(|(n, c)| (n.as_str(), drawdown_series(&c.equity()))).collect();
    panel(&mut out, "Return rate", MARGIN_TOP, &returns, &dates);
    panel(&mut out, "Drawdown", MARGIN_TOP + PANEL_HEIGHT + PANEL_GAP, &drawdowns, &dates);
    out.push_str("</svg>\n");
    out
}
