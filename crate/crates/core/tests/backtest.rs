mod common;

use std::collections::BTreeMap;

use srlp::backtest::{calendar_from_prices, simulate, Direction, StrategyConfig};
use srlp::event_data::{Label, ReturnHorizon};

fn oracle_run(cfg: &StrategyConfig) -> srlp::backtest::BacktestResult {
    let m = common::labeled_market();
    let labels: Vec<Label> = m.events.iter().map(|e| e.label.unwrap()).collect();
    let preds = common::predictions_from(&m.events, &labels);
    simulate(&preds, &m.prices, cfg, &calendar_from_prices(&m.prices)).unwrap()
}

#[test]
fn cash_reconciles_with_trade_ledger() {
    let cfg = StrategyConfig { allow_short: true, ..StrategyConfig::default() };
    let result = oracle_run(&cfg);
    assert!(!result.trades.is_empty());
    for (point, &(date, cash, held)) in result.curve.points.iter().zip(&result.marks) {
        assert_eq!(point.date, date);
        assert!((cash + held - point.equity).abs() < 1e-9);
        // cash = start − capital of every opened position + proceeds of every closed one
        let mut ledger = 1.0;
        for t in &result.trades {
            if t.entry_time.date_naive() <= date {
                ledger -= t.capital;
            }
            if t.exit_time.date_naive() <= date {
                ledger += t.capital * (1.0 + t.net_return);
            }
        }
        assert!((ledger - cash).abs() < 1e-9, "{date}: ledger {ledger} vs cash {cash}");
    }
    let &(_, _, held) = result.marks.last().unwrap();
    assert_eq!(held, 0.0);
}

#[test]
fn higher_costs_never_help() {
    let runs: Vec<_> = [0.0, 10.0, 50.0]
        .into_iter()
        .map(|cost_bps| oracle_run(&StrategyConfig { allow_short: true, cost_bps, ..StrategyConfig::default() }))
        .collect();
    let finals: Vec<f64> = runs.iter().map(|r| *r.curve.equity().last().unwrap()).collect();
    assert!(finals[0] > finals[1] && finals[1] > finals[2], "{finals:?}");
    let by_id = |i: usize| -> BTreeMap<&str, f64> {
        runs[i].trades.iter().map(|t| (t.event_id.as_str(), t.net_return)).collect()
    };
    let (free, cheap, dear) = (by_id(0), by_id(1), by_id(2));
    for (id, r) in &free {
        if let (Some(c), Some(d)) = (cheap.get(id), dear.get(id)) {
            assert!(r > c && c > d, "{id}: {r} {c} {d}");
        }
    }
}

#[test]
fn no_lookahead_across_horizons_and_shorts() {
    let m = common::labeled_market();
    let labels: Vec<Label> = m.events.iter().map(|e| e.label.unwrap()).collect();
    let preds = common::predictions_from(&m.events, &labels);
    let calendar = calendar_from_prices(&m.prices);
    for horizon in [ReturnHorizon::NextClose, ReturnHorizon::Close(3), ReturnHorizon::Minutes(60)] {
        let cfg = StrategyConfig { allow_short: true, horizon, max_positions: 40, ..StrategyConfig::default() };
        let result = simulate(&preds, &m.prices, &cfg, &calendar).unwrap();
        assert!(result.trades.iter().any(|t| t.direction == Direction::Short), "{horizon}");
        assert!(result.trades.iter().any(|t| t.direction == Direction::Long), "{horizon}");
        let violations = common::lookahead_violations(&result, &m.prices);
        assert!(violations.is_empty(), "{horizon}: {violations:?}");
    }
}

#[test]
fn long_only_ignores_underperformers() {
    let result = oracle_run(&StrategyConfig::default());
    let m = common::labeled_market();
    let long_ids: Vec<&str> =
        m.events.iter().filter(|e| e.label == Some(Label::Outperforming)).map(|e| e.event_id.as_str()).collect();
    assert!(result.trades.iter().all(|t| t.direction == Direction::Long));
    assert!(result.trades.iter().all(|t| long_ids.contains(&t.event_id.as_str())));
}
