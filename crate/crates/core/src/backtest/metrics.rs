use serde::{Deserialize, Serialize};

use super::{BacktestError, EquityCurve, Result};

pub const TRADING_DAYS_PER_YEAR: f64 = 252.0;

/// `min_t equity_t / max_{s≤t} equity_s − 1`.
pub fn max_drawdown(equity: &[f64]) -> Result<f64> {
    let first = *equity.first().ok_or(BacktestError::EmptyCurve)?;
    let mut peak = first;
    let mut worst = 0.0f64;
    for &e in equity {
        if e > peak {
            peak = e;
        }
        worst = worst.min(e / peak - 1.0);
    }
    Ok(worst)
}

/// `(end/start)^(days_per_year/d) − 1` with `d` the number of daily steps.
pub fn annualized_return(equity: &[f64], days_per_year: f64) -> Result<f64> {
    if equity.len() < 2 {
        return Err(BacktestError::TooFewSamples { needed: 2, found: equity.len() });
    }
    let d = (equity.len() - 1) as f64;
    Ok((equity[equity.len() - 1] / equity[0]).powf(days_per_year / d) - 1.0)
}

/// Simple returns between consecutive samples.
pub fn daily_returns(equity: &[f64]) -> Vec<f64> {
    equity.windows(2).map(|w| w[1] / w[0] - 1.0).collect()
}

/// Mean excess return over its sample standard deviation, times `√252`.
pub fn sharpe(returns: &[f64], risk_free_daily: f64) -> Result<f64> {
    if returns.len() < 2 {
        return Err(BacktestError::TooFewSamples { needed: 2, found: returns.len() });
    }
    let n = returns.len() as f64;
    let excess: Vec<f64> = returns.iter().map(|r| r - risk_free_daily).collect();
    let mean = excess.iter().sum::<f64>() / n;
    let var = excess.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    if var == 0.0 {
        return Err(BacktestError::NotDefined("sharpe ratio of zero-variance returns".into()));
    }
    Ok(mean / var.sqrt() * TRADING_DAYS_PER_YEAR.sqrt())
}

/// The three headline metrics. `sharpe` is `None` where it is undefined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesMetrics {
    pub series: String,
    pub annualized_return: f64,
    pub max_drawdown: f64,
    pub sharpe: Option<f64>,
}

impl SeriesMetrics {
    pub fn of(series: impl Into<String>, curve: &EquityCurve) -> Result<Self> {
        let equity = curve.equity();
        let sharpe = match sharpe(&daily_returns(&equity), 0.0) {
            Ok(s) => Some(s),
            Err(BacktestError::NotDefined(_) | BacktestError::TooFewSamples { .. }) => None,
            Err(e) => return Err(e),
        };
        Ok(Self {
            series: series.into(),
            annualized_return: annualized_return(&equity, TRADING_DAYS_PER_YEAR)?,
            max_drawdown: max_drawdown(&equity)?,
            sharpe,
        })
    }
}
