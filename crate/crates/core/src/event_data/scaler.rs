use serde::{Deserialize, Serialize};

use super::{DataError, FactorVector, NewsEvent, Result};

/// Per-factor z-scoring with statistics from the training split only.
/// Missing raw values are imputed with the training mean, so they scale to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorScaler {
    dim: usize,
    stats: Option<Stats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Stats {
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl FactorScaler {
    pub fn unfitted(dim: usize) -> Self {
        Self { dim, stats: None }
    }

    pub fn from_stats(mean: Vec<f64>, std: Vec<f64>) -> Self {
        assert_eq!(mean.len(), std.len());
        Self { dim: mean.len(), stats: Some(Stats { mean, std }) }
    }

    /// Population mean and standard deviation over present values.
    pub fn fit(train: &[NewsEvent]) -> Result<Self> {
        let first = train.first().ok_or(DataError::EmptyPartition("train"))?;
        Self::fit_vectors(first.factors.len(), train.iter().map(|e| &e.factors))
    }

    pub fn fit_vectors<'a>(dim: usize, rows: impl Iterator<Item = &'a FactorVector>) -> Result<Self> {
        let mut sum = vec![0.0; dim];
        let mut count = vec![0usize; dim];
        let rows: Vec<&FactorVector> = rows.collect();
        for row in &rows {
            if row.len() != dim {
                return Err(DataError::FactorLength { expected: dim, found: row.len() });
            }
            for (j, v) in row.values.iter().enumerate() {
                if let Some(v) = v {
                    sum[j] += v;
                    count[j] += 1;
                }
            }
        }
        let mean: Vec<f64> = sum.iter().zip(&count).map(|(s, &c)| if c == 0 { 0.0 } else { s / c as f64 }).collect();
        let mut sq = vec![0.0; dim];
        for row in &rows {
            for (j, v) in row.values.iter().enumerate() {
                if let Some(v) = v {
                    sq[j] += (v - mean[j]).powi(2);
                }
            }
        }
        let std = sq.iter().zip(&count).map(|(s, &c)| if c == 0 { 0.0 } else { (s / c as f64).sqrt() }).collect();
        Ok(Self::from_stats(mean, std))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_fitted(&self) -> bool {
        self.stats.is_some()
    }

    pub fn mean(&self) -> Option<&[f64]> {
        self.stats.as_ref().map(|s| s.mean.as_slice())
    }

    pub fn std(&self) -> Option<&[f64]> {
        self.stats.as_ref().map(|s| s.std.as_slice())
    }

    /// Scaled dense values; zero-variance factors map to 0.
    pub fn transform(&self, factors: &FactorVector) -> Result<Vec<f64>> {
        let stats = self.stats.as_ref().ok_or(DataError::ScalerNotFitted)?;
        if factors.len() != self.dim {
            return Err(DataError::FactorLength { expected: self.dim, found: factors.len() });
        }
        Ok(factors
            .values
            .iter()
            .enumerate()
            .map(|(j, v)| {
                let raw = v.unwrap_or(stats.mean[j]);
                if stats.std[j] == 0.0 {
                    0.0
                } else {
                    (raw - stats.mean[j]) / stats.std[j]
                }
            })
            .collect())
    }

    /// Replaces every event's factors with scaled values; returns the number of
    /// imputed entries.
    pub fn apply(&self, events: &mut [NewsEvent]) -> Result<usize> {
        let mut imputed = 0;
        for e in events.iter_mut() {
            imputed += e.factors.missing_count();
            e.factors = FactorVector::dense(&self.transform(&e.factors)?);
        }
        Ok(imputed)
    }
}
