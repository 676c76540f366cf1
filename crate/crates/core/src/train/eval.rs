use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{event_matrix, Result, TrainError};
use crate::event_data::NewsEvent;
use crate::model::{forward_classify, Checkpoint, N_CLASSES};

/// Index of the first maximum.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate() {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Ground-truth count.
    pub support: usize,
    pub predicted: usize,
}

/// Rows of `confusion` are ground truth, columns predictions. Ratios with a
/// zero denominator count as 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub total: usize,
    pub skipped: usize,
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub micro_f1: f64,
    pub confusion: [[usize; N_CLASSES]; N_CLASSES],
    pub per_class: [ClassMetrics; N_CLASSES],
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

impl EvalReport {
    pub fn from_confusion(confusion: [[usize; N_CLASSES]; N_CLASSES]) -> Self {
        let total: usize = confusion.iter().flatten().sum();
        let tp: usize = (0..N_CLASSES).map(|k| confusion[k][k]).sum();
        let per_class: [ClassMetrics; N_CLASSES] = std::array::from_fn(|k| {
            let support: usize = confusion[k].iter().sum();
            let predicted: usize = (0..N_CLASSES).map(|t| confusion[t][k]).sum();
            let precision = ratio(confusion[k][k], predicted);
            let recall = ratio(confusion[k][k], support);
            ClassMetrics { precision, recall, f1: f1(precision, recall), support, predicted }
        });
        let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / N_CLASSES as f64;
        // single-label: micro precision and recall both reduce to accuracy
        let micro = ratio(tp, total);
        Self {
            total,
            skipped: 0,
            accuracy: micro,
            macro_precision: mean(|c| c.precision),
            macro_recall: mean(|c| c.recall),
            macro_f1: mean(|c| c.f1),
            micro_precision: micro,
            micro_recall: micro,
            micro_f1: f1(micro, micro),
            confusion,
            per_class,
        }
    }

    /// `(truth, prediction)` class indices.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut confusion = [[0; N_CLASSES]; N_CLASSES];
        for (t, p) in pairs {
            confusion[t][p] += 1;
        }
        Self::from_confusion(confusion)
    }
}

/// Argmax predictions on labeled events; events without a complete frame are
/// counted in `skipped`.
pub fn evaluate(checkpoint: &Checkpoint, events: &[NewsEvent]) -> Result<EvalReport> {
    let scaler = checkpoint.scaler.as_ref().ok_or(TrainError::MissingScaler)?;
    let n_max = checkpoint.params.config.n_max;
    let outcomes: Vec<Option<(usize, usize)>> = events
        .par_iter()
        .map(|e| {
            let label = e.label.ok_or_else(|| TrainError::Unlabeled(e.event_id.clone()))?;
            Ok(match event_matrix(e, scaler, n_max)? {
                Some(m) => Some((label.index(), argmax(&forward_classify(&m, &checkpoint.params)?))),
                None => None,
            })
        })
        .collect::<Result<_>>()?;
    let skipped = outcomes.iter().filter(|o| o.is_none()).count();
    let mut report = EvalReport::from_pairs(outcomes.into_iter().flatten());
    report.skipped = skipped;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_correct() {
        let r = EvalReport::from_pairs([(0, 0), (1, 1), (2, 2), (2, 2)]);
        assert_eq!(
            (r.accuracy, r.macro_precision, r.macro_recall, r.macro_f1),
            (1.0, 1.0, 1.0, 1.0)
        );
    }

    #[test]
    fn neutral_all_called_underperforming() {
        let r = EvalReport::from_confusion([[5, 0, 0], [0, 0, 5], [0, 0, 5]]);
        assert_eq!(r.accuracy, 10.0 / 15.0);
        assert_eq!(r.macro_recall, (1.0 + 0.0 + 1.0) / 3.0);
        // precision: class 0 → 1, class 1 → 0/0 → 0, class 2 → 5/10
        assert_eq!(r.macro_precision, (1.0 + 0.0 + 0.5) / 3.0);
        for k in 0..3 {
            assert_eq!(r.per_class[k].support, r.confusion[k].iter().sum::<usize>());
        }
    }

    #[test]
    fn single_class_zero_over_zero() {
        let r = EvalReport::from_pairs([(1, 1); 7]);
        assert_eq!(r.accuracy, 1.0);
        assert!((r.macro_f1 - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.micro_f1, 1.0);
    }

    #[test]
    fn argmax_takes_first_max() {
        assert_eq!(argmax(&[0.2, 0.5, 0.5]), 1);
        assert_eq!(argmax(&[1.0]), 0);
    }
}
