use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DataError, NewsEvent, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum SplitScheme {
    /// Seeded uniform 80/10/10 split.
    InDistribution { seed: u64 },
    /// Train before `cutoff`, test at or after it (local publication date).
    OutOfDistribution { cutoff: NaiveDate },
}

impl Default for SplitScheme {
    fn default() -> Self {
        SplitScheme::InDistribution { seed: 7 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Split {
    InDistribution { train: Vec<NewsEvent>, validation: Vec<NewsEvent>, test: Vec<NewsEvent> },
    OutOfDistribution { train: Vec<NewsEvent>, ood_test: Vec<NewsEvent> },
}

impl Split {
    pub fn train(&self) -> &[NewsEvent] {
        match self {
            Split::InDistribution { train, .. } | Split::OutOfDistribution { train, .. } => train,
        }
    }

    pub fn test(&self) -> &[NewsEvent] {
        match self {
            Split::InDistribution { test, .. } => test,
            Split::OutOfDistribution { ood_test, .. } => ood_test,
        }
    }

    /// `(name, events)` for every partition.
    pub fn partitions(&self) -> Vec<(&'static str, &[NewsEvent])> {
        match self {
            Split::InDistribution { train, validation, test } => {
                vec![("train", train), ("validation", validation), ("test", test)]
            }
            Split::OutOfDistribution { train, ood_test } => vec![("train", train), ("ood_test", ood_test)],
        }
    }
}

/// Partitions keep the corpus order of their members.
pub fn split_dataset(events: Vec<NewsEvent>, scheme: &SplitScheme) -> Result<Split> {
    let split = match scheme {
        SplitScheme::InDistribution { seed } => {
            let n = events.len();
            let n_train = n * 8 / 10;
            let n_val = (n - n_train) / 2;
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(*seed));
            let mut part = vec![0u8; n];
            for (rank, &idx) in order.iter().enumerate() {
                part[idx] = if rank < n_train {
                    0
                } else if rank < n_train + n_val {
                    1
                } else {
                    2
                };
            }
            let (mut train, mut validation, mut test) = (Vec::new(), Vec::new(), Vec::new());
            for (event, p) in events.into_iter().zip(part) {
                match p {
                    0 => train.push(event),
                    1 => validation.push(event),
                    _ => test.push(event),
                }
            }
            Split::InDistribution { train, validation, test }
        }
        SplitScheme::OutOfDistribution { cutoff } => {
            let (ood_test, train) = events.into_iter().partition(|e| e.published_at.date_naive() >= *cutoff);
            Split::OutOfDistribution { train, ood_test }
        }
    };
    for (name, part) in split.partitions() {
        if part.is_empty() {
            return Err(DataError::EmptyPartition(name));
        }
    }
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::super::test_support::event;
    use super::*;
    use std::collections::HashSet;

    fn corpus(n: usize) -> Vec<NewsEvent> {
        (0..n).map(|i| event(&format!("e{i:03}"), "2020-06-01T10:00:00+08:00", Some(0.0))).collect()
    }

    fn ids(v: &[NewsEvent]) -> Vec<String> {
        v.iter().map(|e| e.event_id.clone()).collect()
    }

    #[test]
    fn in_distribution_sizes_and_disjointness() {
        let split = split_dataset(corpus(100), &SplitScheme::InDistribution { seed: 7 }).unwrap();
        let Split::InDistribution { train, validation, test } = &split else { panic!() };
        assert_eq!((train.len(), validation.len(), test.len()), (80, 10, 10));
        let mut all = HashSet::new();
        for part in [train, validation, test] {
            for id in ids(part) {
                assert!(all.insert(id));
            }
        }
        assert_eq!(all.len(), 100);
    }

    #[test]
    fn same_seed_same_split() {
        let a = split_dataset(corpus(57), &SplitScheme::InDistribution { seed: 7 }).unwrap();
        let b = split_dataset(corpus(57), &SplitScheme::InDistribution { seed: 7 }).unwrap();
        assert_eq!(a, b);
        let c = split_dataset(corpus(57), &SplitScheme::InDistribution { seed: 8 }).unwrap();
        assert_ne!(ids(a.train()), ids(c.train()));
    }

    #[test]
    fn ood_split_follows_dates() {
        let stamps = [
            "2020-12-31T14:00:00+08:00",
            "2020-12-31T23:59:00+08:00",
            "2021-01-01T00:00:00+08:00",
            "2021-01-04T09:31:00+08:00",
            "2019-05-05T09:31:00+08:00",
        ];
        let events: Vec<_> = stamps.iter().enumerate().map(|(i, t)| event(&format!("e{i}"), t, None)).collect();
        let cutoff = NaiveDate::from_ymd_opt(2021, 1, 1).unwrap();
        let split = split_dataset(events.clone(), &SplitScheme::OutOfDistribution { cutoff }).unwrap();
        for e in &events {
            let in_test = split.test().iter().any(|x| x.event_id == e.event_id);
            assert_eq!(in_test, e.published_at.date_naive() >= cutoff, "{}", e.event_id);
        }
    }

    #[test]
    fn empty_partition_is_named() {
        let err = split_dataset(corpus(3), &SplitScheme::InDistribution { seed: 1 }).unwrap_err();
        assert!(matches!(err, DataError::EmptyPartition("validation")), "{err}");
        let cutoff = NaiveDate::from_ymd_opt(2030, 1, 1).unwrap();
        let err = split_dataset(corpus(5), &SplitScheme::OutOfDistribution { cutoff }).unwrap_err();
        assert!(matches!(err, DataError::EmptyPartition("ood_test")));
    }
}
