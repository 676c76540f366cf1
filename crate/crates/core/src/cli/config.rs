use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use srlp::backtest::StrategyConfig;
use srlp::event_data::LabelThresholds;
use srlp::train::TrainConfig;

/// Effective configuration of a run. The config file is one flat key/value
/// document; each key is routed to the struct that owns it.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub strategy: StrategyConfig,
    pub labels: LabelThresholds,
}

fn field_names<T: Serialize>(value: &T) -> Vec<String> {
    match serde_json::to_value(value) {
        Ok(serde_json::Value::Object(map)) => map.keys().cloned().collect(),
        _ => Vec::new(),
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                Self::parse(&text).with_context(|| format!("config {}", p.display()))
            }
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let doc: toml::Table = text.parse()?;
        let defaults = Self::default();
        let train_keys = field_names(&defaults.train);
        let strategy_keys = field_names(&defaults.strategy);
        let mut train = toml::Table::new();
        let mut strategy = toml::Table::new();
        let mut labels = toml::Table::try_from(defaults.labels)?;
        for (key, value) in doc {
            if train_keys.contains(&key) {
                train.insert(key, value);
            } else if strategy_keys.contains(&key) {
                strategy.insert(key, value);
            } else if labels.contains_key(&key) {
                labels.insert(key, value);
            } else {
                bail!("unknown config key `{key}`");
            }
        }
        Ok(Self {
            train: toml::Value::Table(train).try_into()?,
            strategy: toml::Value::Table(strategy).try_into()?,
            labels: toml::Value::Table(labels).try_into()?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use srlp::event_data::ReturnHorizon;
    use srlp::features::MaskPreset;

    #[test]
    fn flat_keys_route_to_owners() {
        let cfg = RunConfig::parse(
            "epochs = 3\nalpha = 0.5\nmask_preset = \"uniform\"\nallow_short = true\nhorizon = \"close:2\"\na = 10.0\n",
        )
        .unwrap();
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.train.alpha, 0.5);
        assert_eq!(cfg.train.mask_preset, MaskPreset::Uniform);
        assert!(cfg.strategy.allow_short);
        assert_eq!(cfg.strategy.horizon, ReturnHorizon::Close(2));
        assert_eq!(cfg.labels, LabelThresholds { a: 10.0, ..Default::default() });
    }

    #[test]
    fn unknown_key_rejected() {
        let err = RunConfig::parse("epoch = 3\n").unwrap_err();
        assert!(err.to_string().contains("epoch"), "{err}");
    }

    #[test]
    fn empty_document_is_defaults() {
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
    }
}
