//! Semantic-role pooled news features, a transformer classifier with a
//! masked-role matching objective, and an event-driven backtester.

pub mod event_data;
pub mod features;
pub mod model;
pub mod tensor;
pub mod synthetic;
pub mod train;
pub mod backtest;
