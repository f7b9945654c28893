//! Intraday direction prediction from social sentiment.
//!
//! The crate covers the whole research pipeline: bar and tweet ingestion,
//! lexicon scoring, windowed features, a gradient-boosted tree classifier,
//! walk-forward evaluation and a backtest against random baselines.

pub mod bars;
pub mod corpus;
pub mod sentiment;
pub mod features;
pub mod gbdt;
pub mod metrics;
pub mod walkforward;
pub mod backtest;
pub mod synth;
pub mod pipeline;
