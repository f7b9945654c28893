//! Shared fixtures for the benchmarks.

use chrono::NaiveTime;
use sentibar::bars::BarSeries;
use sentibar::corpus::{self, CleaningConfig, Identity};
use sentibar::features::{self, FeatureConfig, FeatureMatrix, ScoredTweet, ScorerColumns};
use sentibar::pipeline;
use sentibar::sentiment::{self, ScorerRegistry};
use sentibar::synth::{self, SynthConfig};

pub struct Fixture {
    pub series: BarSeries,
    pub tweets: Vec<ScoredTweet>,
    pub registry: ScorerRegistry,
    pub matrix: FeatureMatrix,
    pub feature_config: FeatureConfig,
}

/// Synthetic data for `days` sessions, scored and assembled.
pub fn fixture(days: usize) -> Fixture {
    let data = synth::generate(&SynthConfig {
        days,
        ..Default::default()
    });
    let series = data.series(NaiveTime::from_hms_opt(16, 50, 0).unwrap());
    let (clean, _) = corpus::prepare(data.tweets, &CleaningConfig::default(), &Identity).expect("synthetic posts clean");
    let registry = sentiment::demo_registry();
    let tweets = pipeline::score_tweets(clean, &registry);
    let feature_config = FeatureConfig {
        scorers: Some(vec!["afinn".into()]),
        scorer_columns: ScorerColumns::Both,
        tweet_attrs: vec![],
        lags: vec![1],
    };
    let matrix = features::assemble(&tweets, &series, &registry, &feature_config)
        .expect("fixture assembles")
        .matrix;
    Fixture {
        series,
        tweets,
        registry,
        matrix,
        feature_config,
    }
}
