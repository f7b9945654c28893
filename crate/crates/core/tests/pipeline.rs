use std::fs;
use std::path::Path;

use sentibar::pipeline::{self, ErrorCategory, PipelineError, RunConfig};
use sentibar::synth::SynthConfig;

fn small_demo(dir: &Path) -> RunConfig {
    let synth = SynthConfig {
        days: 12,
        ..Default::default()
    };
    let mut cfg = pipeline::write_demo(dir, &synth).unwrap();
    cfg.walkforward.train_days = 6;
    cfg.train.n_estimators = 40;
    cfg
}

#[test]
fn full_run_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_demo(dir.path());
    let report = pipeline::run_all(&cfg).unwrap();
    assert!(report.contains("random models beaten"));
    for name in [
        "bars.tsv",
        "tweets_clean.jsonl",
        "features.csv",
        "features.manifest.json",
        "exploratory.json",
        "ledger.csv",
        "metrics.json",
        "history.csv",
        "folds.csv",
        "trades.csv",
        "equity.csv",
        "equity.svg",
        "backtest.json",
        "report.txt",
    ] {
        assert!(cfg.paths.output.join(name).is_file(), "{name}");
    }
    let hash = cfg.hash();
    for name in ["features.manifest.json", "metrics.json", "backtest.json", "equity.svg", "report.txt"] {
        let text = fs::read_to_string(cfg.paths.output.join(name)).unwrap();
        assert!(text.contains(&hash), "{name} lacks the config hash");
    }
}

#[test]
fn loaded_demo_config_matches_written_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = pipeline::write_demo(dir.path(), &SynthConfig { days: 3, ..Default::default() }).unwrap();
    let loaded = RunConfig::load(&dir.path().join(pipeline::DEMO_CONFIG_FILE)).unwrap();
    assert_eq!(loaded, cfg);
    assert!(loaded.validate().is_ok());
}

#[test]
fn changed_config_makes_later_stages_refuse_old_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_demo(dir.path());
    pipeline::ingest(&cfg).unwrap();
    cfg.cleaning.min_words = 4;
    let err = pipeline::featurize(&cfg).unwrap_err();
    assert!(matches!(err, PipelineError::StaleArtifact { .. }), "{err}");
    assert_eq!(err.category(), ErrorCategory::Validation);
}

#[test]
fn tampered_artifact_is_detected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_demo(dir.path());
    pipeline::ingest(&cfg).unwrap();
    let path = cfg.paths.output.join("bars.tsv");
    let mut text = fs::read_to_string(&path).unwrap();
    text.push('\n');
    fs::write(&path, text).unwrap();
    assert!(matches!(pipeline::featurize(&cfg), Err(PipelineError::Checksum { .. })));
}

#[test]
fn missing_stage_and_missing_input_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_demo(dir.path());
    let err = pipeline::train(&cfg).unwrap_err();
    assert!(err.to_string().contains("featurize"), "{err}");

    let mut bad = cfg.clone();
    bad.paths.bars = dir.path().join("nope.tsv");
    let err = pipeline::ingest(&bad).unwrap_err();
    assert_eq!(err.category(), ErrorCategory::Validation);
    assert!(err.to_string().contains("nope.tsv"));
}

#[test]
fn too_few_days_for_the_training_window() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_demo(dir.path());
    cfg.walkforward.train_days = 200;
    pipeline::ingest(&cfg).unwrap();
    pipeline::featurize(&cfg).unwrap();
    let err = pipeline::train(&cfg).unwrap_err();
    assert_eq!(err.category(), ErrorCategory::Validation);
    assert!(err.to_string().contains("need at least 202"), "{err}");
}

#[test]
fn zero_tweets_gives_bar_only_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_demo(dir.path());
    fs::write(&cfg.paths.tweets, "").unwrap();
    pipeline::ingest(&cfg).unwrap();
    let manifest = pipeline::featurize(&cfg).unwrap();
    assert!(manifest.rows > 0);
    let matrix = fs::read_to_string(cfg.paths.output.join("features.csv")).unwrap();
    let header = matrix.lines().next().unwrap();
    assert!(header.contains("tweet_count"));
}
