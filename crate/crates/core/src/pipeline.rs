//! File-based pipeline stages driven by a declarative run config.
//!
//! Each stage reads the previous stage's artifacts, checks them against the
//! previous stage's manifest, and writes its own artifacts plus a manifest
//! `<stage>.manifest.json` holding the config hash and the sha256 of every
//! file it wrote. Nothing here reads the clock or the environment.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::backtest::{self, BacktestConfig, BacktestError, Comparison};
use crate::bars::{self, BarError, BarFormatConfig, BarSeries};
use crate::corpus::{self, CleanTweet, CleaningConfig, CleaningStats, CorpusError, TweetFormatConfig};
use crate::features::{self, ExploratoryReport, FeatureConfig, FeatureError, FeatureMatrix, MatrixManifest, ScoredTweet};
use crate::gbdt::{self, GbdtError, TrainParams};
use crate::synth::SynthConfig;
use crate::sentiment::{self, ScorerDecl, ScorerRegistry, SentimentError};
use crate::walkforward::{self, MetricsReport, PredictionLedger, SkippedFold, WalkError, WalkForwardConfig};

/// Broad error class, used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Parse,
    Validation,
    Runtime,
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config {path}: {message}")]
    ConfigParse { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("{path}: {message}")]
    Artifact { path: PathBuf, message: String },
    #[error("{path}: written under config {found}, current config is {expected}; rerun the earlier stages")]
    StaleArtifact {
        path: PathBuf,
        expected: String,
        found: String,
    },
    #[error("{path}: contents do not match the manifest checksum")]
    Checksum { path: PathBuf },
    #[error("bars {path}: {source}")]
    Bars {
        path: PathBuf,
        #[source]
        source: BarError,
    },
    #[error("tweets {path}: {source}")]
    Corpus {
        path: PathBuf,
        #[source]
        source: CorpusError,
    },
    #[error("sentiment: {0}")]
    Sentiment(#[from] SentimentError),
    #[error("features: {0}")]
    Features(#[from] FeatureError),
    #[error("walk-forward: {0}")]
    Walk(#[from] WalkError),
    #[error("model: {0}")]
    Model(#[from] GbdtError),
    #[error("backtest: {0}")]
    Backtest(#[from] BacktestError),
}

impl PipelineError {
    pub fn category(&self) -> ErrorCategory {
        use ErrorCategory::*;
        match self {
            Self::ConfigParse { .. } | Self::Artifact { .. } => Parse,
            Self::Bars { source, .. } => match source {
                BarError::OhlcViolation { .. } | BarError::UnalignedRow { .. } | BarError::Duplicate { .. } => {
                    Validation
                }
                _ => Parse,
            },
            Self::Corpus { source, .. } => match source {
                CorpusError::Transform { .. } | CorpusError::Io(_) => Runtime,
                CorpusError::Config(_) => Validation,
                _ => Parse,
            },
            Self::Sentiment(e) => match e {
                SentimentError::Parse { .. } => Parse,
                SentimentError::Io(_) => Runtime,
                _ => Validation,
            },
            Self::Features(e) => match e {
                FeatureError::Config(_) | FeatureError::UnknownScorer(_) => Validation,
                FeatureError::Io(_) => Runtime,
                _ => Parse,
            },
            Self::Walk(e) => match e {
                WalkError::InsufficientDays { .. } | WalkError::Config(_) => Validation,
                WalkError::Parse { .. } | WalkError::Csv(_) => Parse,
                _ => Runtime,
            },
            Self::Model(e) => match e {
                GbdtError::InvalidParams(_) => Validation,
                GbdtError::Format(_) | GbdtError::Version { .. } | GbdtError::Corrupt(_) | GbdtError::Json(_) => {
                    Parse
                }
                _ => Runtime,
            },
            Self::Backtest(e) => match e {
                BacktestError::Config(_) => Validation,
                BacktestError::Csv(_) => Parse,
                _ => Runtime,
            },
            Self::Invalid(_) | Self::StaleArtifact { .. } | Self::Checksum { .. } => Validation,
            Self::Io { .. } => Runtime,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Paths {
    pub bars: PathBuf,
    pub tweets: PathBuf,
    /// Directory for non-builtin scorer tables.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lexicon_dir: Option<PathBuf>,
    pub output: PathBuf,
}

/// Everything a run needs. Relative paths are resolved against the config
/// file's directory when loaded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Name of the text transform applied after cleaning.
    #[serde(default = "default_transform")]
    pub transform: String,
    /// Write each fold's stage-two model under `models/`.
    #[serde(default)]
    pub persist_models: bool,
    pub paths: Paths,
    #[serde(default)]
    pub bars: BarFormatConfig,
    #[serde(default)]
    pub tweets: TweetFormatConfig,
    #[serde(default)]
    pub cleaning: CleaningConfig,
    #[serde(default = "sentiment::demo_decls")]
    pub scorers: Vec<ScorerDecl>,
    #[serde(default)]
    pub features: FeatureConfig,
    #[serde(default)]
    pub train: TrainParams,
    #[serde(default)]
    pub walkforward: WalkForwardConfig,
    #[serde(default)]
    pub backtest: BacktestConfig,
}

fn default_transform() -> String {
    "identity".to_string()
}

impl RunConfig {
    pub fn new(paths: Paths) -> Self {
        Self {
            transform: default_transform(),
            persist_models: false,
            paths,
            bars: BarFormatConfig::default(),
            tweets: TweetFormatConfig::default(),
            cleaning: CleaningConfig::default(),
            scorers: sentiment::demo_decls(),
            features: FeatureConfig::default(),
            train: TrainParams::default(),
            walkforward: WalkForwardConfig::default(),
            backtest: BacktestConfig::default(),
        }
    }

    /// Parses TOML, resolving relative paths against `base_dir`.
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self, toml::de::Error> {
        let mut cfg: Self = toml::from_str(text)?;
        cfg.resolve_paths(base_dir);
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, base).map_err(|e| PipelineError::ConfigParse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.paths.bars);
        fix(&mut self.paths.tweets);
        fix(&mut self.paths.output);
        if let Some(d) = self.paths.lexicon_dir.as_mut() {
            fix(d);
        }
    }

    /// sha256 of the canonical JSON form with the paths left out, so the
    /// same settings hash alike wherever the files live. Input contents are
    /// tracked separately by checksum.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes to JSON");
        if let Some(m) = v.as_object_mut() {
            m.remove("paths");
        }
        // serde_json maps are sorted by key, so this text is canonical
        sha256_hex(v.to_string().as_bytes())
    }

    /// Checks settings and that every input path exists.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let invalid = |m: String| PipelineError::Invalid(m);
        for (what, p) in [("bars", &self.paths.bars), ("tweets", &self.paths.tweets)] {
            if !p.is_file() {
                return Err(invalid(format!("{what} file {} does not exist", p.display())));
            }
        }
        let needs_dir = self.scorers.iter().any(|d| !d.source.starts_with("builtin:"));
        match &self.paths.lexicon_dir {
            Some(d) if !d.is_dir() => {
                return Err(invalid(format!("lexicon directory {} does not exist", d.display())));
            }
            None if needs_dir => {
                return Err(invalid("scorers reference table files but no lexicon_dir is set".into()));
            }
            _ => {}
        }
        if corpus::transform_by_name(&self.transform).is_none() {
            return Err(invalid(format!("unknown transform `{}`", self.transform)));
        }
        if self.paths.output.exists() && !self.paths.output.is_dir() {
            return Err(invalid(format!("output {} is not a directory", self.paths.output.display())));
        }
        self.cleaning.validate().map_err(|e| invalid(e.to_string()))?;
        self.features.validate()?;
        self.train.validate()?;
        self.walkforward.validate()?;
        self.backtest.validate()?;
        Ok(())
    }

    pub fn registry(&self) -> Result<ScorerRegistry, PipelineError> {
        let dir = self.paths.lexicon_dir.clone();
        let reg = sentiment::build_registry(&self.scorers, |source| {
            let path = dir.as_deref().unwrap_or(Path::new(".")).join(source);
            fs::read_to_string(&path).map_err(SentimentError::Io)
        })?;
        Ok(reg)
    }

    fn out(&self, name: &str) -> PathBuf {
        self.paths.output.join(name)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Per-stage record of what was written under which config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageManifest {
    pub stage: String,
    pub config_hash: String,
    /// sha256 of each consumed file, keyed by path relative to the output
    /// directory (or by role for external inputs).
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

struct StageWriter<'a> {
    cfg: &'a RunConfig,
    manifest: StageManifest,
}

impl<'a> StageWriter<'a> {
    fn new(cfg: &'a RunConfig, stage: &str) -> Result<Self, PipelineError> {
        fs::create_dir_all(&cfg.paths.output).map_err(io_err(&cfg.paths.output))?;
        Ok(Self {
            cfg,
            manifest: StageManifest {
                stage: stage.to_string(),
                config_hash: cfg.hash(),
                inputs: BTreeMap::new(),
                outputs: BTreeMap::new(),
            },
        })
    }

    fn input(&mut self, key: &str, bytes: &[u8]) {
        self.manifest.inputs.insert(key.to_string(), sha256_hex(bytes));
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), PipelineError> {
        let path = self.cfg.out(name);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        fs::write(&path, bytes).map_err(io_err(&path))?;
        self.manifest.outputs.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), PipelineError> {
        let mut text = serde_json::to_string_pretty(value).expect("artifact serializes");
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    fn finish(self) -> Result<StageManifest, PipelineError> {
        let name = format!("{}.manifest.json", self.manifest.stage);
        let mut text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        text.push('\n');
        let path = self.cfg.out(&name);
        fs::write(&path, text).map_err(io_err(&path))?;
        Ok(self.manifest)
    }
}

/// Reads an earlier stage's artifacts after checking the config hash and
/// checksums.
struct StageReader<'a> {
    cfg: &'a RunConfig,
    manifest: StageManifest,
}

impl<'a> StageReader<'a> {
    fn open(cfg: &'a RunConfig, stage: &str) -> Result<Self, PipelineError> {
        let path = cfg.out(&format!("{stage}.manifest.json"));
        let text = fs::read_to_string(&path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                PipelineError::Invalid(format!(
                    "{} is missing; run the `{stage}` stage first",
                    path.display()
                ))
            } else {
                io_err(&path)(e)
            }
        })?;
        let manifest: StageManifest = serde_json::from_str(&text).map_err(|e| PipelineError::Artifact {
            path: path.clone(),
            message: e.to_string(),
        })?;
        let expected = cfg.hash();
        if manifest.config_hash != expected {
            return Err(PipelineError::StaleArtifact {
                path,
                expected,
                found: manifest.config_hash,
            });
        }
        Ok(Self { cfg, manifest })
    }

    fn bytes(&self, name: &str) -> Result<Vec<u8>, PipelineError> {
        let path = self.cfg.out(name);
        let want = self.manifest.outputs.get(name).ok_or_else(|| PipelineError::Artifact {
            path: path.clone(),
            message: format!("not listed in the `{}` manifest", self.manifest.stage),
        })?;
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        if &sha256_hex(&bytes) != want {
            return Err(PipelineError::Checksum { path });
        }
        Ok(bytes)
    }

    fn json<T: DeserializeOwned>(&self, name: &str) -> Result<T, PipelineError> {
        let bytes = self.bytes(name)?;
        serde_json::from_slice(&bytes).map_err(|e| PipelineError::Artifact {
            path: self.cfg.out(name),
            message: e.to_string(),
        })
    }
}

pub const BARS_FILE: &str = "bars.tsv";
pub const TWEETS_FILE: &str = "tweets_clean.jsonl";
pub const MATRIX_FILE: &str = "features.csv";
pub const MATRIX_MANIFEST_FILE: &str = "features.manifest.json";
pub const EXPLORATORY_FILE: &str = "exploratory.json";
pub const LEDGER_FILE: &str = "ledger.csv";
pub const METRICS_FILE: &str = "metrics.json";
pub const HISTORY_FILE: &str = "history.csv";
pub const FOLDS_FILE: &str = "folds.csv";
pub const TRADES_FILE: &str = "trades.csv";
pub const EQUITY_FILE: &str = "equity.csv";
pub const EQUITY_SVG_FILE: &str = "equity.svg";
pub const BACKTEST_FILE: &str = "backtest.json";
pub const REPORT_FILE: &str = "report.txt";

/// Bars are stored in local time, so the stored file has no offset shift.
fn stored_bar_format(cfg: &BarFormatConfig) -> BarFormatConfig {
    BarFormatConfig {
        delimiter: '\t',
        date_format: "%Y.%m.%d".to_string(),
        time_format: "%H:%M:%S".to_string(),
        file_utc_offset_hours: cfg.local_utc_offset_hours,
        ..cfg.clone()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub config_hash: String,
    pub bars: usize,
    pub trading_days: usize,
    pub first_day: Option<chrono::NaiveDate>,
    pub last_day: Option<chrono::NaiveDate>,
    pub tweets: CleaningStats,
    pub transform: String,
}

/// Parses and validates the raw inputs, writing normalized bars and the
/// cleaned corpus.
pub fn ingest(cfg: &RunConfig) -> Result<IngestSummary, PipelineError> {
    cfg.validate()?;
    let mut w = StageWriter::new(cfg, "ingest")?;

    let bars_path = &cfg.paths.bars;
    let raw_bars = fs::read(bars_path).map_err(io_err(bars_path))?;
    w.input("bars", &raw_bars);
    let series = bars::parse_bars(raw_bars.as_slice(), &cfg.bars).map_err(|source| PipelineError::Bars {
        path: bars_path.clone(),
        source,
    })?;
    let mut buf = Vec::new();
    bars::write_bars(&series, &mut buf, &stored_bar_format(&cfg.bars)).map_err(|source| PipelineError::Bars {
        path: cfg.out(BARS_FILE),
        source,
    })?;
    w.write(BARS_FILE, &buf)?;

    let tweets_path = &cfg.paths.tweets;
    let raw_tweets = fs::read(tweets_path).map_err(io_err(tweets_path))?;
    w.input("tweets", &raw_tweets);
    let corpus_err = |source| PipelineError::Corpus {
        path: tweets_path.clone(),
        source,
    };
    let parsed = corpus::parse_tweets(raw_tweets.as_slice(), &cfg.tweets).map_err(corpus_err)?;
    let hook = corpus::transform_by_name(&cfg.transform).expect("validated transform");
    let (clean, stats) = corpus::prepare(parsed, &cfg.cleaning, hook.as_ref()).map_err(corpus_err)?;
    let mut buf = Vec::new();
    for t in &clean {
        serde_json::to_writer(&mut buf, t).expect("tweet serializes");
        buf.push(b'\n');
    }
    w.write(TWEETS_FILE, &buf)?;

    let days = series.trading_days();
    let summary = IngestSummary {
        config_hash: w.manifest.config_hash.clone(),
        bars: series.len(),
        trading_days: days.len(),
        first_day: days.first().copied(),
        last_day: days.last().copied(),
        tweets: stats,
        transform: cfg.transform.clone(),
    };
    log::info!(
        "ingest: {} bars over {} days, {} of {} tweets kept ({} after dedup)",
        summary.bars,
        summary.trading_days,
        stats.kept,
        stats.input,
        stats.after_dedup
    );
    w.write_json("ingest.json", &summary)?;
    w.finish()?;
    Ok(summary)
}

fn read_stored_bars(cfg: &RunConfig, r: &StageReader) -> Result<BarSeries, PipelineError> {
    let bytes = r.bytes(BARS_FILE)?;
    bars::parse_bars(bytes.as_slice(), &stored_bar_format(&cfg.bars)).map_err(|source| PipelineError::Bars {
        path: cfg.out(BARS_FILE),
        source,
    })
}

fn read_clean_tweets(cfg: &RunConfig, r: &StageReader) -> Result<Vec<CleanTweet>, PipelineError> {
    let bytes = r.bytes(TWEETS_FILE)?;
    let text = String::from_utf8(bytes).map_err(|e| PipelineError::Artifact {
        path: cfg.out(TWEETS_FILE),
        message: e.to_string(),
    })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| PipelineError::Artifact {
                path: cfg.out(TWEETS_FILE),
                message: format!("line {}: {e}", i + 1),
            })
        })
        .collect()
}

/// Scores every tweet with every registered scorer, keeping input order.
pub fn score_tweets(tweets: Vec<CleanTweet>, reg: &ScorerRegistry) -> Vec<ScoredTweet> {
    tweets
        .into_par_iter()
        .map(|t| {
            let sentiment = sentiment::score_all(&t.raw.text, &t.clean_text, reg);
            ScoredTweet { tweet: t, sentiment }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Exploratory {
    config_hash: String,
    #[serde(flatten)]
    report: ExploratoryReport,
}

/// Scores the corpus and builds the labeled feature matrix.
pub fn featurize(cfg: &RunConfig) -> Result<MatrixManifest, PipelineError> {
    cfg.validate()?;
    let r = StageReader::open(cfg, "ingest")?;
    let mut w = StageWriter::new(cfg, "featurize")?;
    let series = read_stored_bars(cfg, &r)?;
    let tweets = read_clean_tweets(cfg, &r)?;
    w.input(BARS_FILE, &r.bytes(BARS_FILE)?);
    w.input(TWEETS_FILE, &r.bytes(TWEETS_FILE)?);

    let reg = cfg.registry()?;
    let scored = score_tweets(tweets, &reg);
    let assembled = features::assemble(&scored, &series, &reg, &cfg.features)?;
    let matrix = &assembled.matrix;
    if scored.is_empty() {
        log::warn!("featurize: no tweets; the matrix carries bar columns only");
    }

    let mut buf = Vec::new();
    matrix.write_csv(&mut buf)?;
    w.write(MATRIX_FILE, &buf)?;
    let manifest = MatrixManifest {
        columns: assembled.schema.clone(),
        attributes: assembled.attributes.clone(),
        label_column: features::LABEL_COLUMN.to_string(),
        rows: matrix.len(),
        days: matrix.days().len(),
        schema_hash: gbdt::schema_hash(&matrix.columns),
        config_hash: w.manifest.config_hash.clone(),
    };
    w.write_json(MATRIX_MANIFEST_FILE, &manifest)?;
    let report = features::exploratory_report(matrix, &reg, &scored);
    log::info!(
        "featurize: {} rows x {} columns over {} days; labels {}",
        manifest.rows,
        manifest.columns.len(),
        manifest.days,
        report.class_balance
    );
    w.write_json(
        EXPLORATORY_FILE,
        &Exploratory {
            config_hash: manifest.config_hash.clone(),
            report,
        },
    )?;
    w.finish()?;
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSummary {
    pub index: usize,
    pub train_first: chrono::NaiveDate,
    pub train_last: chrono::NaiveDate,
    pub val_days: Vec<chrono::NaiveDate>,
    pub test_days: Vec<chrono::NaiveDate>,
    pub best_round: usize,
    pub train_rows: usize,
    pub val_rows: usize,
    pub test_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub config_hash: String,
    pub schema_hash: String,
    pub metrics: MetricsReport,
    pub folds: usize,
    pub skipped: Vec<SkippedFold>,
    pub leakage_free: bool,
}

fn read_matrix(cfg: &RunConfig, r: &StageReader) -> Result<(FeatureMatrix, MatrixManifest), PipelineError> {
    let manifest: MatrixManifest = r.json(MATRIX_MANIFEST_FILE)?;
    let matrix = FeatureMatrix::read_csv(r.bytes(MATRIX_FILE)?.as_slice())?;
    if gbdt::schema_hash(&matrix.columns) != manifest.schema_hash {
        return Err(PipelineError::Artifact {
            path: cfg.out(MATRIX_FILE),
            message: "columns do not match the schema manifest".into(),
        });
    }
    Ok((matrix, manifest))
}

/// Walk-forward training and out-of-sample prediction.
pub fn train(cfg: &RunConfig) -> Result<TrainSummary, PipelineError> {
    cfg.validate()?;
    let r = StageReader::open(cfg, "featurize")?;
    let mut w = StageWriter::new(cfg, "train")?;
    let (matrix, manifest) = read_matrix(cfg, &r)?;
    w.input(MATRIX_FILE, &r.bytes(MATRIX_FILE)?);

    let wf = &cfg.walkforward;
    let folds = walkforward::make_folds(&matrix.days(), wf.train_days, wf.val_days, wf.test_days)?;
    log::info!("train: {} folds over {} days", folds.len(), matrix.days().len());
    let result = walkforward::run_all(&matrix, &cfg.train, &folds, wf)?;
    let metrics = walkforward::compute_metrics(&result.ledger)?;

    let mut buf = Vec::new();
    result.ledger.write_csv(&mut buf)?;
    w.write(LEDGER_FILE, &buf)?;

    let mut history = String::from("fold,round,train_logloss,eval_logloss,eval_auc\n");
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut fold_csv =
        String::from("fold,train_first,train_last,val_days,test_days,best_round,train_rows,val_rows,test_rows\n");
    let days = |d: &[chrono::NaiveDate]| d.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(" ");
    for f in &result.folds {
        for h in &f.history {
            let _ = writeln!(
                history,
                "{},{},{},{},{}",
                f.index,
                h.round,
                h.train_logloss,
                opt(h.eval_logloss),
                opt(h.eval_auc)
            );
        }
        let _ = writeln!(
            fold_csv,
            "{},{},{},{},{},{},{},{},{}",
            f.index,
            f.spec.train_days.first().map(|d| d.to_string()).unwrap_or_default(),
            f.spec.train_days.last().map(|d| d.to_string()).unwrap_or_default(),
            days(&f.spec.val_days),
            days(&f.spec.test_days),
            f.best_round,
            f.rows.train.len(),
            f.rows.val.len(),
            f.rows.test.len()
        );
        if cfg.persist_models {
            w.write(&format!("models/fold_{:04}.json", f.index), f.model.to_json().as_bytes())?;
        }
    }
    w.write(HISTORY_FILE, history.as_bytes())?;
    w.write(FOLDS_FILE, fold_csv.as_bytes())?;

    let summary = TrainSummary {
        config_hash: w.manifest.config_hash.clone(),
        schema_hash: manifest.schema_hash,
        metrics,
        folds: result.folds.len(),
        skipped: result.skipped,
        leakage_free: walkforward::leakage_free(&result.folds),
    };
    log::info!(
        "train: {} predictions, auc {:?}, macro f1 {:.4}",
        summary.metrics.n,
        summary.metrics.auc,
        summary.metrics.f1
    );
    w.write_json(METRICS_FILE, &summary)?;
    w.finish()?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestSummary {
    pub config_hash: String,
    pub comparison: Comparison,
    pub daily_pnl: BTreeMap<chrono::NaiveDate, rust_decimal::Decimal>,
    pub baseline_model_totals: Vec<rust_decimal::Decimal>,
}

/// Trades the ledger and compares it with the random ensemble.
pub fn run_backtest(cfg: &RunConfig) -> Result<BacktestSummary, PipelineError> {
    cfg.validate()?;
    let ingest = StageReader::open(cfg, "ingest")?;
    let trained = StageReader::open(cfg, "train")?;
    let mut w = StageWriter::new(cfg, "backtest")?;
    let series = read_stored_bars(cfg, &ingest)?;
    let ledger_bytes = trained.bytes(LEDGER_FILE)?;
    w.input(BARS_FILE, &ingest.bytes(BARS_FILE)?);
    w.input(LEDGER_FILE, &ledger_bytes);
    let ledger = PredictionLedger::read_csv(ledger_bytes.as_slice(), cfg.walkforward.threshold)?;
    let report = backtest::run_backtest(&ledger, &series, &cfg.backtest)?;

    let mut buf = Vec::new();
    backtest::write_trades_csv(&report.trades, &mut buf)?;
    w.write(TRADES_FILE, &buf)?;
    let mut buf = Vec::new();
    backtest::write_equity_csv(&report, &mut buf)?;
    w.write(EQUITY_FILE, &buf)?;
    let hash = w.manifest.config_hash.clone();
    w.write(EQUITY_SVG_FILE, backtest::equity_svg(&report, "Equity: model vs random mean", &hash).as_bytes())?;

    let summary = BacktestSummary {
        config_hash: hash,
        comparison: report.comparison.clone(),
        daily_pnl: report.daily_pnl.clone(),
        baseline_model_totals: report.baseline.model_totals.clone(),
    };
    let c = &summary.comparison;
    log::info!(
        "backtest: model {} vs random mean {} (excess {}), beats {} of {} random models",
        c.model_total,
        c.baseline_mean_total,
        c.excess,
        c.models_beaten,
        c.n_models
    );
    w.write_json(BACKTEST_FILE, &summary)?;
    w.finish()?;
    Ok(summary)
}

/// Renders the plain-text summary of a finished run.
pub fn render_report(exploratory: &ExploratoryReport, train: &TrainSummary, bt: &BacktestSummary) -> String {
    let mut s = String::new();
    let m = &train.metrics;
    let c = &bt.comparison;
    let _ = writeln!(s, "config {}", train.config_hash);
    let _ = writeln!(s);
    let _ = writeln!(s, "labels: {}", exploratory.class_balance);
    for p in &exploratory.polarity {
        let _ = writeln!(
            s,
            "polarity {:<12} neg {:>7} neu {:>7} pos {:>7}",
            p.scorer, p.negative, p.neutral, p.positive
        );
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "folds: {} trained, {} skipped", train.folds, train.skipped.len());
    let _ = writeln!(s, "predictions: {}", m.n);
    let _ = writeln!(s, "precision (macro): {:.4}", m.precision);
    let _ = writeln!(s, "recall (macro):    {:.4}", m.recall);
    let _ = writeln!(s, "f1 (macro):        {:.4}", m.f1);
    match m.auc {
        Some(a) => {
            let _ = writeln!(s, "auc:               {a:.4}");
        }
        None => {
            let _ = writeln!(s, "auc:               undefined (single class)");
        }
    }
    let _ = writeln!(s, "logloss:           {:.4}", m.logloss);
    let k = &m.confusion;
    let _ = writeln!(
        s,
        "confusion: tn {} fp {} fn {} tp {}",
        k.true_negative, k.false_positive, k.false_negative, k.true_positive
    );
    let _ = writeln!(s);
    let _ = writeln!(s, "model pnl:         {}", c.model_total);
    let _ = writeln!(s, "random mean pnl:   {}", c.baseline_mean_total);
    let _ = writeln!(s, "excess:            {}", c.excess);
    let per = |v: &Option<rust_decimal::Decimal>| v.map(|d| d.to_string()).unwrap_or_else(|| "-".into());
    let _ = writeln!(s, "per trade (model): {}", per(&c.model_per_operation));
    let _ = writeln!(s, "per trade (random):{}", per(&c.baseline_per_operation));
    let _ = writeln!(
        s,
        "days won/lost/tied: {}/{}/{} of {}",
        c.days_won, c.days_lost, c.days_tied, c.days
    );
    let _ = writeln!(s, "random models beaten: {} of {}", c.models_beaten, c.n_models);
    s
}

/// Writes `report.txt` from the featurize, train and backtest artifacts.
pub fn report(cfg: &RunConfig) -> Result<String, PipelineError> {
    let feat = StageReader::open(cfg, "featurize")?;
    let trained = StageReader::open(cfg, "train")?;
    let bt = StageReader::open(cfg, "backtest")?;
    let exploratory: Exploratory = feat.json(EXPLORATORY_FILE)?;
    let summary: TrainSummary = trained.json(METRICS_FILE)?;
    let backtest: BacktestSummary = bt.json(BACKTEST_FILE)?;
    let text = render_report(&exploratory.report, &summary, &backtest);
    let mut w = StageWriter::new(cfg, "report")?;
    w.write(REPORT_FILE, text.as_bytes())?;
    w.finish()?;
    Ok(text)
}

/// Runs every stage in order.
pub fn run_all(cfg: &RunConfig) -> Result<String, PipelineError> {
    ingest(cfg)?;
    featurize(cfg)?;
    train(cfg)?;
    run_backtest(cfg)?;
    report(cfg)
}

pub const DEMO_CONFIG_FILE: &str = "sentibar.toml";

/// Writes a synthetic dataset and a matching config into `dir`. The config
/// uses paths relative to `dir`, with output going to `dir/out`.
pub fn write_demo(dir: &Path, synth: &SynthConfig) -> Result<RunConfig, PipelineError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let data = crate::synth::generate(synth);
    let mut cfg = RunConfig::new(Paths {
        bars: "bars.tsv".into(),
        tweets: "tweets.jsonl".into(),
        lexicon_dir: None,
        output: "out".into(),
    });
    cfg.features = FeatureConfig {
        scorers: Some(vec!["afinn".into(), "valence".into()]),
        scorer_columns: features::ScorerColumns::Both,
        tweet_attrs: vec![features::TweetAttr::WordCount],
        lags: vec![1],
    };
    cfg.walkforward.train_days = 20.min(synth.days.saturating_sub(2)).max(1);

    let series = data.series(cfg.bars.session_end);
    let mut buf = Vec::new();
    bars::write_bars(&series, &mut buf, &cfg.bars).map_err(|source| PipelineError::Bars {
        path: dir.join("bars.tsv"),
        source,
    })?;
    let path = dir.join("bars.tsv");
    fs::write(&path, buf).map_err(io_err(&path))?;
    let mut buf = Vec::new();
    crate::synth::write_tweets_jsonl(&data.tweets, &mut buf).expect("in-memory write");
    let path = dir.join("tweets.jsonl");
    fs::write(&path, buf).map_err(io_err(&path))?;
    let path = dir.join(DEMO_CONFIG_FILE);
    fs::write(&path, cfg.to_toml()).map_err(io_err(&path))?;
    cfg.resolve_paths(dir);
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> RunConfig {
        RunConfig::new(Paths {
            bars: "data/bars.tsv".into(),
            tweets: "data/tweets.jsonl".into(),
            lexicon_dir: None,
            output: "out".into(),
        })
    }

    #[test]
    fn toml_round_trip() {
        let cfg = sample();
        let text = cfg.to_toml();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn relative_paths_resolve_against_config_dir() {
        let text = "[paths]\nbars = \"b.tsv\"\ntweets = \"/abs/t.jsonl\"\noutput = \"out\"\n";
        let cfg = RunConfig::from_toml_str(text, Path::new("/cfg")).unwrap();
        assert_eq!(cfg.paths.bars, PathBuf::from("/cfg/b.tsv"));
        assert_eq!(cfg.paths.tweets, PathBuf::from("/abs/t.jsonl"));
        assert_eq!(cfg.scorers, sentiment::demo_decls());
    }

    #[test]
    fn hash_ignores_paths_but_not_settings() {
        let a = sample();
        let mut b = sample();
        b.paths.output = "elsewhere".into();
        assert_eq!(a.hash(), b.hash());
        b.train.eta = 0.02;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn unknown_field_is_a_parse_error() {
        let text = "[paths]\nbars = \"b\"\ntweets = \"t\"\noutput = \"o\"\n[train]\neta = \"fast\"\n";
        assert!(RunConfig::from_toml_str(text, Path::new(".")).is_err());
    }
}
