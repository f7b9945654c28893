//! Windowed feature matrix.
//!
//! Tweets are bucketed into 5-minute windows and summarized per attribute
//! (mean, std, min, max, sum, var, plus a shared tweet count). Each window
//! with a bar becomes one row carrying the bar fields, the aggregates, lagged
//! copies of both, and the next-bar direction label.

use std::collections::{BTreeMap, HashSet};
use std::io::{Read, Write};

use chrono::{Duration, NaiveDate, NaiveDateTime};
use rust_decimal::prelude::ToPrimitive;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bars::{floor_to_window, BarSeries, WINDOW_SECS};
use crate::corpus::CleanTweet;
use crate::sentiment::{ScorerRegistry, SentimentVector};

pub const LABEL_COLUMN: &str = "label";
pub const WINDOW_COLUMN: &str = "window";
const TIME_FORMAT: &str = "%Y-%m-%d %H:%M:%S";

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("invalid feature config: {0}")]
    Config(String),
    #[error("unknown scorer `{0}` in feature config")]
    UnknownScorer(String),
    #[error("matrix file line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// A cleaned tweet with its sentiment scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredTweet {
    pub tweet: CleanTweet,
    pub sentiment: SentimentVector,
}

/// Per-tweet numeric attributes other than sentiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TweetAttr {
    Like,
    Quote,
    Reply,
    Retweet,
    UserFollowers,
    UserFollowing,
    UserTweets,
    UserListed,
    Hour,
    WordCount,
    TextLength,
}

impl TweetAttr {
    pub const ALL: [TweetAttr; 11] = [
        Self::Like,
        Self::Quote,
        Self::Reply,
        Self::Retweet,
        Self::UserFollowers,
        Self::UserFollowing,
        Self::UserTweets,
        Self::UserListed,
        Self::Hour,
        Self::WordCount,
        Self::TextLength,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Like => "like",
            Self::Quote => "quote",
            Self::Reply => "reply",
            Self::Retweet => "retweet",
            Self::UserFollowers => "user_followers",
            Self::UserFollowing => "user_following",
            Self::UserTweets => "user_tweets",
            Self::UserListed => "user_listed",
            Self::Hour => "hour",
            Self::WordCount => "word_count",
            Self::TextLength => "text_length",
        }
    }

    fn value(self, t: &CleanTweet) -> f64 {
        let r = &t.raw;
        match self {
            Self::Like => r.like as f64,
            Self::Quote => r.quote as f64,
            Self::Reply => r.reply as f64,
            Self::Retweet => r.retweet as f64,
            Self::UserFollowers => r.user_followers as f64,
            Self::UserFollowing => r.user_following as f64,
            Self::UserTweets => r.user_tweets as f64,
            Self::UserListed => r.user_listed as f64,
            Self::Hour => f64::from(t.hour),
            Self::WordCount => t.word_count as f64,
            Self::TextLength => t.text_length as f64,
        }
    }
}

/// Which per-scorer outputs become aggregated attributes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerColumns {
    Score,
    Polarity,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    /// Subset of scorer ids to aggregate; all registered scorers when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scorers: Option<Vec<String>>,
    pub scorer_columns: ScorerColumns,
    pub tweet_attrs: Vec<TweetAttr>,
    pub lags: Vec<usize>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            scorers: None,
            scorer_columns: ScorerColumns::Both,
            tweet_attrs: TweetAttr::ALL.to_vec(),
            lags: vec![1, 2, 3, 4],
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<(), FeatureError> {
        let mut seen = HashSet::new();
        for &k in &self.lags {
            if k == 0 {
                return Err(FeatureError::Config("lag offsets must be positive".into()));
            }
            if !seen.insert(k) {
                return Err(FeatureError::Config(format!("lag {k} listed twice")));
            }
        }
        let mut attrs = HashSet::new();
        if let Some(a) = self.tweet_attrs.iter().find(|a| !attrs.insert(**a)) {
            return Err(FeatureError::Config(format!("attribute `{}` listed twice", a.name())));
        }
        Ok(())
    }
}

/// Where an aggregated attribute comes from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AttrSource {
    Score { scorer: String, index: usize },
    Polarity { scorer: String, index: usize },
    Tweet { attr: TweetAttr },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    pub source: AttrSource,
}

impl Attribute {
    fn value(&self, t: &ScoredTweet) -> f64 {
        match &self.source {
            AttrSource::Score { index, .. } => t.sentiment.scores[*index],
            AttrSource::Polarity { index, .. } => f64::from(t.sentiment.polarities[*index]),
            AttrSource::Tweet { attr } => attr.value(&t.tweet),
        }
    }
}

/// Attribute list in column order: scorers in registry order, then tweet
/// attributes in config order.
pub fn attributes(reg: &ScorerRegistry, cfg: &FeatureConfig) -> Result<Vec<Attribute>, FeatureError> {
    let ids: Vec<&str> = reg.ids().collect();
    if let Some(wanted) = &cfg.scorers {
        if let Some(missing) = wanted.iter().find(|w| !ids.contains(&w.as_str())) {
            return Err(FeatureError::UnknownScorer(missing.clone()));
        }
    }
    let mut out = Vec::new();
    for (index, id) in ids.iter().enumerate() {
        if cfg.scorers.as_ref().is_some_and(|w| !w.iter().any(|x| x == id)) {
            continue;
        }
        let scorer = id.to_string();
        if matches!(cfg.scorer_columns, ScorerColumns::Score | ScorerColumns::Both) {
            out.push(Attribute {
                name: format!("{id}_score"),
                source: AttrSource::Score {
                    scorer: scorer.clone(),
                    index,
                },
            });
        }
        if matches!(cfg.scorer_columns, ScorerColumns::Polarity | ScorerColumns::Both) {
            out.push(Attribute {
                name: format!("{id}_polarity"),
                source: AttrSource::Polarity { scorer, index },
            });
        }
    }
    out.extend(cfg.tweet_attrs.iter().map(|&attr| Attribute {
        name: attr.name().to_string(),
        source: AttrSource::Tweet { attr },
    }));
    Ok(out)
}

/// Groups tweets by the window their local time falls in, keeping arrival
/// order inside each group.
pub fn bucket_tweets(tweets: &[ScoredTweet]) -> BTreeMap<NaiveDateTime, Vec<&ScoredTweet>> {
    let mut out: BTreeMap<NaiveDateTime, Vec<&ScoredTweet>> = BTreeMap::new();
    for t in tweets {
        out.entry(floor_to_window(t.tweet.local_time, WINDOW_SECS))
            .or_default()
            .push(t);
    }
    out
}

pub const STAT_NAMES: [&str; 6] = ["mean", "std", "min", "max", "sum", "var"];

/// Population statistics of one attribute over a window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub sum: f64,
    pub var: f64,
}

impl Stats {
    /// Returns `None` for an empty slice.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = values.iter().sum();
        if min == max {
            return Some(Self {
                mean: min,
                std: 0.0,
                min,
                max,
                sum,
                var: 0.0,
            });
        }
        let mean = (sum / n).clamp(min, max);
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Some(Self {
            mean,
            std: var.sqrt(),
            min,
            max,
            sum,
            var,
        })
    }

    pub fn as_array(&self) -> [f64; 6] {
        [self.mean, self.std, self.min, self.max, self.sum, self.var]
    }
}

/// Aggregates of one window: tweet count plus per-attribute statistics
/// (`None` when the window has no tweets).
#[derive(Debug, Clone, PartialEq)]
pub struct WindowAggregate {
    pub tweet_count: usize,
    pub stats: Vec<Option<Stats>>,
}

pub fn aggregate_window(group: &[&ScoredTweet], attrs: &[Attribute]) -> WindowAggregate {
    let stats = attrs
        .iter()
        .map(|a| {
            let values: Vec<f64> = group.iter().map(|t| a.value(t)).collect();
            Stats::of(&values)
        })
        .collect();
    WindowAggregate {
        tweet_count: group.len(),
        stats,
    }
}

pub const BAR_COLUMNS: [&str; 6] = ["open", "high", "low", "close", "tickvol", "vol"];

/// Description of one matrix column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnInfo {
    pub name: String,
    /// `bar`, `count`, or the attribute name.
    pub origin: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stat: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lag: Option<usize>,
}

/// Column layout: bar fields, tweet count, per-attribute stats, then lagged
/// copies of all of those grouped by lag.
pub fn column_schema(attrs: &[Attribute], lags: &[usize]) -> Vec<ColumnInfo> {
    let mut base = Vec::new();
    for b in BAR_COLUMNS {
        base.push(ColumnInfo {
            name: b.to_string(),
            origin: "bar".into(),
            stat: None,
            lag: None,
        });
    }
    base.push(ColumnInfo {
        name: "tweet_count".into(),
        origin: "count".into(),
        stat: None,
        lag: None,
    });
    for a in attrs {
        for s in STAT_NAMES {
            base.push(ColumnInfo {
                name: format!("{}_{s}", a.name),
                origin: a.name.clone(),
                stat: Some(s.to_string()),
                lag: None,
            });
        }
    }
    let mut out = base.clone();
    for &k in lags {
        out.extend(base.iter().map(|c| ColumnInfo {
            name: format!("{}_lag_{k}", c.name),
            lag: Some(k),
            ..c.clone()
        }));
    }
    out
}

/// Dense row-major feature table. Missing values are NaN.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureMatrix {
    pub columns: Vec<String>,
    pub windows: Vec<NaiveDateTime>,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
}

impl FeatureMatrix {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Distinct dates present, ascending.
    pub fn days(&self) -> Vec<NaiveDate> {
        let mut d: Vec<NaiveDate> = self.windows.iter().map(|w| w.date()).collect();
        d.dedup();
        d
    }

    /// Row indices whose window falls on one of `days`.
    pub fn rows_on(&self, days: &[NaiveDate]) -> Vec<usize> {
        let set: HashSet<&NaiveDate> = days.iter().collect();
        (0..self.len())
            .filter(|&i| set.contains(&self.windows[i].date()))
            .collect()
    }

    /// Bar window traded by the prediction made at row `i`.
    pub fn target_window(&self, i: usize) -> NaiveDateTime {
        self.windows[i] + Duration::seconds(WINDOW_SECS)
    }

    /// Writes the matrix as CSV: window, feature columns, label. Missing
    /// values are empty fields.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), FeatureError> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec![WINDOW_COLUMN.to_string()];
        header.extend(self.columns.iter().cloned());
        header.push(LABEL_COLUMN.to_string());
        w.write_record(&header)?;
        for ((win, row), label) in self.windows.iter().zip(&self.rows).zip(&self.labels) {
            let mut rec = Vec::with_capacity(row.len() + 2);
            rec.push(win.format(TIME_FORMAT).to_string());
            rec.extend(row.iter().map(|v| if v.is_nan() { String::new() } else { v.to_string() }));
            rec.push(label.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self, FeatureError> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        if header.len() < 2 || header[0] != WINDOW_COLUMN || header[header.len() - 1] != LABEL_COLUMN {
            return Err(FeatureError::Parse {
                line: 1,
                message: format!("header must start with `{WINDOW_COLUMN}` and end with `{LABEL_COLUMN}`"),
            });
        }
        let mut m = FeatureMatrix {
            columns: header[1..header.len() - 1].to_vec(),
            ..Default::default()
        };
        for rec in r.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            let err = |message: String| FeatureError::Parse { line, message };
            let window = NaiveDateTime::parse_from_str(&rec[0], TIME_FORMAT)
                .map_err(|e| err(format!("window {:?}: {e}", &rec[0])))?;
            let n = rec.len();
            let row = (1..n - 1)
                .map(|i| {
                    let f = &rec[i];
                    if f.is_empty() {
                        Ok(f64::NAN)
                    } else {
                        f.parse::<f64>().map_err(|_| err(format!("column {}: {f:?} is not a number", header[i])))
                    }
                })
                .collect::<Result<Vec<_>, _>>()?;
            let label = match &rec[n - 1] {
                "0" => 0,
                "1" => 1,
                other => return Err(err(format!("label {other:?} is not 0 or 1"))),
            };
            m.windows.push(window);
            m.rows.push(row);
            m.labels.push(label);
        }
        Ok(m)
    }
}

/// Schema manifest written next to the matrix file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixManifest {
    pub columns: Vec<ColumnInfo>,
    pub attributes: Vec<Attribute>,
    pub label_column: String,
    pub rows: usize,
    pub days: usize,
    pub schema_hash: String,
    pub config_hash: String,
}

/// Result of [`assemble`]: the matrix plus its column descriptions.
#[derive(Debug, Clone, PartialEq)]
pub struct Assembled {
    pub matrix: FeatureMatrix,
    pub schema: Vec<ColumnInfo>,
    pub attributes: Vec<Attribute>,
}

/// Copies `x` from the `k`-th preceding row of the same day into lag
/// columns. Rows lacking any required lag are dropped. Rows must be sorted.
pub fn add_lags(
    windows: &[NaiveDateTime],
    rows: &[Vec<f64>],
    lags: &[usize],
) -> (Vec<usize>, Vec<Vec<f64>>) {
    let mut kept = Vec::new();
    let mut out = Vec::new();
    for i in 0..rows.len() {
        let day = windows[i].date();
        let ok = lags.iter().all(|&k| i >= k && windows[i - k].date() == day);
        if !ok {
            continue;
        }
        let base = rows[i].len();
        let mut row = Vec::with_capacity(base * (1 + lags.len()));
        row.extend_from_slice(&rows[i]);
        for &k in lags {
            row.extend_from_slice(&rows[i - k]);
        }
        kept.push(i);
        out.push(row);
    }
    (kept, out)
}

/// Label for the row at `window`: 1 when the next bar of the same day
/// closes above this bar's close. `None` when no bar follows at
/// `window + 5 min`.
pub fn label_for(bars: &BarSeries, window: NaiveDateTime) -> Option<u8> {
    let cur = bars.lookup(window).ok()??;
    let next = bars.lookup(window + Duration::seconds(WINDOW_SECS)).ok()??;
    if next.date() != cur.date() {
        return None;
    }
    Some(u8::from(next.close > cur.close))
}

/// Builds the labeled feature matrix. One candidate row per bar; windows
/// without tweets keep a zero count and missing aggregates.
pub fn assemble(
    tweets: &[ScoredTweet],
    bars: &BarSeries,
    reg: &ScorerRegistry,
    cfg: &FeatureConfig,
) -> Result<Assembled, FeatureError> {
    cfg.validate()?;
    let attrs = attributes(reg, cfg)?;
    let schema = column_schema(&attrs, &cfg.lags);
    let buckets = bucket_tweets(tweets);
    let empty = Vec::new();

    let mut windows = Vec::with_capacity(bars.len());
    let mut base_rows = Vec::with_capacity(bars.len());
    for bar in bars.bars() {
        let group = buckets.get(&bar.timestamp).unwrap_or(&empty);
        let agg = aggregate_window(group, &attrs);
        let mut row = Vec::with_capacity(BAR_COLUMNS.len() + 1 + attrs.len() * STAT_NAMES.len());
        row.extend([bar.open, bar.high, bar.low, bar.close].map(|d| d.to_f64().unwrap_or(f64::NAN)));
        row.push(bar.tickvol as f64);
        row.push(bar.vol as f64);
        row.push(agg.tweet_count as f64);
        for s in &agg.stats {
            match s {
                Some(s) => row.extend(s.as_array()),
                None => row.extend([f64::NAN; 6]),
            }
        }
        windows.push(bar.timestamp);
        base_rows.push(row);
    }

    let (kept, lagged) = add_lags(&windows, &base_rows, &cfg.lags);
    let mut matrix = FeatureMatrix {
        columns: schema.iter().map(|c| c.name.clone()).collect(),
        ..Default::default()
    };
    for (i, row) in kept.into_iter().zip(lagged) {
        if let Some(label) = label_for(bars, windows[i]) {
            matrix.windows.push(windows[i]);
            matrix.rows.push(row);
            matrix.labels.push(label);
        }
    }
    Ok(Assembled {
        matrix,
        schema,
        attributes: attrs,
    })
}

/// Up/down label counts with one-decimal percentages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassBalance {
    pub up: usize,
    pub down: usize,
    pub up_fraction: f64,
    pub down_fraction: f64,
    pub up_percent: String,
    pub down_percent: String,
}

pub fn class_balance(up: usize, down: usize) -> ClassBalance {
    let total = (up + down) as f64;
    let (uf, df) = if total == 0.0 {
        (0.0, 0.0)
    } else {
        (up as f64 / total, down as f64 / total)
    };
    ClassBalance {
        up,
        down,
        up_fraction: uf,
        down_fraction: df,
        up_percent: format!("{:.1}%", uf * 100.0),
        down_percent: format!("{:.1}%", df * 100.0),
    }
}

impl std::fmt::Display for ClassBalance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "up {} ({}), down {} ({})",
            self.up, self.up_percent, self.down, self.down_percent
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolarityCounts {
    pub scorer: String,
    pub negative: usize,
    pub neutral: usize,
    pub positive: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelCorrelation {
    pub column: String,
    /// Pearson correlation over rows where the column is present.
    pub value: Option<f64>,
    /// Set when the correlation is undefined (constant column or too few rows).
    pub undefined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExploratoryReport {
    pub class_balance: ClassBalance,
    pub polarity: Vec<PolarityCounts>,
    pub correlations: Vec<LabelCorrelation>,
}

pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len();
    if n < 2 || n != y.len() {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Class balance, per-scorer polarity counts over tweets, and each column's
/// correlation with the label.
pub fn exploratory_report(matrix: &FeatureMatrix, reg: &ScorerRegistry, tweets: &[ScoredTweet]) -> ExploratoryReport {
    let up = matrix.labels.iter().filter(|&&l| l == 1).count();
    let polarity = reg
        .ids()
        .enumerate()
        .map(|(i, id)| {
            let mut c = PolarityCounts {
                scorer: id.to_string(),
                negative: 0,
                neutral: 0,
                positive: 0,
            };
            for t in tweets {
                match t.sentiment.polarities[i] {
                    p if p < 0 => c.negative += 1,
                    0 => c.neutral += 1,
                    _ => c.positive += 1,
                }
            }
            c
        })
        .collect();
    let correlations = matrix
        .columns
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let (xs, ys): (Vec<f64>, Vec<f64>) = matrix
                .rows
                .iter()
                .zip(&matrix.labels)
                .filter(|(r, _)| !r[j].is_nan())
                .map(|(r, &l)| (r[j], f64::from(l)))
                .unzip();
            let value = pearson(&xs, &ys);
            LabelCorrelation {
                column: name.clone(),
                value,
                undefined: value.is_none(),
            }
        })
        .collect();
    ExploratoryReport {
        class_balance: class_balance(up, matrix.len() - up),
        polarity,
        correlations,
    }
}
