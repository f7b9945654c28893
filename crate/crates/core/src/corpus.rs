//! Tweet ingestion and cleaning.
//!
//! Cleaning order is fixed: URLs, then `@` mentions, then non-alphabetic
//! characters (or emoji / punctuation individually), then whitespace collapse.
//! The whole pass is repeated until the text stops changing, so the result is
//! always a fixed point.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, BufReader, Read};
use std::sync::LazyLock;

use chrono::{DateTime, Duration, NaiveDateTime, Timelike, Utc};
use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("line {line}: missing field `{field}`")]
    MissingField { line: u64, field: &'static str },
    #[error("line {line}: field `{field}` is negative")]
    NegativeCount { line: u64, field: &'static str },
    #[error("line {line}: text is empty")]
    EmptyText { line: u64 },
    #[error("text transform `{hook}` failed on record {index}: {message}")]
    Transform {
        hook: String,
        index: usize,
        message: String,
    },
    #[error("invalid cleaning config: {0}")]
    Config(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// A post as retrieved, before any cleaning.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawTweet {
    pub created_at: DateTime<Utc>,
    pub text: String,
    pub like: u64,
    pub quote: u64,
    pub reply: u64,
    pub retweet: u64,
    pub user_followers: u64,
    pub user_following: u64,
    pub user_tweets: u64,
    pub user_listed: u64,
}

/// A cleaned, filtered post with local-time attributes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanTweet {
    #[serde(flatten)]
    pub raw: RawTweet,
    pub clean_text: String,
    pub local_time: NaiveDateTime,
    pub hour: u32,
    pub word_count: usize,
    pub text_length: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CleaningConfig {
    pub strip_urls: bool,
    pub strip_mentions: bool,
    pub strip_nonalpha: bool,
    pub strip_emoji: bool,
    pub strip_punctuation: bool,
    pub min_words: usize,
    pub min_chars: usize,
    pub timezone_offset: i32,
}

impl Default for CleaningConfig {
    fn default() -> Self {
        Self {
            strip_urls: true,
            strip_mentions: true,
            strip_nonalpha: true,
            strip_emoji: true,
            strip_punctuation: true,
            min_words: 3,
            min_chars: 20,
            timezone_offset: -3,
        }
    }
}

impl CleaningConfig {
    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.min_words < 1 {
            return Err(CorpusError::Config("min_words must be at least 1".into()));
        }
        if !(-14..=14).contains(&self.timezone_offset) {
            return Err(CorpusError::Config(format!(
                "timezone offset {} out of range",
                self.timezone_offset
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TweetFileKind {
    /// One JSON object per line.
    #[default]
    JsonLines,
    /// Delimiter-separated text with a header row.
    Delimited,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TweetFormatConfig {
    pub kind: TweetFileKind,
    pub delimiter: char,
    /// `None` accepts RFC 3339 or `YYYY-MM-DD HH:MM:SS` (read as UTC).
    pub timestamp_format: Option<String>,
}

impl Default for TweetFormatConfig {
    fn default() -> Self {
        Self {
            kind: TweetFileKind::JsonLines,
            delimiter: ',',
            timestamp_format: None,
        }
    }
}

const COUNT_FIELDS: [&str; 8] = [
    "like",
    "quote",
    "reply",
    "retweet",
    "user_followers",
    "user_following",
    "user_tweets",
    "user_listed",
];

fn parse_timestamp(s: &str, fmt: Option<&str>, line: u64) -> Result<DateTime<Utc>, CorpusError> {
    let s = s.trim();
    let bad = || CorpusError::Parse {
        line,
        message: format!("cannot parse timestamp {s:?}"),
    };
    match fmt {
        Some(f) => NaiveDateTime::parse_from_str(s, f)
            .map(|n| n.and_utc())
            .map_err(|_| bad()),
        None => DateTime::parse_from_rfc3339(s)
            .map(|d| d.with_timezone(&Utc))
            .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S").map(|n| n.and_utc()))
            .map_err(|_| bad()),
    }
}

/// Field accessor abstracting over JSON objects and CSV rows.
trait Record {
    fn text_field(&self, name: &str) -> Option<String>;
    fn count_field(&self, name: &'static str, line: u64) -> Result<Option<u64>, CorpusError>;
}

fn parse_count_str(s: &str, name: &'static str, line: u64) -> Result<u64, CorpusError> {
    let s = s.trim();
    match s.parse::<i64>() {
        Ok(v) if v < 0 => Err(CorpusError::NegativeCount { line, field: name }),
        Ok(v) => Ok(v as u64),
        Err(_) => s.parse::<u64>().map_err(|_| CorpusError::Parse {
            line,
            message: format!("field `{name}`: {s:?} is not a count"),
        }),
    }
}

impl Record for HashMap<String, Value> {
    fn text_field(&self, name: &str) -> Option<String> {
        match self.get(name)? {
            Value::String(s) => Some(s.clone()),
            Value::Null => None,
            other => Some(other.to_string()),
        }
    }

    fn count_field(&self, name: &'static str, line: u64) -> Result<Option<u64>, CorpusError> {
        match self.get(name) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::Number(n)) => {
                if let Some(v) = n.as_u64() {
                    Ok(Some(v))
                } else if n.as_i64().is_some_and(|v| v < 0) || n.as_f64().is_some_and(|v| v < 0.0) {
                    Err(CorpusError::NegativeCount { line, field: name })
                } else {
                    Err(CorpusError::Parse {
                        line,
                        message: format!("field `{name}`: {n} is not a count"),
                    })
                }
            }
            Some(Value::String(s)) => parse_count_str(s, name, line).map(Some),
            Some(other) => Err(CorpusError::Parse {
                line,
                message: format!("field `{name}`: unexpected value {other}"),
            }),
        }
    }
}

struct CsvRow<'a> {
    headers: &'a [String],
    record: csv::StringRecord,
}

impl Record for CsvRow<'_> {
    fn text_field(&self, name: &str) -> Option<String> {
        let i = self.headers.iter().position(|h| h == name)?;
        self.record.get(i).map(str::to_string)
    }

    fn count_field(&self, name: &'static str, line: u64) -> Result<Option<u64>, CorpusError> {
        match self.text_field(name) {
            None => Ok(None),
            Some(s) if s.trim().is_empty() => Ok(None),
            Some(s) => parse_count_str(&s, name, line).map(Some),
        }
    }
}

fn build_raw(rec: &impl Record, line: u64, fmt: &TweetFormatConfig) -> Result<RawTweet, CorpusError> {
    let created = rec
        .text_field("created_at")
        .ok_or(CorpusError::MissingField { line, field: "created_at" })?;
    let created_at = parse_timestamp(&created, fmt.timestamp_format.as_deref(), line)?;
    let text = rec
        .text_field("text")
        .ok_or(CorpusError::MissingField { line, field: "text" })?;
    if text.trim().is_empty() {
        return Err(CorpusError::EmptyText { line });
    }
    let mut counts = [0u64; 8];
    for (slot, name) in counts.iter_mut().zip(COUNT_FIELDS) {
        *slot = rec
            .count_field(name, line)?
            .ok_or(CorpusError::MissingField { line, field: name })?;
    }
    let [like, quote, reply, retweet, user_followers, user_following, user_tweets, user_listed] = counts;
    Ok(RawTweet {
        created_at,
        text,
        like,
        quote,
        reply,
        retweet,
        user_followers,
        user_following,
        user_tweets,
        user_listed,
    })
}

/// Reads tweet records; field names are matched case-insensitively and
/// unknown fields are ignored.
pub fn parse_tweets<R: Read>(reader: R, format: &TweetFormatConfig) -> Result<Vec<RawTweet>, CorpusError> {
    match format.kind {
        TweetFileKind::JsonLines => {
            let mut out = Vec::new();
            for (i, line) in BufReader::new(reader).lines().enumerate() {
                let line_no = i as u64 + 1;
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let obj: serde_json::Map<String, Value> =
                    serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
                        line: line_no,
                        message: e.to_string(),
                    })?;
                let rec: HashMap<String, Value> =
                    obj.into_iter().map(|(k, v)| (k.to_lowercase(), v)).collect();
                out.push(build_raw(&rec, line_no, format)?);
            }
            Ok(out)
        }
        TweetFileKind::Delimited => {
            let delim = u8::try_from(format.delimiter)
                .map_err(|_| CorpusError::Config("delimiter must be a single byte".into()))?;
            let mut rdr = csv::ReaderBuilder::new().delimiter(delim).from_reader(reader);
            let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_lowercase()).collect();
            let mut out = Vec::new();
            for record in rdr.records() {
                let record = record?;
                let line = record.position().map_or(0, |p| p.line());
                let row = CsvRow {
                    headers: &headers,
                    record,
                };
                out.push(build_raw(&row, line, format)?);
            }
            Ok(out)
        }
    }
}

static URL_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)(?:https?://|www\.)\S+").unwrap());
static MENTION_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(^|\s)@\S*").unwrap());
static NONALPHA_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[^\p{L}\p{M}\s]").unwrap());
static EMOJI_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"[\p{Extended_Pictographic}\p{Emoji_Modifier}\x{FE0F}\x{200D}]").unwrap()
});
static PUNCT_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\p{P}").unwrap());
static SPACE_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\s+").unwrap());

fn clean_once(text: &str, cfg: &CleaningConfig) -> String {
    let mut s = text.to_string();
    if cfg.strip_urls {
        s = URL_RE.replace_all(&s, "").into_owned();
    }
    if cfg.strip_mentions {
        s = MENTION_RE.replace_all(&s, "$1").into_owned();
    }
    if cfg.strip_nonalpha {
        s = NONALPHA_RE.replace_all(&s, "").into_owned();
    }
    if cfg.strip_emoji {
        s = EMOJI_RE.replace_all(&s, "").into_owned();
    }
    if cfg.strip_punctuation {
        s = PUNCT_RE.replace_all(&s, "").into_owned();
    }
    SPACE_RE.replace_all(&s, " ").trim().to_string()
}

/// Applies the configured strips and collapses whitespace. Idempotent.
pub fn clean_text(raw: &str, cfg: &CleaningConfig) -> String {
    let mut cur = clean_once(raw, cfg);
    loop {
        let next = clean_once(&cur, cfg);
        if next == cur {
            return cur;
        }
        cur = next;
    }
}

/// Converts a UTC instant into local time and its hour.
pub fn normalize_time(t_utc: DateTime<Utc>, cfg: &CleaningConfig) -> (NaiveDateTime, u32) {
    let local = t_utc.naive_utc() + Duration::hours(i64::from(cfg.timezone_offset));
    (local, local.hour())
}

/// Drops records repeating an earlier `(created_at, text)` pair.
pub fn dedup(tweets: Vec<RawTweet>) -> Vec<RawTweet> {
    let mut seen = HashSet::new();
    tweets
        .into_iter()
        .filter(|t| seen.insert((t.created_at, t.text.clone())))
        .collect()
}

pub fn filter_short(tweets: Vec<CleanTweet>, cfg: &CleaningConfig) -> Vec<CleanTweet> {
    tweets
        .into_iter()
        .filter(|t| t.word_count >= cfg.min_words && t.text_length >= cfg.min_chars)
        .collect()
}

pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// A pluggable text pass applied to cleaned text before scoring (e.g. a
/// translation step).
pub trait TextTransform: Send + Sync {
    fn name(&self) -> &str;
    fn apply(&self, text: &str) -> Result<String, String>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Identity;

impl TextTransform for Identity {
    fn name(&self) -> &str {
        "identity"
    }

    fn apply(&self, text: &str) -> Result<String, String> {
        Ok(text.to_string())
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Uppercase;

impl TextTransform for Uppercase {
    fn name(&self) -> &str {
        "uppercase"
    }

    fn apply(&self, text: &str) -> Result<String, String> {
        Ok(text.to_uppercase())
    }
}

/// Looks up a transform by the name used in run configs.
pub fn transform_by_name(name: &str) -> Option<Box<dyn TextTransform>> {
    match name {
        "identity" => Some(Box::new(Identity)),
        "uppercase" => Some(Box::new(Uppercase)),
        _ => None,
    }
}

/// Applies `hook` to one text; `index` identifies the record in errors.
pub fn transform_hook(text: &str, hook: &dyn TextTransform, index: usize) -> Result<String, CorpusError> {
    hook.apply(text).map_err(|message| CorpusError::Transform {
        hook: hook.name().to_string(),
        index,
        message,
    })
}

/// Record counts through the cleaning stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct CleaningStats {
    pub input: usize,
    pub after_dedup: usize,
    pub kept: usize,
}

/// Full cleaning pass: dedup, clean, transform, localize, filter.
pub fn prepare(
    raw: Vec<RawTweet>,
    cfg: &CleaningConfig,
    hook: &dyn TextTransform,
) -> Result<(Vec<CleanTweet>, CleaningStats), CorpusError> {
    cfg.validate()?;
    let input = raw.len();
    let deduped = dedup(raw);
    let after_dedup = deduped.len();
    let mut cleaned = Vec::with_capacity(after_dedup);
    for (index, tweet) in deduped.into_iter().enumerate() {
        let stripped = clean_text(&tweet.text, cfg);
        let clean = transform_hook(&stripped, hook, index)?;
        let (local_time, hour) = normalize_time(tweet.created_at, cfg);
        cleaned.push(CleanTweet {
            word_count: word_count(&clean),
            text_length: clean.chars().count(),
            clean_text: clean,
            local_time,
            hour,
            raw: tweet,
        });
    }
    let kept = filter_short(cleaned, cfg);
    let stats = CleaningStats {
        input,
        after_dedup,
        kept: kept.len(),
    };
    Ok((kept, stats))
}
