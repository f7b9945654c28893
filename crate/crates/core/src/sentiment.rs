//! Lexicon and heuristic sentiment scorers.
//!
//! Seven scorer kinds cover the mechanics of the usual sentence-level
//! methods: emoticon tables, mean valence, signed sums (with bigrams),
//! polarity word counts, mood categories, hashtag frequencies and a
//! negation/intensifier-aware valence sum. Every scorer yields a numeric
//! score and a ternary polarity.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, BufReader, Read};
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SentimentError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("lexicon `{id}`: {message}")]
    Lexicon { id: String, message: String },
    #[error("scorer `{id}`: {message}")]
    Config { id: String, message: String },
    #[error("duplicate scorer id `{0}`")]
    DuplicateId(String),
    #[error("scorer registry is empty")]
    EmptyRegistry,
    #[error("unknown builtin table `{0}`")]
    UnknownBuiltin(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Score plus ternary polarity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Score {
    pub value: f64,
    pub polarity: i8,
}

impl Score {
    fn signed(value: f64) -> Self {
        Self {
            value,
            polarity: sign(value),
        }
    }
}

fn sign(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// Term → score dictionary with its scale and neutral band.
#[derive(Debug, Clone, PartialEq)]
pub struct Lexicon {
    id: String,
    entries: HashMap<String, f64>,
    scale_min: f64,
    scale_max: f64,
    neutral_band: (f64, f64),
}

impl Lexicon {
    /// Builds a lexicon. Without an explicit scale the entries' range is used
    /// (widened by one on each side when degenerate). The neutral band
    /// defaults to `midpoint ± 1`, clamped to the scale.
    pub fn new(
        id: impl Into<String>,
        entries: HashMap<String, f64>,
        scale: Option<(f64, f64)>,
    ) -> Result<Self, SentimentError> {
        let id = id.into();
        let err = |message: String| SentimentError::Lexicon {
            id: id.clone(),
            message,
        };
        let (scale_min, scale_max) = match scale {
            Some(s) => s,
            None => {
                let lo = entries.values().copied().fold(f64::INFINITY, f64::min);
                let hi = entries.values().copied().fold(f64::NEG_INFINITY, f64::max);
                if !lo.is_finite() || lo >= hi {
                    let c = if lo.is_finite() { lo } else { 0.0 };
                    (c - 1.0, c + 1.0)
                } else {
                    (lo, hi)
                }
            }
        };
        if scale_min.partial_cmp(&scale_max) != Some(std::cmp::Ordering::Less) {
            return Err(err(format!("scale [{scale_min}, {scale_max}] is empty")));
        }
        if let Some((t, v)) = entries.iter().find(|(_, v)| !(scale_min..=scale_max).contains(*v)) {
            return Err(err(format!("entry {t:?} = {v} outside scale [{scale_min}, {scale_max}]")));
        }
        let mid = (scale_min + scale_max) / 2.0;
        let neutral_band = ((mid - 1.0).max(scale_min), (mid + 1.0).min(scale_max));
        let entries = entries.into_iter().map(|(k, v)| (k.to_lowercase(), v)).collect();
        Ok(Self {
            id,
            entries,
            scale_min,
            scale_max,
            neutral_band,
        })
    }

    pub fn with_neutral_band(mut self, lo: f64, hi: f64) -> Result<Self, SentimentError> {
        if !(self.scale_min <= lo && lo <= hi && hi <= self.scale_max) {
            return Err(SentimentError::Lexicon {
                id: self.id,
                message: format!("neutral band [{lo}, {hi}] not inside the scale"),
            });
        }
        self.neutral_band = (lo, hi);
        Ok(self)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn get(&self, term: &str) -> Option<f64> {
        self.entries.get(term).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn scale(&self) -> (f64, f64) {
        (self.scale_min, self.scale_max)
    }

    pub fn midpoint(&self) -> f64 {
        (self.scale_min + self.scale_max) / 2.0
    }

    pub fn neutral_band(&self) -> (f64, f64) {
        self.neutral_band
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, f64)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

/// Raw contents of a `term<TAB>value` file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TableFile {
    pub rows: Vec<(String, String)>,
}

/// Reads `term<TAB>value` lines, skipping blanks and `#` comments. Terms
/// are lowercased and trimmed.
pub fn read_table<R: Read>(reader: R) -> Result<TableFile, SentimentError> {
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let trimmed = line.trim_end_matches(['\r', '\n']);
        if trimmed.trim().is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (term, value) = trimmed.split_once('\t').ok_or_else(|| SentimentError::Parse {
            line: i + 1,
            message: "expected `term<TAB>value`".into(),
        })?;
        rows.push((term.trim().to_lowercase(), value.trim().to_string()));
    }
    Ok(TableFile { rows })
}

/// Parsed lexicon entries plus how many duplicate terms were overridden.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LexiconEntries {
    pub entries: HashMap<String, f64>,
    pub duplicates: usize,
}

pub fn parse_lexicon_entries<R: Read>(reader: R) -> Result<LexiconEntries, SentimentError> {
    let mut out = LexiconEntries::default();
    let mut line_of = Vec::new();
    // re-read with line numbers preserved for score errors
    let text = {
        let mut s = String::new();
        BufReader::new(reader).read_to_string(&mut s)?;
        s
    };
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        line_of.push(i + 1);
    }
    let table = read_table(text.as_bytes())?;
    for ((term, value), line) in table.rows.into_iter().zip(line_of) {
        let score: f64 = value.parse().map_err(|_| SentimentError::Parse {
            line,
            message: format!("score {value:?} is not numeric"),
        })?;
        if !score.is_finite() {
            return Err(SentimentError::Parse {
                line,
                message: format!("score {value:?} is not finite"),
            });
        }
        if out.entries.insert(term, score).is_some() {
            out.duplicates += 1;
        }
    }
    Ok(out)
}

/// Loads a `term<TAB>score` lexicon. Duplicate terms keep the last score.
pub fn load_lexicon<R: Read>(reader: R, id: &str) -> Result<Lexicon, SentimentError> {
    let parsed = parse_lexicon_entries(reader)?;
    if parsed.duplicates > 0 {
        log::warn!("lexicon `{id}`: {} duplicate terms, last entry kept", parsed.duplicates);
    }
    if parsed.entries.is_empty() {
        log::warn!("lexicon `{id}` is empty");
    }
    Lexicon::new(id, parsed.entries, None)
}

static WORD_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[\p{L}\p{M}\p{N}_']+").unwrap());
static HASHTAG_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"#[\p{L}\p{M}\p{N}_]+").unwrap());

/// Lowercased word tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let lower = text.to_lowercase();
    WORD_RE.find_iter(&lower).map(|m| m.as_str().to_string()).collect()
}

/// Emoticon → ±1 table. Keys are lowercased; matching is on lowercased text.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EmoticonTable {
    keys: Vec<(String, f64)>,
}

impl EmoticonTable {
    pub fn new(entries: impl IntoIterator<Item = (String, f64)>) -> Self {
        let mut keys: Vec<(String, f64)> = entries
            .into_iter()
            .map(|(k, v)| (k.to_lowercase(), v))
            .filter(|(k, _)| !k.is_empty())
            .collect();
        // longest first so ":-)" wins over ":)"; ties alphabetical for determinism
        keys.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.0.cmp(&b.0)));
        keys.dedup_by(|a, b| a.0 == b.0);
        Self { keys }
    }
}

fn looks_like_url(tok: &str) -> bool {
    tok.contains("://") || tok.starts_with("www.")
}

/// Polarity = sign of the summed emoticon values found in `text`.
pub fn score_emoticon(text: &str, table: &EmoticonTable) -> Score {
    let lower = text.to_lowercase();
    let mut total = 0.0;
    for tok in lower.split_whitespace().filter(|t| !looks_like_url(t)) {
        let mut rest = tok;
        while !rest.is_empty() {
            if let Some((k, v)) = table.keys.iter().find(|(k, _)| rest.starts_with(k.as_str())) {
                total += v;
                rest = &rest[k.len()..];
            } else {
                let step = rest.chars().next().map_or(1, char::len_utf8);
                rest = &rest[step..];
            }
        }
    }
    Score::signed(total)
}

/// Mean of matched entry scores; midpoint of the scale when nothing matches.
/// Polarity is relative to the lexicon's neutral band.
pub fn score_mean_valence(text: &str, lex: &Lexicon) -> Score {
    let (sum, n) = tokenize(text)
        .iter()
        .filter_map(|t| lex.get(t))
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        return Score {
            value: lex.midpoint(),
            polarity: 0,
        };
    }
    let value = sum / n as f64;
    let (lo, hi) = lex.neutral_band();
    let polarity = if value > hi {
        1
    } else if value < lo {
        -1
    } else {
        0
    };
    Score { value, polarity }
}

/// Sum of matched scores, scanning left to right and preferring a bigram
/// entry over the unigram at the same position.
pub fn score_signed_sum(text: &str, lex: &Lexicon) -> Score {
    Score::signed(signed_sum_tokens(&tokenize(text), lex))
}

fn signed_sum_tokens(tokens: &[String], lex: &Lexicon) -> f64 {
    let mut total = 0.0;
    let mut i = 0;
    while i < tokens.len() {
        if i + 1 < tokens.len() {
            if let Some(v) = lex.get(&format!("{} {}", tokens[i], tokens[i + 1])) {
                total += v;
                i += 2;
                continue;
            }
        }
        if let Some(v) = lex.get(&tokens[i]) {
            total += v;
        }
        i += 1;
    }
    total
}

/// Disjoint positive / negative term sets.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PolaritySets {
    positive: HashSet<String>,
    negative: HashSet<String>,
}

impl PolaritySets {
    pub fn new(
        positive: impl IntoIterator<Item = String>,
        negative: impl IntoIterator<Item = String>,
    ) -> Result<Self, SentimentError> {
        let positive: HashSet<String> = positive.into_iter().map(|t| t.to_lowercase()).collect();
        let negative: HashSet<String> = negative.into_iter().map(|t| t.to_lowercase()).collect();
        let mut overlap: Vec<&String> = positive.intersection(&negative).collect();
        if !overlap.is_empty() {
            overlap.sort();
            return Err(SentimentError::Config {
                id: "polarity_count".into(),
                message: format!("terms in both sets: {overlap:?}"),
            });
        }
        Ok(Self { positive, negative })
    }

    /// Positive-scored entries go to the positive set, negative to the negative.
    pub fn from_lexicon(lex: &Lexicon) -> Self {
        let mut positive = HashSet::new();
        let mut negative = HashSet::new();
        for (t, v) in lex.entries() {
            if v > 0.0 {
                positive.insert(t.to_string());
            } else if v < 0.0 {
                negative.insert(t.to_string());
            }
        }
        Self { positive, negative }
    }
}

/// Score = (#positive matches − #negative matches).
pub fn score_polarity_count(text: &str, sets: &PolaritySets) -> Score {
    let mut diff = 0i64;
    for t in tokenize(text) {
        if sets.positive.contains(&t) {
            diff += 1;
        } else if sets.negative.contains(&t) {
            diff -= 1;
        }
    }
    Score::signed(diff as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MoodCategory {
    pub name: String,
    pub sign: i8,
    pub terms: HashSet<String>,
}

/// Mood categories with a term → category index.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MoodTable {
    categories: Vec<MoodCategory>,
    index: HashMap<String, usize>,
}

impl MoodTable {
    pub fn new(categories: Vec<MoodCategory>) -> Result<Self, SentimentError> {
        let mut index = HashMap::new();
        for (ci, cat) in categories.iter().enumerate() {
            if !(-1..=1).contains(&cat.sign) {
                return Err(SentimentError::Config {
                    id: cat.name.clone(),
                    message: format!("category sign {} not in {{-1, 0, 1}}", cat.sign),
                });
            }
            for term in &cat.terms {
                if let Some(prev) = index.insert(term.to_lowercase(), ci) {
                    return Err(SentimentError::Config {
                        id: cat.name.clone(),
                        message: format!(
                            "term {term:?} also belongs to category `{}`",
                            categories[prev].name
                        ),
                    });
                }
            }
        }
        Ok(Self { categories, index })
    }

    /// Builds categories from `term<TAB>category` rows; categories missing
    /// from `signs` get sign 0.
    pub fn from_rows(rows: &[(String, String)], signs: &BTreeMap<String, i8>) -> Result<Self, SentimentError> {
        let mut order: Vec<String> = Vec::new();
        let mut terms: HashMap<String, HashSet<String>> = HashMap::new();
        for (term, cat) in rows {
            if !terms.contains_key(cat) {
                order.push(cat.clone());
            }
            terms.entry(cat.clone()).or_default().insert(term.clone());
        }
        let categories = order
            .into_iter()
            .map(|name| MoodCategory {
                sign: signs.get(&name).copied().unwrap_or(0),
                terms: terms.remove(&name).unwrap_or_default(),
                name,
            })
            .collect();
        Self::new(categories)
    }

    pub fn categories(&self) -> &[MoodCategory] {
        &self.categories
    }
}

/// Polarity of the category with the most matches; ties and no matches give 0.
pub fn score_mood_categories(text: &str, table: &MoodTable) -> Score {
    let mut hits = vec![0usize; table.categories.len()];
    for t in tokenize(text) {
        if let Some(&ci) = table.index.get(&t) {
            hits[ci] += 1;
        }
    }
    let best = hits.iter().copied().max().unwrap_or(0);
    if best == 0 || hits.iter().filter(|&&h| h == best).count() > 1 {
        return Score::signed(0.0);
    }
    let ci = hits.iter().position(|&h| h == best).expect("max exists");
    Score::signed(f64::from(table.categories[ci].sign))
}

/// Hashtag → score table. Keys are stored lowercase with the leading `#`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct HashtagTable {
    tags: HashMap<String, f64>,
}

impl HashtagTable {
    pub fn new(entries: impl IntoIterator<Item = (String, f64)>) -> Self {
        let tags = entries
            .into_iter()
            .map(|(k, v)| {
                let k = k.to_lowercase();
                let k = if k.starts_with('#') { k } else { format!("#{k}") };
                (k, v)
            })
            .collect();
        Self { tags }
    }
}

/// Frequency-weighted sum of known hashtag scores.
pub fn score_hashtag_freq(text: &str, table: &HashtagTable) -> Score {
    let lower = text.to_lowercase();
    let total = HASHTAG_RE
        .find_iter(&lower)
        .filter_map(|m| table.tags.get(m.as_str()))
        .sum();
    Score::signed(total)
}

/// Negation, intensifier and elongation rules for the heuristic scorer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeuristicRules {
    pub negations: Vec<String>,
    pub intensifiers: Vec<String>,
    pub intensifier_factor: f64,
    /// A modifier reaches the next matched term at most this many tokens ahead.
    pub window: usize,
    pub elongation_factor: f64,
}

impl Default for HeuristicRules {
    fn default() -> Self {
        let words = |ws: &[&str]| ws.iter().map(|w| w.to_string()).collect();
        Self {
            negations: words(&["não", "nao", "nunca", "jamais", "nem", "not", "no", "never"]),
            intensifiers: words(&[
                "muito", "muita", "super", "extremamente", "bastante", "demais", "very", "really", "extremely",
            ]),
            intensifier_factor: 1.5,
            window: 3,
            elongation_factor: 1.25,
        }
    }
}

/// `HeuristicRules` with its term lists indexed.
#[derive(Debug, Clone, PartialEq)]
pub struct CompiledRules {
    negations: HashSet<String>,
    intensifiers: HashSet<String>,
    intensifier_factor: f64,
    window: usize,
    elongation_factor: f64,
}

impl From<&HeuristicRules> for CompiledRules {
    fn from(r: &HeuristicRules) -> Self {
        Self {
            negations: r.negations.iter().map(|t| t.to_lowercase()).collect(),
            intensifiers: r.intensifiers.iter().map(|t| t.to_lowercase()).collect(),
            intensifier_factor: r.intensifier_factor,
            window: r.window,
            elongation_factor: r.elongation_factor,
        }
    }
}

/// True when some letter repeats three or more times in a row.
pub fn is_elongated(token: &str) -> bool {
    let mut prev = None;
    let mut run = 0;
    for c in token.chars() {
        if Some(c) == prev && c.is_alphabetic() {
            run += 1;
            if run >= 3 {
                return true;
            }
        } else {
            run = 1;
        }
        prev = Some(c);
    }
    false
}

fn collapse_runs(token: &str, keep: usize) -> String {
    let mut out = String::with_capacity(token.len());
    let mut prev = None;
    let mut run = 0;
    for c in token.chars() {
        if Some(c) == prev {
            run += 1;
        } else {
            run = 1;
        }
        prev = Some(c);
        if run <= keep || !c.is_alphabetic() {
            out.push(c);
        }
    }
    out
}

/// Lexicon value for `token`, trying collapsed spellings of elongated words.
/// Returns the value and whether the token was elongated.
fn lookup_elongated(token: &str, lex: &Lexicon) -> Option<(f64, bool)> {
    let elongated = is_elongated(token);
    if let Some(v) = lex.get(token) {
        return Some((v, elongated));
    }
    if !elongated {
        return None;
    }
    lex.get(&collapse_runs(token, 2))
        .or_else(|| lex.get(&collapse_runs(token, 1)))
        .map(|v| (v, true))
}

enum Modifier {
    Negate,
    Intensify,
}

/// Valence sum with negation flips, intensifier multipliers and an
/// elongation boost.
pub fn score_heuristic_valence(text: &str, lex: &Lexicon, rules: &CompiledRules) -> Score {
    let mut pending: Vec<(usize, Modifier)> = Vec::new();
    let mut total = 0.0;
    for (i, tok) in tokenize(text).iter().enumerate() {
        if rules.negations.contains(tok) {
            pending.push((i, Modifier::Negate));
            continue;
        }
        if rules.intensifiers.contains(tok) {
            pending.push((i, Modifier::Intensify));
            continue;
        }
        let Some((mut v, elongated)) = lookup_elongated(tok, lex) else {
            continue;
        };
        if elongated {
            v *= rules.elongation_factor;
        }
        for (j, m) in pending.drain(..) {
            if i - j <= rules.window {
                match m {
                    Modifier::Negate => v = -v,
                    Modifier::Intensify => v *= rules.intensifier_factor,
                }
            }
        }
        total += v;
    }
    Score::signed(total)
}

/// Which text a scorer sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    /// The original post text, before cleaning.
    PreStrip,
    /// The cleaned text.
    PostStrip,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScorerKind {
    Emoticon(EmoticonTable),
    MeanValence(Lexicon),
    SignedSum(Lexicon),
    PolarityCount(PolaritySets),
    MoodCategories(MoodTable),
    HashtagFreq(HashtagTable),
    HeuristicValence(Lexicon, CompiledRules),
}

impl ScorerKind {
    pub fn score(&self, text: &str) -> Score {
        match self {
            Self::Emoticon(t) => score_emoticon(text, t),
            Self::MeanValence(l) => score_mean_valence(text, l),
            Self::SignedSum(l) => score_signed_sum(text, l),
            Self::PolarityCount(s) => score_polarity_count(text, s),
            Self::MoodCategories(m) => score_mood_categories(text, m),
            Self::HashtagFreq(h) => score_hashtag_freq(text, h),
            Self::HeuristicValence(l, r) => score_heuristic_valence(text, l, r),
        }
    }

    /// Polarity implied by `value` under this kind's neutral definition.
    pub fn polarity_of(&self, value: f64) -> i8 {
        match self {
            Self::MeanValence(l) => {
                let (lo, hi) = l.neutral_band();
                if value > hi {
                    1
                } else if value < lo {
                    -1
                } else {
                    0
                }
            }
            _ => sign(value),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scorer {
    pub id: String,
    pub kind: ScorerKind,
    pub stage: Stage,
}

/// Ordered scorers; the order defines feature-column order.
#[derive(Debug, Clone, PartialEq)]
pub struct ScorerRegistry {
    scorers: Vec<Scorer>,
}

impl ScorerRegistry {
    pub fn new(scorers: Vec<Scorer>) -> Result<Self, SentimentError> {
        if scorers.is_empty() {
            return Err(SentimentError::EmptyRegistry);
        }
        let mut seen = HashSet::new();
        for s in &scorers {
            if !seen.insert(s.id.as_str()) {
                return Err(SentimentError::DuplicateId(s.id.clone()));
            }
        }
        Ok(Self { scorers })
    }

    pub fn scorers(&self) -> &[Scorer] {
        &self.scorers
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.scorers.iter().map(|s| s.id.as_str())
    }

    pub fn len(&self) -> usize {
        self.scorers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scorers.is_empty()
    }
}

/// Scores and polarities, one per registered scorer in registry order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentimentVector {
    pub scores: Vec<f64>,
    pub polarities: Vec<i8>,
}

/// Runs every scorer. Pre-strip scorers see `raw_text`, post-strip ones
/// `clean_text`.
pub fn score_all(raw_text: &str, clean_text: &str, reg: &ScorerRegistry) -> SentimentVector {
    let (scores, polarities) = reg
        .scorers
        .iter()
        .map(|s| {
            let text = match s.stage {
                Stage::PreStrip => raw_text,
                Stage::PostStrip => clean_text,
            };
            let sc = s.kind.score(text);
            (sc.value, sc.polarity)
        })
        .unzip();
    SentimentVector { scores, polarities }
}

/// Scorer kinds as named in run configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KindName {
    Emoticon,
    MeanValence,
    SignedSum,
    PolarityCount,
    MoodCategories,
    HashtagFreq,
    HeuristicValence,
}

impl KindName {
    pub fn default_stage(self) -> Stage {
        match self {
            Self::Emoticon | Self::HashtagFreq => Stage::PreStrip,
            _ => Stage::PostStrip,
        }
    }
}

/// Declarative scorer entry of a run config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerDecl {
    pub id: String,
    pub kind: KindName,
    /// Table file relative to the lexicon directory, or `builtin:<name>`.
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<Stage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub neutral_band: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category_signs: Option<BTreeMap<String, i8>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rules: Option<HeuristicRules>,
}

const BUILTIN: [(&str, &str); 6] = [
    ("signed", include_str!("../lexicons/signed.tsv")),
    ("valence", include_str!("../lexicons/valence.tsv")),
    ("opinion", include_str!("../lexicons/opinion.tsv")),
    ("mood", include_str!("../lexicons/mood.tsv")),
    ("emoticons", include_str!("../lexicons/emoticons.tsv")),
    ("hashtags", include_str!("../lexicons/hashtags.tsv")),
];

/// Contents of a bundled demonstration table.
pub fn builtin_table(name: &str) -> Option<&'static str> {
    BUILTIN.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

fn default_mood_signs() -> BTreeMap<String, i8> {
    [
        ("joviality", 1),
        ("assurance", 1),
        ("serenity", 1),
        ("surprise", 1),
        ("fear", -1),
        ("sadness", -1),
        ("guilt", -1),
        ("hostility", -1),
        ("fatigue", 0),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

impl ScorerDecl {
    pub fn new(id: &str, kind: KindName, source: &str) -> Self {
        Self {
            id: id.to_string(),
            kind,
            source: source.to_string(),
            stage: None,
            scale: None,
            neutral_band: None,
            category_signs: None,
            rules: None,
        }
    }

    /// Builds the scorer from the table text already loaded from `source`.
    pub fn build(&self, table_text: &str) -> Result<Scorer, SentimentError> {
        let cfg_err = |message: String| SentimentError::Config {
            id: self.id.clone(),
            message,
        };
        let lexicon = || -> Result<Lexicon, SentimentError> {
            let parsed = parse_lexicon_entries(table_text.as_bytes())?;
            if parsed.duplicates > 0 {
                log::warn!("scorer `{}`: {} duplicate terms, last kept", self.id, parsed.duplicates);
            }
            let mut lex = Lexicon::new(&self.id, parsed.entries, self.scale.map(|[a, b]| (a, b)))?;
            if let Some([lo, hi]) = self.neutral_band {
                lex = lex.with_neutral_band(lo, hi)?;
            }
            Ok(lex)
        };
        let kind = match self.kind {
            KindName::Emoticon => {
                let lex = lexicon()?;
                ScorerKind::Emoticon(EmoticonTable::new(lex.entries().map(|(k, v)| (k.to_string(), v))))
            }
            KindName::MeanValence => ScorerKind::MeanValence(lexicon()?),
            KindName::SignedSum => ScorerKind::SignedSum(lexicon()?),
            KindName::PolarityCount => ScorerKind::PolarityCount(PolaritySets::from_lexicon(&lexicon()?)),
            KindName::MoodCategories => {
                let table = read_table(table_text.as_bytes())?;
                let signs = self.category_signs.clone().unwrap_or_else(default_mood_signs);
                ScorerKind::MoodCategories(
                    MoodTable::from_rows(&table.rows, &signs).map_err(|e| cfg_err(e.to_string()))?,
                )
            }
            KindName::HashtagFreq => {
                let lex = lexicon()?;
                ScorerKind::HashtagFreq(HashtagTable::new(lex.entries().map(|(k, v)| (k.to_string(), v))))
            }
            KindName::HeuristicValence => {
                let rules = self.rules.clone().unwrap_or_default();
                if rules.window == 0 {
                    return Err(cfg_err("negation window must be positive".into()));
                }
                ScorerKind::HeuristicValence(lexicon()?, CompiledRules::from(&rules))
            }
        };
        Ok(Scorer {
            id: self.id.clone(),
            kind,
            stage: self.stage.unwrap_or(self.kind.default_stage()),
        })
    }
}

/// Builds a registry, resolving `builtin:` sources internally and others
/// through `load`.
pub fn build_registry(
    decls: &[ScorerDecl],
    mut load: impl FnMut(&str) -> Result<String, SentimentError>,
) -> Result<ScorerRegistry, SentimentError> {
    let scorers = decls
        .iter()
        .map(|d| {
            let text = match d.source.strip_prefix("builtin:") {
                Some(name) => builtin_table(name)
                    .ok_or_else(|| SentimentError::UnknownBuiltin(name.to_string()))?
                    .to_string(),
                None => load(&d.source)?,
            };
            d.build(&text)
        })
        .collect::<Result<Vec<_>, _>>()?;
    ScorerRegistry::new(scorers)
}

/// One scorer of each kind over the bundled tables.
pub fn demo_decls() -> Vec<ScorerDecl> {
    let mut valence = ScorerDecl::new("valence", KindName::MeanValence, "builtin:valence");
    valence.scale = Some([1.0, 9.0]);
    vec![
        ScorerDecl::new("emoticons", KindName::Emoticon, "builtin:emoticons"),
        valence,
        ScorerDecl::new("afinn", KindName::SignedSum, "builtin:signed"),
        ScorerDecl::new("opinion", KindName::PolarityCount, "builtin:opinion"),
        ScorerDecl::new("panas", KindName::MoodCategories, "builtin:mood"),
        ScorerDecl::new("hashtags", KindName::HashtagFreq, "builtin:hashtags"),
        ScorerDecl::new("vader", KindName::HeuristicValence, "builtin:signed"),
    ]
}

pub fn demo_registry() -> ScorerRegistry {
    build_registry(&demo_decls(), |src| {
        Err(SentimentError::UnknownBuiltin(src.to_string()))
    })
    .expect("bundled tables are valid")
}
