//! Synthetic bars and posts with a planted sentiment signal.
//!
//! Every window gets a sentiment sign carried by its posts; the next bar
//! moves in that direction with probability `agreement`. Prices move in
//! fixed ticks and each bar opens at the previous close.

use std::io::Write;

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, NaiveTime, Weekday};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use crate::bars::{Bar, BarSeries, WINDOW_SECS};
use crate::corpus::RawTweet;

const POSITIVE: [&str; 10] = [
    "alta", "lucro", "forte", "bom", "ótimo", "subindo", "otimista", "valorizou", "recorde", "dividendos",
];
const NEGATIVE: [&str; 10] = [
    "queda", "prejuízo", "fraco", "ruim", "péssimo", "caindo", "pessimista", "despencou", "crise", "perdas",
];
const FILLER: [&str; 12] = [
    "petrobras", "hoje", "mercado", "ação", "papel", "bolsa", "agora", "petróleo", "pregão", "semana", "investidores",
    "ibovespa",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub days: usize,
    pub bars_per_day: usize,
    pub first_day: NaiveDate,
    pub session_start: NaiveTime,
    /// Probability that bar t+1 moves in the direction of window t's sentiment.
    pub agreement: f64,
    pub start_price: Decimal,
    pub tick: Decimal,
    pub min_tweets: usize,
    pub max_tweets: usize,
    /// Hours added to local time to get UTC.
    pub utc_shift_hours: i64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            days: 80,
            bars_per_day: 75,
            first_day: NaiveDate::from_ymd_opt(2021, 1, 4).unwrap(),
            session_start: NaiveTime::from_hms_opt(10, 30, 0).unwrap(),
            agreement: 0.6,
            start_price: Decimal::new(3000, 2),
            tick: Decimal::new(5, 2),
            min_tweets: 1,
            max_tweets: 3,
            utc_shift_hours: 3,
            seed: 20211027,
        }
    }
}

/// Generated bars and posts, plus the planted per-window sentiment sign.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub bars: Vec<Bar>,
    pub tweets: Vec<RawTweet>,
    pub signs: Vec<(NaiveDateTime, i8)>,
}

impl SynthData {
    pub fn series(&self, session_end: NaiveTime) -> BarSeries {
        let start = self.bars.first().map_or(NaiveTime::MIN, |b| b.timestamp.time());
        BarSeries::from_bars(self.bars.clone(), start, session_end)
            .expect("generated bars are unique")
            .0
    }
}

fn weekdays(first: NaiveDate, n: usize) -> Vec<NaiveDate> {
    first
        .iter_days()
        .filter(|d| !matches!(d.weekday(), Weekday::Sat | Weekday::Sun))
        .take(n)
        .collect()
}

fn post_text(rng: &mut ChaCha8Rng, sign: i8) -> String {
    let pool: &[&str] = if sign > 0 { &POSITIVE } else { &NEGATIVE };
    let mut words: Vec<&str> = vec![pool.choose(rng).copied().expect("non-empty pool")];
    if rng.random_bool(0.3) {
        words.push(pool.choose(rng).copied().expect("non-empty pool"));
    }
    while words.len() < 4 || words.iter().map(|w| w.chars().count() + 1).sum::<usize>() < 26 {
        words.push(FILLER.choose(rng).copied().expect("non-empty pool"));
    }
    // shuffle with the same generator for reproducibility
    for i in (1..words.len()).rev() {
        let j = rng.random_range(0..=i);
        words.swap(i, j);
    }
    let mut text = words.join(" ");
    if rng.random_bool(0.2) {
        text = format!("@trader{} {text}", rng.random_range(1..100));
    }
    if rng.random_bool(0.3) {
        text.push_str(" #PETR4");
    }
    if rng.random_bool(0.2) {
        text.push_str(&format!(" https://t.co/{:x}", rng.random::<u32>()));
    }
    text
}

pub fn generate(cfg: &SynthConfig) -> SynthData {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut price = cfg.start_price;
    let floor = cfg.tick * Decimal::from(20);
    let mut bars = Vec::with_capacity(cfg.days * cfg.bars_per_day);
    let mut tweets = Vec::new();
    let mut signs = Vec::new();
    for day in weekdays(cfg.first_day, cfg.days) {
        let mut prev_sign: Option<i8> = None;
        for j in 0..cfg.bars_per_day {
            let ts = day.and_time(cfg.session_start) + Duration::seconds(WINDOW_SECS * j as i64);
            let up = match prev_sign {
                Some(s) => (s > 0) == rng.random_bool(cfg.agreement),
                None => rng.random_bool(0.5),
            };
            let open = price;
            let mut close = if up { open + cfg.tick } else { open - cfg.tick };
            if close < floor {
                close = open + cfg.tick;
            }
            let wick = |rng: &mut ChaCha8Rng| Decimal::new(rng.random_range(0..3), 2);
            let tickvol: u64 = rng.random_range(50..800);
            bars.push(Bar {
                timestamp: ts,
                open,
                high: open.max(close) + wick(&mut rng),
                low: open.min(close) - wick(&mut rng),
                close,
                tickvol,
                vol: tickvol * 100 * rng.random_range(1..20),
                spread: 0,
            });
            price = close;

            let sign: i8 = if rng.random_bool(0.5) { 1 } else { -1 };
            signs.push((ts, sign));
            prev_sign = Some(sign);
            let n = rng.random_range(cfg.min_tweets..=cfg.max_tweets);
            let mut offsets: Vec<i64> = (0..n).map(|_| rng.random_range(0..WINDOW_SECS)).collect();
            offsets.sort_unstable();
            for off in offsets {
                let local = ts + Duration::seconds(off);
                tweets.push(RawTweet {
                    created_at: (local + Duration::hours(cfg.utc_shift_hours)).and_utc(),
                    text: post_text(&mut rng, sign),
                    like: rng.random_range(0..50),
                    quote: rng.random_range(0..5),
                    reply: rng.random_range(0..10),
                    retweet: rng.random_range(0..20),
                    user_followers: rng.random_range(10..50_000),
                    user_following: rng.random_range(10..2_000),
                    user_tweets: rng.random_range(100..100_000),
                    user_listed: rng.random_range(0..100),
                });
            }
        }
    }
    SynthData { bars, tweets, signs }
}

/// Writes posts as one JSON object per line.
pub fn write_tweets_jsonl<W: Write>(tweets: &[RawTweet], mut w: W) -> std::io::Result<()> {
    for t in tweets {
        serde_json::to_writer(&mut w, t)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}
