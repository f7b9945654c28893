//! Five-minute OHLCV bars: parsing, validation and session-aware indexing.
//!
//! Timestamps are stored as naive local exchange time (the analysis timezone,
//! GMT-3 by default). Prices are exact decimals so that P&L arithmetic never
//! goes through binary floating point.

use std::io::{Read, Write};
use std::str::FromStr;

use chrono::{Duration, NaiveDate, NaiveDateTime, NaiveTime, Timelike};
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Width of one bar / feature window, in seconds.
pub const WINDOW_SECS: i64 = 300;

#[derive(Debug, Error)]
pub enum BarError {
    #[error("bar file header is missing column `{0}`")]
    MissingColumn(&'static str),
    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },
    #[error("line {line}: OHLC invariant violated ({detail})")]
    OhlcViolation { line: u64, detail: String },
    #[error("line {line}: timestamp {timestamp} is not aligned to a 5-minute boundary")]
    UnalignedRow { line: u64, timestamp: NaiveDateTime },
    #[error("line {line}: duplicate bar timestamp {timestamp}")]
    Duplicate { line: u64, timestamp: NaiveDateTime },
    #[error("window {0} is not aligned to a 5-minute boundary")]
    UnalignedWindow(NaiveDateTime),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// One OHLCV candle. `timestamp` is the bar open time in local exchange time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bar {
    pub timestamp: NaiveDateTime,
    pub open: Decimal,
    pub high: Decimal,
    pub low: Decimal,
    pub close: Decimal,
    pub tickvol: u64,
    pub vol: u64,
    /// Carried through from the source file; no computation reads it.
    pub spread: i64,
}

impl Bar {
    pub fn date(&self) -> NaiveDate {
        self.timestamp.date()
    }

    /// Checks the price invariants, returning a description of the first
    /// violation.
    pub fn check(&self) -> Result<(), String> {
        for (name, p) in [
            ("open", self.open),
            ("high", self.high),
            ("low", self.low),
            ("close", self.close),
        ] {
            if p <= Decimal::ZERO {
                return Err(format!("{name} = {p} is not strictly positive"));
            }
        }
        if self.low > self.high {
            return Err(format!("low {} > high {}", self.low, self.high));
        }
        let body_lo = self.open.min(self.close);
        let body_hi = self.open.max(self.close);
        if self.low > body_lo {
            return Err(format!("low {} > min(open, close) {}", self.low, body_lo));
        }
        if body_hi > self.high {
            return Err(format!("max(open, close) {} > high {}", body_hi, self.high));
        }
        if !is_aligned(self.timestamp) {
            return Err(format!("timestamp {} not 5-minute aligned", self.timestamp));
        }
        Ok(())
    }
}

/// Column layout and timezone of a bar file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BarFormatConfig {
    pub delimiter: char,
    pub date_format: String,
    pub time_format: String,
    /// UTC offset of the timestamps written in the file.
    pub file_utc_offset_hours: i32,
    /// UTC offset of the analysis timezone bars are converted into.
    pub local_utc_offset_hours: i32,
    pub session_start: NaiveTime,
    /// Exclusive.
    pub session_end: NaiveTime,
}

impl Default for BarFormatConfig {
    fn default() -> Self {
        Self {
            delimiter: '\t',
            date_format: "%Y.%m.%d".to_string(),
            time_format: "%H:%M:%S".to_string(),
            file_utc_offset_hours: -3,
            local_utc_offset_hours: -3,
            session_start: NaiveTime::from_hms_opt(10, 30, 0).unwrap(),
            session_end: NaiveTime::from_hms_opt(16, 50, 0).unwrap(),
        }
    }
}

impl BarFormatConfig {
    fn shift(&self) -> Duration {
        Duration::hours(i64::from(self.local_utc_offset_hours - self.file_utc_offset_hours))
    }

    fn delimiter_byte(&self) -> Result<u8, BarError> {
        u8::try_from(self.delimiter).map_err(|_| BarError::Malformed {
            line: 0,
            message: format!("delimiter {:?} is not a single-byte character", self.delimiter),
        })
    }

    pub fn in_session(&self, t: NaiveDateTime) -> bool {
        let tod = t.time();
        tod >= self.session_start && tod < self.session_end
    }
}

/// Ordered, session-filtered bars. Immutable once built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BarSeries {
    bars: Vec<Bar>,
    session_start: NaiveTime,
    session_end: NaiveTime,
}

impl BarSeries {
    /// Builds a series from bars that are already validated. Bars outside the
    /// session are dropped; the count of dropped bars is returned alongside.
    pub fn from_bars(
        mut bars: Vec<Bar>,
        session_start: NaiveTime,
        session_end: NaiveTime,
    ) -> Result<(Self, usize), BarError> {
        let before = bars.len();
        bars.retain(|b| {
            let tod = b.timestamp.time();
            tod >= session_start && tod < session_end
        });
        let dropped = before - bars.len();
        bars.sort_by_key(|b| b.timestamp);
        if let Some(w) = bars.windows(2).find(|w| w[0].timestamp == w[1].timestamp) {
            return Err(BarError::Duplicate {
                line: 0,
                timestamp: w[1].timestamp,
            });
        }
        Ok((
            Self {
                bars,
                session_start,
                session_end,
            },
            dropped,
        ))
    }

    pub fn bars(&self) -> &[Bar] {
        &self.bars
    }

    pub fn len(&self) -> usize {
        self.bars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bars.is_empty()
    }

    pub fn session(&self) -> (NaiveTime, NaiveTime) {
        (self.session_start, self.session_end)
    }

    /// Distinct dates that have at least one bar, ascending.
    pub fn trading_days(&self) -> Vec<NaiveDate> {
        let mut days: Vec<NaiveDate> = self.bars.iter().map(Bar::date).collect();
        days.dedup();
        days
    }

    /// Bar whose timestamp equals `window`, if present.
    pub fn lookup(&self, window: NaiveDateTime) -> Result<Option<&Bar>, BarError> {
        lookup_bar(self, window)
    }

    /// Keeps only bars with timestamp `<= last`.
    pub fn truncated(&self, last: NaiveDateTime) -> Self {
        Self {
            bars: self
                .bars
                .iter()
                .filter(|b| b.timestamp <= last)
                .cloned()
                .collect(),
            session_start: self.session_start,
            session_end: self.session_end,
        }
    }
}

fn is_aligned(t: NaiveDateTime) -> bool {
    t.second() == 0 && t.nanosecond() == 0 && i64::from(t.minute()) % (WINDOW_SECS / 60) == 0
}

/// Floors `t` to the start of its `width_secs` window, counted from the top
/// of the hour. `width_secs` must divide 3600.
pub fn floor_to_window(t: NaiveDateTime, width_secs: i64) -> NaiveDateTime {
    debug_assert!(width_secs > 0 && 3600 % width_secs == 0);
    let secs = i64::from(t.time().num_seconds_from_midnight());
    let floored = secs - secs.rem_euclid(width_secs);
    let tod = NaiveTime::from_num_seconds_from_midnight_opt(floored as u32, 0)
        .expect("floored time of day is within a day");
    t.date().and_time(tod)
}

/// Binary search for the bar at `window`.
pub fn lookup_bar(series: &BarSeries, window: NaiveDateTime) -> Result<Option<&Bar>, BarError> {
    if !is_aligned(window) {
        return Err(BarError::UnalignedWindow(window));
    }
    Ok(series
        .bars
        .binary_search_by_key(&window, |b| b.timestamp)
        .ok()
        .map(|i| &series.bars[i]))
}

fn normalize_header(h: &str) -> String {
    h.trim()
        .trim_start_matches('<')
        .trim_end_matches('>')
        .to_ascii_lowercase()
}

const COLUMNS: [&str; 9] = [
    "date", "time", "open", "high", "low", "close", "tickvol", "vol", "spread",
];

/// Parses a delimiter-separated bar file with a header row.
pub fn parse_bars<R: Read>(reader: R, format: &BarFormatConfig) -> Result<BarSeries, BarError> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(format.delimiter_byte()?)
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(normalize_header).collect();
    let mut idx = [0usize; 9];
    for (slot, name) in idx.iter_mut().zip(COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or(BarError::MissingColumn(name))?;
    }

    let shift = format.shift();
    let mut bars = Vec::new();
    let mut lines = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |k: usize| record.get(idx[k]).unwrap_or("").trim();
        let malformed = |what: &str, v: &str| BarError::Malformed {
            line,
            message: format!("cannot parse {what} from {v:?}"),
        };

        let date = NaiveDate::parse_from_str(field(0), &format.date_format)
            .map_err(|_| malformed("date", field(0)))?;
        let time = NaiveTime::parse_from_str(field(1), &format.time_format)
            .map_err(|_| malformed("time", field(1)))?;
        let timestamp = date.and_time(time) + shift;
        if !is_aligned(timestamp) {
            return Err(BarError::UnalignedRow { line, timestamp });
        }
        let price = |k: usize, what: &str| {
            Decimal::from_str(field(k)).map_err(|_| malformed(what, field(k)))
        };
        let count = |k: usize, what: &str| field(k).parse::<u64>().map_err(|_| malformed(what, field(k)));
        let bar = Bar {
            timestamp,
            open: price(2, "open")?,
            high: price(3, "high")?,
            low: price(4, "low")?,
            close: price(5, "close")?,
            tickvol: count(6, "tickvol")?,
            vol: count(7, "vol")?,
            spread: field(8).parse().map_err(|_| malformed("spread", field(8)))?,
        };
        bar.check()
            .map_err(|detail| BarError::OhlcViolation { line, detail })?;
        bars.push(bar);
        lines.push(line);
    }

    let mut order: Vec<usize> = (0..bars.len()).collect();
    order.sort_by_key(|&i| bars[i].timestamp);
    for w in order.windows(2) {
        if bars[w[0]].timestamp == bars[w[1]].timestamp {
            return Err(BarError::Duplicate {
                line: lines[w[1]],
                timestamp: bars[w[1]].timestamp,
            });
        }
    }

    let (series, dropped) = BarSeries::from_bars(bars, format.session_start, format.session_end)?;
    if dropped > 0 {
        log::info!("dropped {dropped} bars outside the trading session");
    }
    Ok(series)
}

/// Writes `series` in the same layout `parse_bars` reads.
pub fn write_bars<W: Write>(
    series: &BarSeries,
    writer: W,
    format: &BarFormatConfig,
) -> Result<(), BarError> {
    let mut wtr = csv::WriterBuilder::new()
        .delimiter(format.delimiter_byte()?)
        .from_writer(writer);
    wtr.write_record(COLUMNS.iter().map(|c| format!("<{}>", c.to_ascii_uppercase())))?;
    let shift = format.shift();
    for b in series.bars() {
        let t = b.timestamp - shift;
        wtr.write_record([
            t.format(&format.date_format).to_string(),
            t.format(&format.time_format).to_string(),
            b.open.to_string(),
            b.high.to_string(),
            b.low.to_string(),
            b.close.to_string(),
            b.tickvol.to_string(),
            b.vol.to_string(),
            b.spread.to_string(),
        ])?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const HEADER: &str = "<DATE>\t<TIME>\t<OPEN>\t<HIGH>\t<LOW>\t<CLOSE>\t<TICKVOL>\t<VOL>\t<SPREAD>\n";

    fn dt(s: &str) -> NaiveDateTime {
        NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S").unwrap()
    }

    fn comma() -> BarFormatConfig {
        BarFormatConfig {
            delimiter: ',',
            ..Default::default()
        }
    }

    #[test]
    fn parses_single_row() {
        let text = "date,time,open,high,low,close,tickvol,vol,spread\n\
                    2021.10.27,10:30:00,28.10,28.25,28.05,28.20,450,120000,0\n";
        let s = parse_bars(text.as_bytes(), &comma()).unwrap();
        assert_eq!(s.len(), 1);
        let b = &s.bars()[0];
        assert_eq!(b.timestamp, dt("2021-10-27 10:30:00"));
        assert_eq!(b.open, Decimal::new(2810, 2));
        assert_eq!(b.high, Decimal::new(2825, 2));
        assert_eq!(b.low, Decimal::new(2805, 2));
        assert_eq!(b.close, Decimal::new(2820, 2));
        assert_eq!((b.tickvol, b.vol, b.spread), (450, 120000, 0));
        // fractional digits survive
        assert_eq!(b.open.to_string(), "28.10");
    }

    #[test]
    fn empty_stream_gives_empty_series() {
        let s = parse_bars(HEADER.as_bytes(), &BarFormatConfig::default()).unwrap();
        assert!(s.is_empty());
    }

    #[test]
    fn low_above_high_is_rejected() {
        let text = format!("{HEADER}2021.10.27\t10:30:00\t28.10\t28.00\t28.30\t28.20\t1\t1\t0\n");
        let err = parse_bars(text.as_bytes(), &BarFormatConfig::default()).unwrap_err();
        match err {
            BarError::OhlcViolation { line, detail } => {
                assert_eq!(line, 2);
                assert!(detail.contains("low"), "{detail}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_row_reports_line() {
        let text = format!(
            "{HEADER}2021.10.27\t10:30:00\t28.10\t28.25\t28.05\t28.20\t1\t1\t0\n\
             2021.10.27\t10:35:00\tabc\t28.25\t28.05\t28.20\t1\t1\t0\n"
        );
        let err = parse_bars(text.as_bytes(), &BarFormatConfig::default()).unwrap_err();
        assert!(matches!(err, BarError::Malformed { line: 3, .. }), "{err:?}");
    }

    #[test]
    fn duplicates_rejected_and_rows_sorted() {
        let row = |t: &str| format!("2021.10.27\t{t}\t28.10\t28.25\t28.05\t28.20\t1\t1\t0\n");
        let text = format!("{HEADER}{}{}", row("10:40:00"), row("10:30:00"));
        let s = parse_bars(text.as_bytes(), &BarFormatConfig::default()).unwrap();
        assert!(s.bars()[0].timestamp < s.bars()[1].timestamp);

        let text = format!("{HEADER}{}{}{}", row("10:40:00"), row("10:30:00"), row("10:40:00"));
        let err = parse_bars(text.as_bytes(), &BarFormatConfig::default()).unwrap_err();
        assert!(matches!(err, BarError::Duplicate { .. }));
    }

    #[test]
    fn out_of_session_bars_dropped() {
        let row = |t: &str| format!("2021.10.27\t{t}\t28.10\t28.25\t28.05\t28.20\t1\t1\t0\n");
        let text = format!(
            "{HEADER}{}{}{}{}",
            row("10:00:00"),
            row("10:30:00"),
            row("16:45:00"),
            row("16:50:00")
        );
        let s = parse_bars(text.as_bytes(), &BarFormatConfig::default()).unwrap();
        assert_eq!(s.len(), 2);
    }

    #[test]
    fn file_timezone_is_converted() {
        let cfg = BarFormatConfig {
            file_utc_offset_hours: 0,
            ..Default::default()
        };
        let text = format!("{HEADER}2021.10.27\t13:30:00\t28.10\t28.25\t28.05\t28.20\t1\t1\t0\n");
        let s = parse_bars(text.as_bytes(), &cfg).unwrap();
        assert_eq!(s.bars()[0].timestamp, dt("2021-10-27 10:30:00"));
    }

    #[test]
    fn floor_examples() {
        assert_eq!(floor_to_window(dt("2021-10-27 13:37:21"), 300), dt("2021-10-27 13:35:00"));
        assert_eq!(floor_to_window(dt("2021-10-27 13:35:00"), 300), dt("2021-10-27 13:35:00"));
        assert_eq!(floor_to_window(dt("2021-10-27 13:39:59"), 300), dt("2021-10-27 13:35:00"));
    }

    #[test]
    fn lookup_examples() {
        let row = |t: &str| format!("2021.10.27\t{t}\t28.10\t28.25\t28.05\t28.20\t1\t1\t0\n");
        let text = format!("{HEADER}{}{}", row("10:30:00"), row("10:35:00"));
        let s = parse_bars(text.as_bytes(), &BarFormatConfig::default()).unwrap();
        let hit = lookup_bar(&s, dt("2021-10-27 10:35:00")).unwrap().unwrap();
        assert_eq!(hit.timestamp, dt("2021-10-27 10:35:00"));
        assert!(lookup_bar(&s, dt("2021-10-27 18:00:00")).unwrap().is_none());
        assert!(matches!(
            lookup_bar(&s, dt("2021-10-27 13:37:00")),
            Err(BarError::UnalignedWindow(_))
        ));
    }

    fn arb_bar() -> impl Strategy<Value = Bar> {
        (0u32..76, 100i64..10_000, 0i64..50, 0i64..50, any::<bool>(), 0u64..5000, 0u64..1_000_000)
            .prop_map(|(slot, open, up, down, bull, tickvol, vol)| {
                let timestamp = dt("2021-10-27 10:30:00") + Duration::minutes(5 * i64::from(slot));
                let open_d = Decimal::new(open, 2);
                let close_d = if bull {
                    Decimal::new(open + up, 2)
                } else {
                    Decimal::new((open - down).max(1), 2)
                };
                Bar {
                    timestamp,
                    open: open_d,
                    high: open_d.max(close_d) + Decimal::new(up, 2),
                    low: (open_d.min(close_d) - Decimal::new(down, 2)).max(Decimal::new(1, 2)),
                    close: close_d,
                    tickvol,
                    vol,
                    spread: 0,
                }
            })
    }

    proptest! {
        #[test]
        fn floor_is_idempotent_and_bounded(secs in 0i64..86_400 * 3) {
            let t = dt("2021-01-01 00:00:00") + Duration::seconds(secs);
            let f = floor_to_window(t, WINDOW_SECS);
            prop_assert_eq!(floor_to_window(f, WINDOW_SECS), f);
            let diff = (t - f).num_seconds();
            prop_assert!((0..WINDOW_SECS).contains(&diff));
        }

        #[test]
        fn write_then_parse_round_trips(bars in proptest::collection::vec(arb_bar(), 0..20)) {
            let mut bars = bars;
            bars.sort_by_key(|b| b.timestamp);
            bars.dedup_by_key(|b| b.timestamp);
            let cfg = BarFormatConfig::default();
            let (series, _) = BarSeries::from_bars(bars, cfg.session_start, cfg.session_end).unwrap();
            let mut buf = Vec::new();
            write_bars(&series, &mut buf, &cfg).unwrap();
            let back = parse_bars(buf.as_slice(), &cfg).unwrap();
            prop_assert_eq!(back, series);
        }
    }
}
