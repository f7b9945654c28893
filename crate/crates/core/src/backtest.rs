//! Trading simulation and random-model baselines.
//!
//! A class-1 prediction buys the bar's open and sells its close; class 0
//! sells short at the open and buys back at the close. All money values are
//! exact decimals. Baselines are independent fair-coin strategies, one
//! seeded generator per model.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use chrono::{NaiveDate, NaiveDateTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rust_decimal::prelude::ToPrimitive;
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bars::BarSeries;
use crate::walkforward::PredictionLedger;

const TIME_FORMAT: &str = "%Y-%m-%d %H:%M:%S";

#[derive(Debug, Error)]
pub enum BacktestError {
    #[error("no bar for ledger window {0}")]
    MissingBar(NaiveDateTime),
    #[error("model and baseline cover different days")]
    DayMismatch,
    #[error("invalid backtest config: {0}")]
    Config(String),
    #[error("nothing to trade")]
    Empty,
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Long,
    Short,
}

impl Side {
    pub fn from_prediction(p: u8) -> Self {
        if p == 1 {
            Self::Long
        } else {
            Self::Short
        }
    }
}

/// Which ledger entries are traded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frequency {
    PerBar,
    FirstBarOfDay,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TradeRecord {
    pub window: NaiveDateTime,
    pub side: Side,
    pub open_price: Decimal,
    pub close_price: Decimal,
    pub lot: u32,
    pub pnl: Decimal,
}

pub fn trade_pnl(side: Side, open: Decimal, close: Decimal, lot: u32) -> Decimal {
    let q = Decimal::from(lot);
    match side {
        Side::Long => q * (close - open),
        Side::Short => q * (open - close),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BacktestConfig {
    pub lot: u32,
    pub frequency: Frequency,
    pub n_models: usize,
    pub base_seed: u64,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        Self {
            lot: 100,
            frequency: Frequency::PerBar,
            n_models: 100,
            base_seed: 4321,
        }
    }
}

impl BacktestConfig {
    pub fn validate(&self) -> Result<(), BacktestError> {
        if self.lot == 0 {
            return Err(BacktestError::Config("lot must be positive".into()));
        }
        if self.n_models == 0 {
            return Err(BacktestError::Config("n_models must be at least 1".into()));
        }
        Ok(())
    }
}

/// Indices of the entries that trade under `frequency`. `windows` must be
/// sorted.
pub fn tradable(windows: &[NaiveDateTime], frequency: Frequency) -> Vec<usize> {
    match frequency {
        Frequency::PerBar => (0..windows.len()).collect(),
        Frequency::FirstBarOfDay => (0..windows.len())
            .filter(|&i| i == 0 || windows[i - 1].date() != windows[i].date())
            .collect(),
    }
}

/// Trades `predictions[i]` on the bar at `windows[i]`.
pub fn simulate_predictions(
    windows: &[NaiveDateTime],
    predictions: &[u8],
    bars: &BarSeries,
    lot: u32,
    frequency: Frequency,
) -> Result<Vec<TradeRecord>, BacktestError> {
    tradable(windows, frequency)
        .into_iter()
        .map(|i| {
            let w = windows[i];
            let bar = bars.lookup(w).ok().flatten().ok_or(BacktestError::MissingBar(w))?;
            let side = Side::from_prediction(predictions[i]);
            Ok(TradeRecord {
                window: w,
                side,
                open_price: bar.open,
                close_price: bar.close,
                lot,
                pnl: trade_pnl(side, bar.open, bar.close, lot),
            })
        })
        .collect()
}

pub fn simulate(
    ledger: &PredictionLedger,
    bars: &BarSeries,
    lot: u32,
    frequency: Frequency,
) -> Result<Vec<TradeRecord>, BacktestError> {
    let windows: Vec<NaiveDateTime> = ledger.entries.iter().map(|e| e.window).collect();
    let preds: Vec<u8> = ledger.entries.iter().map(|e| e.prediction).collect();
    simulate_predictions(&windows, &preds, bars, lot, frequency)
}

pub fn daily_pnl(trades: &[TradeRecord]) -> BTreeMap<NaiveDate, Decimal> {
    let mut out = BTreeMap::new();
    for t in trades {
        *out.entry(t.window.date()).or_insert(Decimal::ZERO) += t.pnl;
    }
    out
}

/// Source of fair-coin predictions for one random model.
pub trait CoinSource {
    /// `true` means predict up (go long).
    fn flip(&mut self) -> bool;
}

pub struct SeededCoin(ChaCha8Rng);

impl SeededCoin {
    pub fn new(seed: u64) -> Self {
        Self(ChaCha8Rng::seed_from_u64(seed))
    }
}

impl CoinSource for SeededCoin {
    fn flip(&mut self) -> bool {
        self.0.random_bool(0.5)
    }
}

/// Per-window pnl of the bars a strategy may trade.
#[derive(Debug, Clone, PartialEq)]
pub struct TradableBars {
    pub windows: Vec<NaiveDateTime>,
    /// Long pnl per window; short pnl is its negation.
    pub long_pnl: Vec<Decimal>,
}

impl TradableBars {
    pub fn new(
        windows: &[NaiveDateTime],
        bars: &BarSeries,
        lot: u32,
        frequency: Frequency,
    ) -> Result<Self, BacktestError> {
        let idx = tradable(windows, frequency);
        let mut long_pnl = Vec::with_capacity(idx.len());
        let mut ws = Vec::with_capacity(idx.len());
        for i in idx {
            let w = windows[i];
            let bar = bars.lookup(w).ok().flatten().ok_or(BacktestError::MissingBar(w))?;
            ws.push(w);
            long_pnl.push(trade_pnl(Side::Long, bar.open, bar.close, lot));
        }
        Ok(Self { windows: ws, long_pnl })
    }
}

/// Aggregate of the random ensemble. Sums over models are kept exact; means
/// divide by `n_models`.
#[derive(Debug, Clone, PartialEq)]
pub struct Baseline {
    pub n_models: usize,
    pub model_totals: Vec<Decimal>,
    /// Sum over models of each tradable window's pnl.
    pub window_sums: Vec<Decimal>,
    pub windows: Vec<NaiveDateTime>,
    /// Sum over models of each day's pnl.
    pub daily_sums: BTreeMap<NaiveDate, Decimal>,
}

impl Baseline {
    pub fn mean_total(&self) -> Decimal {
        self.model_totals.iter().sum::<Decimal>() / Decimal::from(self.n_models)
    }

    pub fn mean_daily(&self) -> BTreeMap<NaiveDate, Decimal> {
        let n = Decimal::from(self.n_models);
        self.daily_sums.iter().map(|(d, s)| (*d, *s / n)).collect()
    }

    /// Cumulative mean pnl after each tradable window.
    pub fn mean_curve(&self) -> Vec<Decimal> {
        let n = Decimal::from(self.n_models);
        let mut acc = Decimal::ZERO;
        self.window_sums
            .iter()
            .map(|s| {
                acc += *s;
                acc / n
            })
            .collect()
    }
}

/// Runs `n_models` coin-flip strategies; model `i` uses `coin(base_seed + i)`.
pub fn random_baseline_with<C, F>(tb: &TradableBars, n_models: usize, base_seed: u64, coin: F) -> Baseline
where
    C: CoinSource,
    F: Fn(u64) -> C + Sync,
{
    let per_model: Vec<Vec<Decimal>> = (0..n_models)
        .into_par_iter()
        .map(|i| {
            let mut c = coin(base_seed.wrapping_add(i as u64));
            tb.long_pnl
                .iter()
                .map(|&p| if c.flip() { p } else { -p })
                .collect()
        })
        .collect();
    let mut window_sums = vec![Decimal::ZERO; tb.windows.len()];
    let mut model_totals = Vec::with_capacity(n_models);
    for m in &per_model {
        model_totals.push(m.iter().sum());
        for (acc, p) in window_sums.iter_mut().zip(m) {
            *acc += *p;
        }
    }
    let mut daily_sums = BTreeMap::new();
    for (w, s) in tb.windows.iter().zip(&window_sums) {
        *daily_sums.entry(w.date()).or_insert(Decimal::ZERO) += *s;
    }
    Baseline {
        n_models,
        model_totals,
        window_sums,
        windows: tb.windows.clone(),
        daily_sums,
    }
}

pub fn random_baseline(tb: &TradableBars, n_models: usize, base_seed: u64) -> Baseline {
    random_baseline_with(tb, n_models, base_seed, SeededCoin::new)
}

/// Model versus random-ensemble summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub model_total: Decimal,
    pub baseline_mean_total: Decimal,
    pub excess: Decimal,
    pub model_trades: usize,
    pub model_per_operation: Option<Decimal>,
    pub baseline_per_operation: Option<Decimal>,
    pub days: usize,
    pub days_won: usize,
    pub days_lost: usize,
    pub days_tied: usize,
    /// Random models whose total is strictly below the model's.
    pub models_beaten: usize,
    pub n_models: usize,
}

fn per_op(total: Decimal, n: usize) -> Option<Decimal> {
    (n > 0).then(|| (total / Decimal::from(n)).round_dp(8).normalize())
}

/// Compares model daily pnl with the baseline's mean daily pnl. Days are
/// compared exactly (model × n against the across-model sum).
pub fn compare(
    model_daily: &BTreeMap<NaiveDate, Decimal>,
    model_trades: usize,
    baseline: &Baseline,
) -> Result<Comparison, BacktestError> {
    if !model_daily.keys().eq(baseline.daily_sums.keys()) {
        return Err(BacktestError::DayMismatch);
    }
    let n = Decimal::from(baseline.n_models);
    let (mut won, mut lost, mut tied) = (0, 0, 0);
    for (d, m) in model_daily {
        match (*m * n).cmp(&baseline.daily_sums[d]) {
            std::cmp::Ordering::Greater => won += 1,
            std::cmp::Ordering::Less => lost += 1,
            std::cmp::Ordering::Equal => tied += 1,
        }
    }
    let model_total: Decimal = model_daily.values().sum();
    let baseline_mean_total = baseline.mean_total();
    Ok(Comparison {
        model_total,
        baseline_mean_total,
        excess: model_total - baseline_mean_total,
        model_trades,
        model_per_operation: per_op(model_total, model_trades),
        baseline_per_operation: per_op(baseline_mean_total, baseline.windows.len()),
        days: model_daily.len(),
        days_won: won,
        days_lost: lost,
        days_tied: tied,
        models_beaten: baseline.model_totals.iter().filter(|t| **t < model_total).count(),
        n_models: baseline.n_models,
    })
}

/// Full backtest output.
#[derive(Debug, Clone, PartialEq)]
pub struct BacktestReport {
    pub trades: Vec<TradeRecord>,
    /// Cumulative model pnl after each trade.
    pub equity_curve: Vec<Decimal>,
    pub daily_pnl: BTreeMap<NaiveDate, Decimal>,
    pub total_pnl: Decimal,
    pub baseline: Baseline,
    pub comparison: Comparison,
}

impl BacktestReport {
    pub fn baseline_mean_curve(&self) -> Vec<Decimal> {
        self.baseline.mean_curve()
    }
}

pub fn run_backtest(ledger: &PredictionLedger, bars: &BarSeries, cfg: &BacktestConfig) -> Result<BacktestReport, BacktestError> {
    cfg.validate()?;
    if ledger.is_empty() {
        return Err(BacktestError::Empty);
    }
    let trades = simulate(ledger, bars, cfg.lot, cfg.frequency)?;
    let windows: Vec<NaiveDateTime> = ledger.entries.iter().map(|e| e.window).collect();
    let tb = TradableBars::new(&windows, bars, cfg.lot, cfg.frequency)?;
    let baseline = random_baseline(&tb, cfg.n_models, cfg.base_seed);
    let daily = daily_pnl(&trades);
    let comparison = compare(&daily, trades.len(), &baseline)?;
    let mut acc = Decimal::ZERO;
    let equity_curve = trades
        .iter()
        .map(|t| {
            acc += t.pnl;
            acc
        })
        .collect();
    Ok(BacktestReport {
        total_pnl: acc,
        trades,
        equity_curve,
        daily_pnl: daily,
        baseline,
        comparison,
    })
}

pub fn write_trades_csv<W: Write>(trades: &[TradeRecord], writer: W) -> Result<(), BacktestError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["window", "side", "open", "close", "lot", "pnl"])?;
    for t in trades {
        w.write_record([
            t.window.format(TIME_FORMAT).to_string(),
            match t.side {
                Side::Long => "long".to_string(),
                Side::Short => "short".to_string(),
            },
            t.open_price.to_string(),
            t.close_price.to_string(),
            t.lot.to_string(),
            t.pnl.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Equity CSV: window, cumulative model pnl, cumulative baseline mean pnl.
pub fn write_equity_csv<W: Write>(report: &BacktestReport, writer: W) -> Result<(), BacktestError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["window", "model", "baseline_mean"])?;
    for ((t, m), b) in report.trades.iter().zip(&report.equity_curve).zip(report.baseline_mean_curve()) {
        w.write_record([
            t.window.format(TIME_FORMAT).to_string(),
            m.to_string(),
            b.round_dp(8).normalize().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Line plot of the model and baseline equity curves.
pub fn equity_svg(report: &BacktestReport, title: &str, config_hash: &str) -> String {
    const W: f64 = 900.0;
    const H: f64 = 420.0;
    const PAD: f64 = 60.0;
    let model: Vec<f64> = report.equity_curve.iter().map(|d| d.to_f64().unwrap_or(0.0)).collect();
    let base: Vec<f64> = report
        .baseline_mean_curve()
        .iter()
        .map(|d| d.to_f64().unwrap_or(0.0))
        .collect();
    let lo = model.iter().chain(&base).copied().fold(0.0f64, f64::min);
    let hi = model.iter().chain(&base).copied().fold(0.0f64, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let n = model.len().max(2) - 1;
    let x = |i: usize| PAD + (W - 2.0 * PAD) * i as f64 / n as f64;
    let y = |v: f64| H - PAD - (H - 2.0 * PAD) * (v - lo) / span;
    let points = |vals: &[f64]| {
        let mut s = String::new();
        for (i, v) in vals.iter().enumerate() {
            let _ = write!(s, "{}{:.2},{:.2}", if i == 0 { "" } else { " " }, x(i), y(*v));
        }
        s
    };
    let escape = |s: &str| s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;");
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(svg, "<desc>config {}</desc>", escape(config_hash));
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="30" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>"#,
        W / 2.0,
        escape(title)
    );
    let _ = writeln!(
        svg,
        r##"<line x1="{PAD}" y1="{:.2}" x2="{}" y2="{:.2}" stroke="#999" stroke-dasharray="4 3"/>"##,
        y(0.0),
        W - PAD,
        y(0.0)
    );
    let _ = writeln!(
        svg,
        r##"<rect x="{PAD}" y="{PAD}" width="{}" height="{}" fill="none" stroke="#333"/>"##,
        W - 2.0 * PAD,
        H - 2.0 * PAD
    );
    for (v, anchor_y) in [(hi, PAD), (lo, H - PAD)] {
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="end">{:.2}</text>"#,
            PAD - 6.0,
            anchor_y + 4.0,
            v
        );
    }
    if let (Some(first), Some(last)) = (report.trades.first(), report.trades.last()) {
        for (label, xpos, anchor) in [
            (first.window.format("%Y-%m-%d").to_string(), PAD, "start"),
            (last.window.format("%Y-%m-%d").to_string(), W - PAD, "end"),
        ] {
            let _ = writeln!(
                svg,
                r#"<text x="{xpos}" y="{}" font-family="sans-serif" font-size="11" text-anchor="{anchor}">{label}</text>"#,
                H - PAD + 18.0
            );
        }
    }
    let _ = writeln!(
        svg,
        r##"<polyline fill="none" stroke="#888" stroke-width="1.5" points="{}"/>"##,
        points(&base)
    );
    let _ = writeln!(
        svg,
        r##"<polyline fill="none" stroke="#1f5fbf" stroke-width="1.5" points="{}"/>"##,
        points(&model)
    );
    let _ = writeln!(
        svg,
        r##"<text x="{}" y="{}" font-family="sans-serif" font-size="12" fill="#1f5fbf">model</text>"##,
        PAD + 10.0,
        PAD + 18.0
    );
    let _ = writeln!(
        svg,
        r##"<text x="{}" y="{}" font-family="sans-serif" font-size="12" fill="#888">random mean</text>"##,
        PAD + 10.0,
        PAD + 34.0
    );
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bars::Bar;
    use chrono::NaiveTime;

    fn dec(s: &str) -> Decimal {
        s.parse().unwrap()
    }

    fn at(h: u32, m: u32, day: u32) -> NaiveDateTime {
        NaiveDate::from_ymd_opt(2021, 10, day).unwrap().and_hms_opt(h, m, 0).unwrap()
    }

    fn series(spec: &[(NaiveDateTime, Decimal, Decimal)]) -> BarSeries {
        let bars = spec
            .iter()
            .map(|&(t, o, c)| Bar {
                timestamp: t,
                open: o,
                high: o.max(c),
                low: o.min(c),
                close: c,
                tickvol: 1,
                vol: 1,
                spread: 0,
            })
            .collect();
        let t = |s| NaiveTime::parse_from_str(s, "%H:%M").unwrap();
        BarSeries::from_bars(bars, t("10:30"), t("16:50")).unwrap().0
    }

    #[test]
    fn trade_examples() {
        assert_eq!(trade_pnl(Side::Long, dec("30.00"), dec("30.15"), 100), dec("15.00"));
        assert_eq!(trade_pnl(Side::Short, dec("30.00"), dec("30.15"), 100), dec("-15.00"));
        assert_eq!(trade_pnl(Side::Long, dec("30.00"), dec("30.00"), 100), Decimal::ZERO);
    }

    #[test]
    fn first_bar_of_day_frequency() {
        let w = [at(10, 35, 27), at(10, 40, 27), at(10, 35, 28)];
        assert_eq!(tradable(&w, Frequency::FirstBarOfDay), vec![0, 2]);
        assert_eq!(tradable(&w, Frequency::PerBar), vec![0, 1, 2]);
    }

    struct Heads;
    impl CoinSource for Heads {
        fn flip(&mut self) -> bool {
            true
        }
    }

    #[test]
    fn all_heads_baseline_is_always_long() {
        let s = series(&[
            (at(10, 30, 27), dec("30.00"), dec("30.15")),
            (at(10, 35, 27), dec("30.15"), dec("30.05")),
        ]);
        let w = [at(10, 30, 27), at(10, 35, 27)];
        let tb = TradableBars::new(&w, &s, 100, Frequency::PerBar).unwrap();
        let b = random_baseline_with(&tb, 1, 0, |_| Heads);
        let long = simulate_predictions(&w, &[1, 1], &s, 100, Frequency::PerBar).unwrap();
        assert_eq!(b.model_totals[0], long.iter().map(|t| t.pnl).sum::<Decimal>());
        assert_eq!(b.model_totals[0], dec("5.00"));
    }

    #[test]
    fn seeded_baseline_is_reproducible() {
        let s = series(&[
            (at(10, 30, 27), dec("30.00"), dec("30.15")),
            (at(10, 35, 27), dec("30.15"), dec("30.05")),
            (at(10, 40, 27), dec("30.05"), dec("30.10")),
        ]);
        let w = [at(10, 30, 27), at(10, 35, 27), at(10, 40, 27)];
        let tb = TradableBars::new(&w, &s, 100, Frequency::PerBar).unwrap();
        assert_eq!(random_baseline(&tb, 20, 7), random_baseline(&tb, 20, 7));
    }

    #[test]
    fn comparison_examples() {
        let day = NaiveDate::from_ymd_opt(2021, 10, 28).unwrap();
        let model: BTreeMap<_, _> = [(day, dec("77.00"))].into();
        let baseline = Baseline {
            n_models: 1,
            model_totals: vec![dec("-11.82")],
            window_sums: vec![dec("-11.82")],
            windows: vec![day.and_hms_opt(10, 35, 0).unwrap()],
            daily_sums: [(day, dec("-11.82"))].into(),
        };
        let c = compare(&model, 1, &baseline).unwrap();
        assert_eq!(c.excess, dec("88.82"));
        assert_eq!((c.days_won, c.days_lost, c.days_tied), (1, 0, 0));

        let same = Baseline {
            model_totals: vec![dec("77.00")],
            window_sums: vec![dec("77.00")],
            daily_sums: [(day, dec("77.00"))].into(),
            ..baseline.clone()
        };
        let c = compare(&model, 1, &same).unwrap();
        assert_eq!((c.excess, c.days_tied), (Decimal::ZERO, 1));

        let other: BTreeMap<_, _> = [(day.succ_opt().unwrap(), dec("1"))].into();
        assert!(matches!(compare(&other, 1, &baseline), Err(BacktestError::DayMismatch)));
    }

    #[test]
    fn single_trade_equity() {
        let s = series(&[(at(10, 35, 28), dec("30.00"), dec("30.15"))]);
        let ledger = PredictionLedger {
            entries: vec![crate::walkforward::LedgerEntry {
                window: at(10, 35, 28),
                probability: 0.7,
                prediction: 1,
                label: 1,
            }],
            threshold: 0.5,
        };
        let r = run_backtest(&ledger, &s, &BacktestConfig { n_models: 3, ..Default::default() }).unwrap();
        assert_eq!(r.equity_curve, vec![dec("15.00")]);
        assert_eq!(r.total_pnl, dec("15.00"));
        let svg = equity_svg(&r, "equity", "abc");
        assert!(svg.starts_with("<svg") && svg.contains("<desc>config abc</desc>"));
        assert_eq!(svg, equity_svg(&r, "equity", "abc"));
    }
}
