//! Rolling train / validation / test protocol.
//!
//! Each fold trains on a block of days with the following day as the
//! evaluation set to pick the boosting round count, retrains on train plus
//! validation with that many rounds, and predicts the test day.

use std::collections::HashSet;
use std::io::{Read, Write};

use chrono::{NaiveDate, NaiveDateTime};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::FeatureMatrix;
use crate::gbdt::{self, EvalMetric, GbdtError, Model, RoundRecord, Samples, TrainParams};
use crate::metrics::{self, Confusion, MacroScores};

const TIME_FORMAT: &str = "%Y-%m-%d %H:%M:%S";

#[derive(Debug, Error)]
pub enum WalkError {
    #[error("need at least {need} trading days, have {have}")]
    InsufficientDays { have: usize, need: usize },
    #[error("invalid walk-forward config: {0}")]
    Config(String),
    #[error("no fold produced predictions ({skipped} skipped)")]
    NoFolds { skipped: usize },
    #[error("prediction ledger is empty")]
    EmptyLedger,
    #[error("fold {fold}: {source}")]
    Train {
        fold: usize,
        #[source]
        source: GbdtError,
    },
    #[error("ledger line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WalkForwardConfig {
    pub train_days: usize,
    pub val_days: usize,
    pub test_days: usize,
    /// Validation metric that picks the round count.
    pub selection: EvalMetric,
    pub threshold: f64,
}

impl Default for WalkForwardConfig {
    fn default() -> Self {
        Self {
            train_days: 200,
            val_days: 1,
            test_days: 1,
            selection: EvalMetric::Logloss,
            threshold: 0.5,
        }
    }
}

impl WalkForwardConfig {
    pub fn validate(&self) -> Result<(), WalkError> {
        if self.train_days == 0 || self.val_days == 0 || self.test_days == 0 {
            return Err(WalkError::Config("train, validation and test day counts must be positive".into()));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(WalkError::Config("threshold must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSpec {
    pub train_days: Vec<NaiveDate>,
    pub val_days: Vec<NaiveDate>,
    pub test_days: Vec<NaiveDate>,
}

/// Consecutive folds over `dates`, advancing by the test block size.
pub fn make_folds(dates: &[NaiveDate], train_n: usize, val_n: usize, test_n: usize) -> Result<Vec<FoldSpec>, WalkError> {
    if train_n == 0 || val_n == 0 || test_n == 0 {
        return Err(WalkError::Config("train, validation and test day counts must be positive".into()));
    }
    let span = train_n + val_n + test_n;
    if dates.len() < span {
        return Err(WalkError::InsufficientDays {
            have: dates.len(),
            need: span,
        });
    }
    Ok((0..=dates.len() - span)
        .step_by(test_n)
        .map(|s| FoldSpec {
            train_days: dates[s..s + train_n].to_vec(),
            val_days: dates[s + train_n..s + train_n + val_n].to_vec(),
            test_days: dates[s + train_n + val_n..s + span].to_vec(),
        })
        .collect())
}

/// Matrix row indices of each part of a fold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldRows {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn fold_rows(matrix: &FeatureMatrix, fold: &FoldSpec) -> FoldRows {
    FoldRows {
        train: matrix.rows_on(&fold.train_days),
        val: matrix.rows_on(&fold.val_days),
        test: matrix.rows_on(&fold.test_days),
    }
}

/// One test-row prediction. `window` is the bar being predicted (and
/// traded); the features come from the window before it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub window: NaiveDateTime,
    pub probability: f64,
    pub prediction: u8,
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PredictionLedger {
    pub entries: Vec<LedgerEntry>,
    pub threshold: f64,
}

impl PredictionLedger {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn days(&self) -> Vec<NaiveDate> {
        let mut d: Vec<NaiveDate> = self.entries.iter().map(|e| e.window.date()).collect();
        d.dedup();
        d
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), WalkError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["window", "probability", "prediction", "label"])?;
        for e in &self.entries {
            w.write_record([
                e.window.format(TIME_FORMAT).to_string(),
                e.probability.to_string(),
                e.prediction.to_string(),
                e.label.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R, threshold: f64) -> Result<Self, WalkError> {
        let mut r = csv::Reader::from_reader(reader);
        let mut entries = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            let err = |message: String| WalkError::Parse { line, message };
            if rec.len() != 4 {
                return Err(err(format!("expected 4 fields, found {}", rec.len())));
            }
            let window = NaiveDateTime::parse_from_str(&rec[0], TIME_FORMAT).map_err(|e| err(e.to_string()))?;
            let probability: f64 = rec[1].parse().map_err(|_| err(format!("bad probability {:?}", &rec[1])))?;
            let bit = |s: &str| match s {
                "0" => Ok(0u8),
                "1" => Ok(1u8),
                other => Err(err(format!("{other:?} is not 0 or 1"))),
            };
            entries.push(LedgerEntry {
                window,
                probability,
                prediction: bit(&rec[2])?,
                label: bit(&rec[3])?,
            });
        }
        if entries.windows(2).any(|w| w[0].window >= w[1].window) {
            return Err(WalkError::Parse {
                line: 0,
                message: "ledger windows are not strictly increasing".into(),
            });
        }
        Ok(Self { entries, threshold })
    }
}

/// Result of one fold.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldOutcome {
    pub index: usize,
    pub spec: FoldSpec,
    pub best_round: usize,
    /// Stage-one history (train loss and validation metrics per round).
    pub history: Vec<RoundRecord>,
    /// Stage-two model, retrained on train plus validation days.
    pub model: Model,
    pub entries: Vec<LedgerEntry>,
    pub rows: FoldRows,
}

/// Why a fold produced nothing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedFold {
    pub index: usize,
    pub test_days: Vec<NaiveDate>,
    pub reason: String,
}

fn samples<'a>(matrix: &'a FeatureMatrix, idx: &[usize]) -> Samples<'a> {
    Samples {
        rows: idx.iter().map(|&i| matrix.rows[i].as_slice()).collect(),
        labels: idx.iter().map(|&i| matrix.labels[i]).collect(),
    }
}

/// Trains and predicts one fold. `Ok(Err(skip))` when the fold has no
/// usable train, validation or test rows.
pub fn run_fold(
    matrix: &FeatureMatrix,
    index: usize,
    fold: &FoldSpec,
    params: &TrainParams,
    cfg: &WalkForwardConfig,
) -> Result<Result<FoldOutcome, SkippedFold>, WalkError> {
    let rows = fold_rows(matrix, fold);
    let skip = |reason: &str| {
        log::info!("fold {index} ({:?}) skipped: {reason}", fold.test_days);
        Ok(Err(SkippedFold {
            index,
            test_days: fold.test_days.clone(),
            reason: reason.to_string(),
        }))
    };
    if rows.test.is_empty() {
        return skip("no test rows");
    }
    if rows.val.is_empty() {
        return skip("no validation rows");
    }
    if rows.train.is_empty() {
        return skip("no training rows");
    }
    let wrap = |source| WalkError::Train { fold: index, source };

    let stage1 = TrainParams {
        eval_metric: cfg.selection,
        ..params.clone()
    };
    let first = gbdt::train(
        &matrix.columns,
        &samples(matrix, &rows.train),
        &stage1,
        Some(&samples(matrix, &rows.val)),
    )
    .map_err(wrap)?;
    let best_round = first.model.best_round;

    let mut both = rows.train.clone();
    both.extend_from_slice(&rows.val);
    let stage2 = TrainParams {
        n_estimators: best_round.max(1),
        ..stage1
    };
    let model = gbdt::train(&matrix.columns, &samples(matrix, &both), &stage2, None)
        .map_err(wrap)?
        .model;

    let test = samples(matrix, &rows.test);
    let probs = model.predict_proba(&test.rows).map_err(wrap)?;
    let entries = rows
        .test
        .iter()
        .zip(probs)
        .map(|(&i, p)| LedgerEntry {
            window: matrix.target_window(i),
            probability: p,
            prediction: u8::from(p >= cfg.threshold),
            label: matrix.labels[i],
        })
        .collect();
    Ok(Ok(FoldOutcome {
        index,
        spec: fold.clone(),
        best_round,
        history: first.history,
        model,
        entries,
        rows,
    }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct WalkForwardResult {
    pub ledger: PredictionLedger,
    pub folds: Vec<FoldOutcome>,
    pub skipped: Vec<SkippedFold>,
}

/// Runs every fold (in parallel) and concatenates the test predictions in
/// time order.
pub fn run_all(
    matrix: &FeatureMatrix,
    params: &TrainParams,
    folds: &[FoldSpec],
    cfg: &WalkForwardConfig,
) -> Result<WalkForwardResult, WalkError> {
    cfg.validate()?;
    if folds.is_empty() {
        return Err(WalkError::NoFolds { skipped: 0 });
    }
    let outcomes: Vec<_> = folds
        .par_iter()
        .enumerate()
        .map(|(i, f)| run_fold(matrix, i, f, params, cfg))
        .collect::<Result<_, _>>()?;
    let mut done = Vec::new();
    let mut skipped = Vec::new();
    for o in outcomes {
        match o {
            Ok(f) => done.push(f),
            Err(s) => skipped.push(s),
        }
    }
    if done.is_empty() {
        return Err(WalkError::NoFolds { skipped: skipped.len() });
    }
    if !skipped.is_empty() {
        log::warn!("{} of {} folds skipped", skipped.len(), folds.len());
    }
    let mut entries: Vec<LedgerEntry> = done.iter().flat_map(|f| f.entries.iter().cloned()).collect();
    entries.sort_by_key(|e| e.window);
    let before = entries.len();
    entries.dedup_by_key(|e| e.window);
    debug_assert_eq!(before, entries.len(), "test blocks never overlap");
    Ok(WalkForwardResult {
        ledger: PredictionLedger {
            entries,
            threshold: cfg.threshold,
        },
        folds: done,
        skipped,
    })
}

/// Classification summary of a ledger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Absent when the ledger has a single class.
    pub auc: Option<f64>,
    pub logloss: f64,
    pub confusion: Confusion,
}

pub fn compute_metrics(ledger: &PredictionLedger) -> Result<MetricsReport, WalkError> {
    if ledger.is_empty() {
        return Err(WalkError::EmptyLedger);
    }
    let p: Vec<f64> = ledger.entries.iter().map(|e| e.probability).collect();
    let y: Vec<u8> = ledger.entries.iter().map(|e| e.label).collect();
    let pred: Vec<u8> = ledger.entries.iter().map(|e| e.prediction).collect();
    let confusion = Confusion::from_predictions(&pred, &y).expect("equal lengths");
    let MacroScores { precision, recall, f1 } = metrics::macro_scores(&confusion);
    Ok(MetricsReport {
        n: ledger.len(),
        precision,
        recall,
        f1,
        auc: metrics::auc(&p, &y).ok(),
        logloss: metrics::logloss(&p, &y).expect("non-empty, equal lengths"),
        confusion,
    })
}

/// Checks that no test row of any fold was used for training or selection.
pub fn leakage_free(folds: &[FoldOutcome]) -> bool {
    folds.iter().all(|f| {
        let test: HashSet<usize> = f.rows.test.iter().copied().collect();
        f.rows.train.iter().chain(&f.rows.val).all(|i| !test.contains(i))
    })
}
