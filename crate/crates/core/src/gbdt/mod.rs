//! Gradient-boosted decision trees for binary classification.
//!
//! Exact greedy split search over sorted feature values, logistic loss,
//! shrinkage, positive-class weighting and learned default directions for
//! missing values (NaN). Gradient and hessian sums are accumulated in fixed
//! point, so the fitted model does not depend on row order.

mod serialize;
mod train;
mod tree;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use serialize::{ModelDocument, FORMAT_NAME, FORMAT_VERSION};
pub use train::{train, RoundRecord, Training};
pub use tree::{Node, Tree};

#[derive(Debug, Error)]
pub enum GbdtError {
    #[error("training set is empty")]
    Empty,
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("schema mismatch: expected {expected}, got {got}")]
    SchemaMismatch { expected: String, got: String },
    #[error("row {row} has {got} features, expected {expected}")]
    RowWidth { row: usize, got: usize, expected: usize },
    #[error("label at row {0} is not 0 or 1")]
    BadLabel(usize),
    #[error("{0} rows but {1} labels")]
    LengthMismatch(usize, usize),
    #[error("unsupported model format `{0}`")]
    Format(String),
    #[error("model format version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("corrupt model: {0}")]
    Corrupt(String),
    #[error("model document: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    BinaryLogistic,
}

/// Validation metric used to pick the best round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMetric {
    Logloss,
    Auc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainParams {
    pub eta: f64,
    pub n_estimators: usize,
    pub max_depth: usize,
    pub scale_pos_weight: f64,
    /// Carried for reproducibility records; the exact greedy learner draws
    /// no random numbers.
    pub seed: u64,
    pub objective: Objective,
    pub reg_lambda: f64,
    pub gamma: f64,
    pub min_child_weight: f64,
    pub base_score: f64,
    pub eval_metric: EvalMetric,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            eta: 0.01,
            n_estimators: 300,
            max_depth: 5,
            scale_pos_weight: 0.6,
            seed: 4321,
            objective: Objective::BinaryLogistic,
            reg_lambda: 1.0,
            gamma: 0.0,
            min_child_weight: 1.0,
            base_score: 0.5,
            eval_metric: EvalMetric::Logloss,
        }
    }
}

impl TrainParams {
    pub fn validate(&self) -> Result<(), GbdtError> {
        let bad = |m: &str| Err(GbdtError::InvalidParams(m.to_string()));
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return bad("eta must be positive");
        }
        if self.n_estimators == 0 {
            return bad("n_estimators must be at least 1");
        }
        if !(self.scale_pos_weight > 0.0 && self.scale_pos_weight.is_finite()) {
            return bad("scale_pos_weight must be positive");
        }
        if !(self.reg_lambda >= 0.0 && self.reg_lambda.is_finite()) {
            return bad("reg_lambda must be non-negative");
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return bad("gamma must be non-negative");
        }
        if !(self.min_child_weight >= 0.0 && self.min_child_weight.is_finite()) {
            return bad("min_child_weight must be non-negative");
        }
        if !(self.base_score > 0.0 && self.base_score < 1.0) {
            return bad("base_score must lie in (0, 1)");
        }
        Ok(())
    }

    pub fn base_margin(&self) -> f64 {
        (self.base_score / (1.0 - self.base_score)).ln()
    }
}

/// Borrowed training or evaluation rows with their labels.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Samples<'a> {
    pub rows: Vec<&'a [f64]>,
    pub labels: Vec<u8>,
}

impl<'a> Samples<'a> {
    pub fn new(rows: Vec<&'a [f64]>, labels: Vec<u8>) -> Result<Self, GbdtError> {
        if rows.len() != labels.len() {
            return Err(GbdtError::LengthMismatch(rows.len(), labels.len()));
        }
        if let Some(i) = labels.iter().position(|&l| l > 1) {
            return Err(GbdtError::BadLabel(i));
        }
        Ok(Self { rows, labels })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn check_width(&self, width: usize) -> Result<(), GbdtError> {
        match self.rows.iter().position(|r| r.len() != width) {
            Some(row) => Err(GbdtError::RowWidth {
                row,
                got: self.rows[row].len(),
                expected: width,
            }),
            None => Ok(()),
        }
    }
}

/// Digest identifying an ordered column list.
pub fn schema_hash(columns: &[String]) -> String {
    let mut h = Sha256::new();
    for c in columns {
        h.update(c.as_bytes());
        h.update([0u8]);
    }
    hex::encode(h.finalize())
}

pub fn sigmoid(m: f64) -> f64 {
    1.0 / (1.0 + (-m).exp())
}

/// Trained ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub params: TrainParams,
    pub trees: Vec<Tree>,
    pub schema_hash: String,
    pub n_features: usize,
    /// Number of leading trees used for prediction.
    pub best_round: usize,
}

impl Model {
    pub fn ensure_schema(&self, columns: &[String]) -> Result<(), GbdtError> {
        let got = schema_hash(columns);
        if got != self.schema_hash {
            return Err(GbdtError::SchemaMismatch {
                expected: self.schema_hash.clone(),
                got,
            });
        }
        Ok(())
    }

    /// Raw score of one row using the first `best_round` trees.
    pub fn margin(&self, row: &[f64]) -> f64 {
        let mut m = self.params.base_margin();
        for t in &self.trees[..self.best_round.min(self.trees.len())] {
            m += self.params.eta * t.leaf_weight(row);
        }
        m
    }

    /// Class-1 probabilities, kept inside the open unit interval.
    pub fn predict_proba(&self, rows: &[&[f64]]) -> Result<Vec<f64>, GbdtError> {
        rows.iter()
            .enumerate()
            .map(|(i, r)| {
                if r.len() != self.n_features {
                    return Err(GbdtError::RowWidth {
                        row: i,
                        got: r.len(),
                        expected: self.n_features,
                    });
                }
                Ok(sigmoid(self.margin(r)).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0))
            })
            .collect()
    }
}
