//! Binary classification metrics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const PROB_CLAMP: f64 = 1e-15;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricError {
    #[error("length mismatch: {0} predictions vs {1} labels")]
    LengthMismatch(usize, usize),
    #[error("no samples")]
    Empty,
    #[error("AUC is undefined when only one class is present")]
    SingleClass,
}

fn check(p: &[f64], y: &[u8]) -> Result<(), MetricError> {
    if p.len() != y.len() {
        return Err(MetricError::LengthMismatch(p.len(), y.len()));
    }
    if p.is_empty() {
        return Err(MetricError::Empty);
    }
    Ok(())
}

/// Mean negative log-likelihood with probabilities clamped away from 0 and 1.
pub fn logloss(p: &[f64], y: &[u8]) -> Result<f64, MetricError> {
    check(p, y)?;
    let total: f64 = p
        .iter()
        .zip(y)
        .map(|(&p, &y)| {
            let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            if y == 1 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    Ok(total / p.len() as f64)
}

/// Area under the ROC curve via midranks (ties count one half).
pub fn auc(p: &[f64], y: &[u8]) -> Result<f64, MetricError> {
    check(p, y)?;
    let n_pos = y.iter().filter(|&&l| l == 1).count();
    let n_neg = y.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricError::SingleClass);
    }
    let mut order: Vec<usize> = (0..p.len()).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]));
    // rank sums are kept doubled so midranks stay integral
    let mut pos_rank_x2: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && p[order[j + 1]] == p[order[i]] {
            j += 1;
        }
        let midrank_x2 = (i + 1 + j + 1) as u128;
        let pos_in_tie = order[i..=j].iter().filter(|&&k| y[k] == 1).count() as u128;
        pos_rank_x2 += midrank_x2 * pos_in_tie;
        i = j + 1;
    }
    let np = n_pos as u128;
    let u_x2 = pos_rank_x2 - np * (np + 1);
    Ok(u_x2 as f64 / 2.0 / (n_pos as f64 * n_neg as f64))
}

/// Counts keyed as `[actual][predicted]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub true_negative: usize,
    pub false_positive: usize,
    pub false_negative: usize,
    pub true_positive: usize,
}

impl Confusion {
    pub fn from_predictions(pred: &[u8], y: &[u8]) -> Result<Self, MetricError> {
        if pred.len() != y.len() {
            return Err(MetricError::LengthMismatch(pred.len(), y.len()));
        }
        let mut c = Self::default();
        for (&p, &a) in pred.iter().zip(y) {
            match (a, p) {
                (0, 0) => c.true_negative += 1,
                (0, _) => c.false_positive += 1,
                (_, 0) => c.false_negative += 1,
                _ => c.true_positive += 1,
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> usize {
        self.true_negative + self.false_positive + self.false_negative + self.true_positive
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Unweighted two-class averages. A class never predicted has precision 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacroScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn macro_scores(c: &Confusion) -> MacroScores {
    let p1 = ratio(c.true_positive, c.true_positive + c.false_positive);
    let r1 = ratio(c.true_positive, c.true_positive + c.false_negative);
    let p0 = ratio(c.true_negative, c.true_negative + c.false_negative);
    let r0 = ratio(c.true_negative, c.true_negative + c.false_positive);
    MacroScores {
        precision: (p0 + p1) / 2.0,
        recall: (r0 + r1) / 2.0,
        f1: (f1(p0, r0) + f1(p1, r1)) / 2.0,
    }
}
