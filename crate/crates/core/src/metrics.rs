//! Binary metrics with the target class as positive.

use std::fmt;

use crate::data::Label;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub fpr: f64,
    pub auc: Option<f64>,
    /// Ratios whose denominator was zero and were reported as 0.
    pub degenerate: Vec<&'static str>,
}

fn ratio(num: usize, den: usize, name: &'static str, flags: &mut Vec<&'static str>) -> f64 {
    if den == 0 {
        flags.push(name);
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl MetricsReport {
    pub fn from_counts(tp: usize, fp: usize, tn: usize, fn_: usize) -> Self {
        let mut flags = Vec::new();
        let accuracy = ratio(tp + tn, tp + fp + tn + fn_, "accuracy", &mut flags);
        let precision = ratio(tp, tp + fp, "precision", &mut flags);
        let recall = ratio(tp, tp + fn_, "recall", &mut flags);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            flags.push("f1");
            0.0
        };
        let fpr = ratio(fp, fp + tn, "fpr", &mut flags);
        MetricsReport {
            tp,
            fp,
            tn,
            fn_,
            accuracy,
            precision,
            recall,
            f1,
            fpr,
            auc: None,
            degenerate: flags,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn is_degenerate(&self, field: &str) -> bool {
        self.degenerate.contains(&field)
    }

    pub fn with_auc(mut self, auc: f64) -> Self {
        self.auc = Some(auc);
        self
    }
}

/// Flat `key = value` rendering, one field per line.
impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "tp = {}", self.tp)?;
        writeln!(f, "fp = {}", self.fp)?;
        writeln!(f, "tn = {}", self.tn)?;
        writeln!(f, "fn = {}", self.fn_)?;
        writeln!(f, "accuracy = {:.6}", self.accuracy)?;
        writeln!(f, "precision = {:.6}", self.precision)?;
        writeln!(f, "recall = {:.6}", self.recall)?;
        writeln!(f, "f1 = {:.6}", self.f1)?;
        writeln!(f, "fpr = {:.6}", self.fpr)?;
        match self.auc {
            Some(a) => writeln!(f, "auc = {a:.6}")?,
            None => writeln!(f, "auc = none")?,
        }
        writeln!(f, "degenerate = {}", self.degenerate.join(","))
    }
}

pub fn score(predictions: &[Label], truth: &[Label]) -> Result<MetricsReport> {
    if predictions.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: predictions.len(),
            right: truth.len(),
        });
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (p, t) in predictions.iter().zip(truth) {
        match (p, t) {
            (Label::Target, Label::Target) => tp += 1,
            (Label::Target, Label::NonTarget) => fp += 1,
            (Label::NonTarget, Label::NonTarget) => tn += 1,
            (Label::NonTarget, Label::Target) => fn_ += 1,
        }
    }
    Ok(MetricsReport::from_counts(tp, fp, tn, fn_))
}

/// Probability that a random target outranks a random non-target, ties
/// counting one half. Computed from average ranks; the result is exact
/// whenever `n_target · n_non_target` fits an `f64` mantissa.
pub fn roc_auc(scores: &[f64], truth: &[Label]) -> Result<f64> {
    if scores.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: scores.len(),
            right: truth.len(),
        });
    }
    let n_pos = truth.iter().filter(|l| l.is_target()).count() as u64;
    let n_neg = truth.len() as u64 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    if let Some(bad) = scores.iter().find(|s| s.is_nan()) {
        return Err(Error::OutOfDomain {
            value: *bad,
            domain: "non-NaN scores",
        });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // doubled ranks keep tie averages integral
    let mut doubled_rank_sum: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let doubled_avg = (i + 1 + j + 1) as u64;
        let pos_in_group = order[i..=j].iter().filter(|&&k| truth[k].is_target()).count() as u64;
        doubled_rank_sum += pos_in_group * doubled_avg;
        i = j + 1;
    }
    // 2·U = doubled rank sum − n_pos(n_pos + 1)
    let doubled_u = doubled_rank_sum - n_pos * (n_pos + 1);
    Ok(doubled_u as f64 / (2 * n_pos * n_neg) as f64)
}
