//! AUC and F1 scores for binary link-sign classification.

use crate::error::{Error, Result};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub auc: f64,
    pub binary_f1: f64,
    pub macro_f1: f64,
    pub micro_f1: f64,
    pub n_pos: usize,
    pub n_neg: usize,
    pub threshold: f64,
}

impl EvalReport {
    pub const CSV_HEADER: &'static str = "auc,binary_f1,macro_f1,micro_f1,n_pos,n_neg,threshold";

    pub fn csv_row(&self) -> String {
        format!(
            "{:.6},{:.6},{:.6},{:.6},{},{},{}",
            self.auc,
            self.binary_f1,
            self.macro_f1,
            self.micro_f1,
            self.n_pos,
            self.n_neg,
            self.threshold
        )
    }
}

fn check_lengths(scores: &[f64], labels: &[f64]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::ShapeMismatch {
            context: "scores vs labels",
            expected: (labels.len(), 1),
            actual: (scores.len(), 1),
        });
    }
    Ok(())
}

/// Area under the ROC curve as the Mann–Whitney statistic, with tied scores
/// receiving their average rank (half credit per tied pair). O(n log n).
pub fn auc_roc(scores: &[f64], labels: &[f64]) -> Result<f64> {
    check_lengths(scores, labels)?;
    let n_pos = labels.iter().filter(|&&y| y > 0.5).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::DegenerateLabels);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let mut pos_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks are 1-based; the tie group i..=j shares the mean rank
        let mean_rank = (i + j) as f64 / 2.0 + 1.0;
        let pos_in_group = order[i..=j].iter().filter(|&&k| labels[k] > 0.5).count();
        pos_rank_sum += mean_rank * pos_in_group as f64;
        i = j + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok((pos_rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

fn f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

/// Returns `(binary_f1, macro_f1, micro_f1)` for predictions
/// `score >= threshold`. A class absent from both predictions and labels
/// contributes F1 = 0 to the macro average.
pub fn f1_suite(scores: &[f64], labels: &[f64], threshold: f64) -> Result<(f64, f64, f64)> {
    check_lengths(scores, labels)?;
    if scores.is_empty() {
        return Err(Error::EmptyInput);
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0usize, 0usize, 0usize, 0usize);
    for (&s, &y) in scores.iter().zip(labels) {
        match (s >= threshold, y > 0.5) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let pos_f1 = f1(tp, fp, fn_);
    let neg_f1 = f1(tn, fn_, fp);
    let micro = (tp + tn) as f64 / scores.len() as f64;
    Ok((pos_f1, (pos_f1 + neg_f1) / 2.0, micro))
}

pub fn evaluate(scores: &[f64], labels: &[f64], threshold: f64) -> Result<EvalReport> {
    let auc = auc_roc(scores, labels)?;
    let (binary_f1, macro_f1, micro_f1) = f1_suite(scores, labels, threshold)?;
    let n_pos = labels.iter().filter(|&&y| y > 0.5).count();
    Ok(EvalReport {
        auc,
        binary_f1,
        macro_f1,
        micro_f1,
        n_pos,
        n_neg: labels.len() - n_pos,
        threshold,
    })
}

/// Mean and sample standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
