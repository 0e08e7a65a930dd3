//! Classification accuracy and average precision.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Fraction of positions where prediction equals truth.
pub fn accuracy<T: PartialEq>(predictions: &[T], truths: &[T]) -> Result<f64> {
    if predictions.len() != truths.len() {
        return Err(Error::LengthMismatch {
            left: predictions.len(),
            right: truths.len(),
        });
    }
    if predictions.is_empty() {
        return Err(Error::InvalidConfig("accuracy of empty set".into()));
    }
    let correct = predictions
        .iter()
        .zip(truths)
        .filter(|(p, t)| p == t)
        .count();
    Ok(correct as f64 / predictions.len() as f64)
}

/// Area under the precision-recall curve for one label's ranking:
/// sort by score descending (ties stable by original index), then
/// `AP = sum over positives of precision-at-that-rank / num_positives`.
///
/// Returns `None` when there are no positive labels (AP undefined; callers
/// report the label as skipped).
pub fn average_precision(scores: &[f64], relevant: &[bool]) -> Result<Option<f64>> {
    if scores.len() != relevant.len() {
        return Err(Error::LengthMismatch {
            left: scores.len(),
            right: relevant.len(),
        });
    }
    let num_pos = relevant.iter().filter(|&&r| r).count();
    if num_pos == 0 {
        return Ok(None);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    // Stable sort keeps original-index order on ties.
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("finite scores"));
    let mut tp = 0usize;
    let mut ap = 0.0;
    for (rank0, &i) in order.iter().enumerate() {
        if relevant[i] {
            tp += 1;
            ap += tp as f64 / (rank0 + 1) as f64;
        }
    }
    Ok(Some(ap / num_pos as f64))
}

/// Per-label and aggregate average precision for a multi-label task.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ApReport {
    /// AP per label; `None` where the label had no positives.
    pub per_label: Vec<Option<f64>>,
    /// Unweighted mean over all labels with defined AP.
    pub overall: f64,
    /// Unweighted mean over the in-domain labels (all labels except
    /// `out_of_domain`) with defined AP.
    pub in_domain: f64,
}

/// Compute APs for `K` labels. `scores[k]` and `truths[k]` hold the ranking
/// of every document for label `k`; `out_of_domain` names the label excluded
/// from the in-domain average.
pub fn multilabel_ap_report(
    scores: &[Vec<f64>],
    truths: &[Vec<bool>],
    out_of_domain: usize,
) -> Result<ApReport> {
    if scores.len() != truths.len() {
        return Err(Error::LengthMismatch {
            left: scores.len(),
            right: truths.len(),
        });
    }
    let mut per_label = Vec::with_capacity(scores.len());
    for (s, t) in scores.iter().zip(truths) {
        per_label.push(average_precision(s, t)?);
    }
    let mean_over = |keep: &dyn Fn(usize) -> bool| {
        let vals: Vec<f64> = per_label
            .iter()
            .enumerate()
            .filter(|(k, v)| keep(*k) && v.is_some())
            .map(|(_, v)| v.unwrap())
            .collect();
        if vals.is_empty() {
            f64::NAN
        } else {
            vals.iter().sum::<f64>() / vals.len() as f64
        }
    };
    let overall = mean_over(&|_| true);
    let in_domain = mean_over(&|k| k != out_of_domain);
    Ok(ApReport {
        per_label,
        overall,
        in_domain,
    })
}
