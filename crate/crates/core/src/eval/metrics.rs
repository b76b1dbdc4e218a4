use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Instances of this class in the truth.
    pub support: usize,
}

fn check_labels(preds: &[usize], truth: &[usize], classes: usize) -> Result<()> {
    if preds.is_empty() {
        return Err(Error::Metric("no predictions to score".into()));
    }
    if preds.len() != truth.len() {
        return Err(Error::Metric(format!(
            "{} predictions for {} labels",
            preds.len(),
            truth.len()
        )));
    }
    if let Some(&y) = preds.iter().chain(truth).find(|&&y| y >= classes) {
        return Err(Error::Metric(format!("label {y} out of range for {classes} classes")));
    }
    Ok(())
}

/// `confusion[t][p]` counts instances of class `t` predicted as `p`.
pub fn confusion(preds: &[usize], truth: &[usize], classes: usize) -> Result<Vec<Vec<usize>>> {
    check_labels(preds, truth, classes)?;
    let mut m = vec![vec![0; classes]; classes];
    for (&p, &t) in preds.iter().zip(truth) {
        m[t][p] += 1;
    }
    Ok(m)
}

/// Precision, recall and F1 per class. A ratio with a zero denominator is 0.
pub fn per_class(preds: &[usize], truth: &[usize], classes: usize) -> Result<Vec<ClassScores>> {
    let m = confusion(preds, truth, classes)?;
    Ok((0..classes)
        .map(|c| {
            let tp = m[c][c] as f64;
            let predicted: usize = (0..classes).map(|t| m[t][c]).sum();
            let support: usize = m[c].iter().sum();
            let ratio = |a: f64, b: usize| if b == 0 { 0.0 } else { a / b as f64 };
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassScores {
                precision,
                recall,
                f1,
                support,
            }
        })
        .collect())
}

/// Unweighted mean of the per-class F1 scores over all `classes`.
pub fn f1_macro(preds: &[usize], truth: &[usize], classes: usize) -> Result<f64> {
    let scores = per_class(preds, truth, classes)?;
    Ok(scores.iter().map(|s| s.f1).sum::<f64>() / classes as f64)
}

pub fn accuracy(preds: &[usize], truth: &[usize]) -> Result<f64> {
    if preds.is_empty() || preds.len() != truth.len() {
        return Err(Error::Metric("accuracy needs equally many, nonzero predictions and labels".into()));
    }
    let hits = preds.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / preds.len() as f64)
}

/// Precision-recall points at each distinct score threshold, highest first.
/// Instances sharing a score enter together.
pub fn pr_curve(scores: &[f64], truth: &[bool]) -> Result<Vec<(f64, f64)>> {
    if scores.len() != truth.len() {
        return Err(Error::Metric(format!("{} scores for {} labels", scores.len(), truth.len())));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite {
            stage: "average precision scores".into(),
        });
    }
    let positives = truth.iter().filter(|&&t| t).count();
    if positives == 0 {
        return Err(Error::Metric("average precision needs at least one positive".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = Vec::new();
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            tp += truth[order[i]] as usize;
            seen += 1;
            i += 1;
        }
        points.push((tp as f64 / positives as f64, tp as f64 / seen as f64));
    }
    Ok(points)
}

/// Step-wise area under the precision-recall curve:
/// `sum_k (R_k - R_{k-1}) * P_k` over descending thresholds.
pub fn average_precision(scores: &[f64], truth: &[bool]) -> Result<f64> {
    let mut prev = 0.0;
    let mut ap = 0.0;
    for (r, p) in pr_curve(scores, truth)? {
        ap += (r - prev) * p;
        prev = r;
    }
    Ok(ap)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn macro_f1_hand_case() {
        let f = f1_macro(&[0, 1, 1, 1], &[0, 0, 1, 1], 2).unwrap();
        assert!((f - 11.0 / 15.0).abs() < 1e-12);
        assert_eq!(f1_macro(&[2, 0, 1], &[2, 0, 1], 3).unwrap(), 1.0);
    }

    #[test]
    fn absent_class_counts_as_zero() {
        assert_eq!(f1_macro(&[0, 1], &[0, 1], 3).unwrap(), 2.0 / 3.0);
    }

    #[test]
    fn ap_hand_cases() {
        let ap = average_precision(&[0.9, 0.8, 0.7], &[true, false, true]).unwrap();
        assert!((ap - 5.0 / 6.0).abs() < 1e-12);
        assert_eq!(average_precision(&[0.1, 0.9], &[false, true]).unwrap(), 1.0);
        let tied = average_precision(&[0.5; 5], &[true, false, true, false, false]).unwrap();
        assert!((tied - 0.4).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        assert!(f1_macro(&[], &[], 2).is_err());
        assert!(f1_macro(&[0, 2], &[0, 1], 2).is_err());
        assert!(average_precision(&[0.3, 0.2], &[false, false]).is_err());
        assert!(average_precision(&[0.3], &[true, false]).is_err());
    }

    #[test]
    fn confusion_rows_sum_to_support() {
        let m = confusion(&[0, 1, 1, 2, 0], &[0, 0, 1, 2, 2], 3).unwrap();
        assert_eq!(m, vec![vec![1, 1, 0], vec![0, 1, 0], vec![1, 0, 1]]);
    }
}
