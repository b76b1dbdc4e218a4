use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

/// Mean focal loss over the batch and its gradient w.r.t. the logits.
///
/// `alpha`, when given, weights each sample by the entry of its true class.
pub fn focal_loss(
    logits: ArrayView2<'_, f64>,
    labels: &[usize],
    gamma: f64,
    alpha: Option<&[f64]>,
) -> Result<(f64, Array2<f64>)> {
    let (batch, classes) = logits.dim();
    if batch == 0 || labels.len() != batch {
        return Err(Error::Shape(format!("{batch} logit rows but {} labels", labels.len())));
    }
    if !(gamma >= 0.0) {
        return Err(Error::Config(format!("focal gamma must be non-negative, got {gamma}")));
    }
    if let Some(a) = alpha {
        if a.len() != classes {
            return Err(Error::Config(format!("alpha has {} entries for {classes} classes", a.len())));
        }
    }
    let mut total = 0.0;
    let mut grad = Array2::zeros((batch, classes));
    for (b, &y) in labels.iter().enumerate() {
        if y >= classes {
            return Err(Error::Data(format!("label {y} out of range for {classes} classes")));
        }
        let row = logits.row(b);
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
        let log_pt = row[y] - lse;
        let pt = log_pt.exp();
        let q = -log_pt.exp_m1();
        let w = alpha.map_or(1.0, |a| a[y]);
        let mod_q = q.powf(gamma);
        total += -w * mod_q * log_pt;

        let dlogpt = if gamma == 0.0 || q == 0.0 {
            -mod_q
        } else {
            gamma * q.powf(gamma - 1.0) * pt * log_pt - mod_q
        };
        let scale = w * dlogpt / batch as f64;
        for c in 0..classes {
            let p = (row[c] - lse).exp();
            let delta = if c == y { 1.0 } else { 0.0 };
            grad[[b, c]] = scale * (delta - p);
        }
    }
    let loss = total / batch as f64;
    if !loss.is_finite() {
        return Err(Error::NonFinite {
            stage: "focal loss".into(),
        });
    }
    Ok((loss, grad))
}

/// Focal loss of a single true-class probability.
pub fn focal_term(pt: f64, gamma: f64) -> f64 {
    -(1.0 - pt).powf(gamma) * pt.ln()
}
