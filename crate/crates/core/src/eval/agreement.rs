use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};

/// Label predicted by a logit row; ties go to the lower class.
pub fn predicted_label(logits: ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (c, &v) in logits.iter().enumerate() {
        if v > logits[best] {
            best = c;
        }
    }
    best
}

/// Two-view orientation rule. View B is view A rotated 180 degrees about x,
/// so a consistent model gives it the opposite label. Emits view A's label
/// when that happens and abstains otherwise.
pub fn agreement_predict(view_a: ArrayView1<'_, f64>, view_b: ArrayView1<'_, f64>) -> Option<usize> {
    let a = predicted_label(view_a);
    let b = predicted_label(view_b);
    (a <= 1 && b == 1 - a).then_some(a)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgreementSummary {
    pub tablets: usize,
    pub emitted: usize,
    pub correct: usize,
    pub coverage: f64,
    /// Precision over emitted predictions; absent when every tablet abstained.
    pub precision: Option<f64>,
}

impl AgreementSummary {
    /// `outcomes` holds `(emitted label, truth of view A)` per tablet.
    pub fn from_outcomes(outcomes: &[(Option<usize>, usize)]) -> Self {
        let tablets = outcomes.len();
        let emitted = outcomes.iter().filter(|(p, _)| p.is_some()).count();
        let correct = outcomes.iter().filter(|(p, t)| *p == Some(*t)).count();
        Self {
            tablets,
            emitted,
            correct,
            coverage: if tablets == 0 { 0.0 } else { emitted as f64 / tablets as f64 },
            precision: (emitted > 0).then(|| correct as f64 / emitted as f64),
        }
    }
}
