use std::io::Write;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::agreement::{agreement_predict, predicted_label, AgreementSummary};
use super::metrics::{accuracy, average_precision, confusion, f1_macro, per_class, ClassScores};
use crate::data::{sibling_pairs, Task, TaskDataset};
use crate::error::{Error, Result};
use crate::net::Model;
use crate::rng::Rng;
use crate::train::predict;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstancePrediction {
    pub tablet_id: String,
    pub label: usize,
    pub predicted: usize,
    /// Class probabilities.
    pub scores: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: String,
    pub variant: String,
    pub seed: u64,
    pub class_names: Vec<String>,
    pub classes: Vec<ClassScores>,
    pub macro_f1: f64,
    pub accuracy: f64,
    /// Binary tasks only, with class 1 as the positive class.
    pub average_precision: Option<f64>,
    pub confusion: Vec<Vec<usize>>,
    pub agreement: Option<AgreementSummary>,
    pub predictions: Vec<InstancePrediction>,
}

pub const CSV_COLUMNS: [&str; 8] = ["task", "variant", "seed", "macro_f1", "ap", "accuracy", "coverage", "precision"];

fn softmax_rows(logits: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut p = logits.to_owned();
    for mut row in p.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row /= s;
    }
    p
}

impl EvalReport {
    pub fn from_logits(
        task: &str,
        variant: &str,
        seed: u64,
        class_names: &[String],
        tablet_ids: &[&str],
        labels: &[usize],
        logits: ArrayView2<'_, f64>,
    ) -> Result<Self> {
        let classes = class_names.len();
        if logits.dim() != (labels.len(), classes) || tablet_ids.len() != labels.len() {
            return Err(Error::Shape(format!(
                "logits {:?} for {} labels and {classes} classes",
                logits.dim(),
                labels.len()
            )));
        }
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                stage: "evaluation logits".into(),
            });
        }
        let preds: Vec<usize> = logits.rows().into_iter().map(predicted_label).collect();
        let probs = softmax_rows(logits);
        let average_precision = if classes == 2 && labels.contains(&1) {
            let scores: Vec<f64> = probs.column(1).to_vec();
            let truth: Vec<bool> = labels.iter().map(|&y| y == 1).collect();
            Some(average_precision(&scores, &truth)?)
        } else {
            None
        };
        let predictions = (0..labels.len())
            .map(|i| InstancePrediction {
                tablet_id: tablet_ids[i].to_string(),
                label: labels[i],
                predicted: preds[i],
                scores: probs.row(i).to_vec(),
            })
            .collect();
        Ok(Self {
            task: task.to_string(),
            variant: variant.to_string(),
            seed,
            class_names: class_names.to_vec(),
            classes: per_class(&preds, labels, classes)?,
            macro_f1: f1_macro(&preds, labels, classes)?,
            accuracy: accuracy(&preds, labels)?,
            average_precision,
            confusion: confusion(&preds, labels, classes)?,
            agreement: None,
            predictions,
        })
    }

    pub fn csv_row(&self) -> [String; 8] {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        [
            self.task.clone(),
            self.variant.clone(),
            self.seed.to_string(),
            self.macro_f1.to_string(),
            opt(self.average_precision),
            self.accuracy.to_string(),
            opt(self.agreement.as_ref().map(|a| a.coverage)),
            opt(self.agreement.as_ref().and_then(|a| a.precision)),
        ]
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, self).map_err(|e| Error::Data(format!("writing report: {e}")))
    }
}

/// Flat CSV with one row per report.
pub fn write_csv<W: Write>(reports: &[&EvalReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::Data(format!("writing report csv: {e}"));
    w.write_record(CSV_COLUMNS).map_err(err)?;
    for r in reports {
        w.write_record(r.csv_row()).map_err(err)?;
    }
    w.flush().map_err(|e| Error::Data(format!("writing report csv: {e}")))
}

/// Eval-mode report over the instances `idx` of `ds`. Front-task reports also
/// carry the two-view agreement summary; which sibling plays view A is drawn
/// per tablet from `seed`.
pub fn evaluate(model: &Model, ds: &TaskDataset, idx: &[usize], variant: &str, seed: u64) -> Result<EvalReport> {
    if model.num_classes() != ds.num_classes() {
        return Err(Error::Config(format!(
            "model has {} classes, the {} task has {}",
            model.num_classes(),
            ds.task.name(),
            ds.num_classes()
        )));
    }
    let (clouds, labels) = ds.subset(idx);
    let logits = predict(model, &clouds, seed)?;
    let ids = ds.tablet_ids(idx);
    let mut report = EvalReport::from_logits(ds.task.name(), variant, seed, &ds.class_names, &ids, &labels, logits.view())?;
    if ds.task == Task::Front {
        let pos: std::collections::HashMap<usize, usize> = idx.iter().enumerate().map(|(p, &i)| (i, p)).collect();
        let mut rng = Rng::new(seed);
        let outcomes: Vec<(Option<usize>, usize)> = sibling_pairs(ds, idx)
            .into_iter()
            .map(|(f, b)| {
                let (a, b) = if rng.bernoulli(0.5) { (f, b) } else { (b, f) };
                let emitted = agreement_predict(logits.row(pos[&a]), logits.row(pos[&b]));
                (emitted, ds.instances[a].label)
            })
            .collect();
        report.agreement = Some(AgreementSummary::from_outcomes(&outcomes));
    }
    Ok(report)
}
