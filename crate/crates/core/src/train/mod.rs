//! Focal loss, SGD with momentum and weight decay, cosine annealing and the
//! epoch loop.

mod loss;
mod optim;

pub use loss::{focal_loss, focal_term};
pub use optim::{lr_at, Sgd};

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::net::Model;
use crate::ops::{Mode, DROPOUT};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheduler {
    CosineAnnealing,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainParams {
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    pub momentum: f64,
    pub scheduler: Scheduler,
    pub epochs: usize,
    pub batch_size: usize,
    pub dropout: f64,
    pub weight_decay: f64,
    pub focal_gamma: f64,
    /// Optional per-class weights for the focal loss.
    #[serde(default)]
    pub focal_alpha: Option<Vec<f64>>,
    /// Jitter standard deviation as a fraction of each position channel's
    /// variance.
    pub jitter_fraction: f64,
    /// Write a checkpoint every this many epochs; 0 disables.
    #[serde(default)]
    pub checkpoint_every: usize,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            optimizer: Optimizer::Sgd,
            learning_rate: 0.001,
            momentum: 0.9,
            scheduler: Scheduler::CosineAnnealing,
            epochs: 300,
            batch_size: 10,
            dropout: DROPOUT,
            weight_decay: 0.01,
            focal_gamma: 2.0,
            focal_alpha: None,
            jitter_fraction: 0.03,
            checkpoint_every: 0,
        }
    }
}

impl TrainParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must be in [0, 1)");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must be in [0, 1)");
        }
        if !(self.weight_decay >= 0.0) || !(self.focal_gamma >= 0.0) || !(self.jitter_fraction >= 0.0) {
            return bad("weight_decay, focal_gamma and jitter_fraction must be non-negative");
        }
        if let Some(a) = &self.focal_alpha {
            if a.iter().any(|w| !(*w > 0.0)) {
                return bad("focal_alpha entries must be positive");
            }
        }
        Ok(())
    }
}

/// Resumable training state: the next epoch, the data-order rng and the
/// optimizer's momentum buffers.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub epoch: usize,
    pub rng: Rng,
    pub optimizer: Sgd,
}

impl TrainState {
    pub fn new(model: &Model, params: &TrainParams, rng: Rng) -> Self {
        Self {
            epoch: 0,
            rng,
            optimizer: Sgd::new(model, params.momentum, params.weight_decay),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub train_acc: f64,
    pub lr: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn final_accuracy(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.train_acc)
    }

    /// `epoch,loss,train_acc,lr` rows. Wall-clock time is left out so runs
    /// can be compared byte for byte.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| Error::Data(format!("writing history: {e}"));
        w.write_record(["epoch", "loss", "train_acc", "lr"]).map_err(csv_err)?;
        for e in &self.epochs {
            w.write_record([
                e.epoch.to_string(),
                format!("{:?}", e.loss),
                format!("{:?}", e.train_acc),
                format!("{:?}", e.lr),
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::Data(format!("writing history: {e}")))?;
        Ok(())
    }

    /// Reads rows written by [`TrainHistory::write_csv`]; wall-clock times
    /// come back as zero.
    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let mut epochs = Vec::new();
        for row in r.deserialize::<(usize, f64, f64, f64)>() {
            let (epoch, loss, train_acc, lr) = row.map_err(|e| Error::Data(format!("reading history: {e}")))?;
            epochs.push(EpochRecord {
                epoch,
                loss,
                train_acc,
                lr,
                seconds: 0.0,
            });
        }
        Ok(Self { epochs })
    }
}

/// Trains from `state.epoch` up to `params.epochs`. `on_epoch` runs after
/// every completed epoch with the updated model and state.
pub fn train<F>(
    model: &mut Model,
    clouds: &[&PointCloud],
    labels: &[usize],
    params: &TrainParams,
    state: &mut TrainState,
    mut on_epoch: F,
) -> Result<TrainHistory>
where
    F: FnMut(&Model, &TrainState, &EpochRecord) -> Result<()>,
{
    params.validate()?;
    if clouds.len() != labels.len() {
        return Err(Error::Data(format!("{} clouds but {} labels", clouds.len(), labels.len())));
    }
    if clouds.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= model.num_classes()) {
        return Err(Error::Data(format!(
            "label {y} out of range for {} classes",
            model.num_classes()
        )));
    }
    model.head.dropout = params.dropout;
    let alpha = params.focal_alpha.as_deref();
    let mut history = TrainHistory::default();

    while state.epoch < params.epochs {
        let start = Instant::now();
        let lr = lr_at(state.epoch, params.epochs, params.learning_rate)?;
        let order = state.rng.permutation(clouds.len());
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for batch in order.chunks(params.batch_size) {
            let mut rngs: Vec<Rng> = batch.iter().map(|_| state.rng.fork()).collect();
            let jittered: Vec<PointCloud> = batch
                .par_iter()
                .zip(rngs.par_iter_mut())
                .map(|(&i, rng)| clouds[i].jittered(params.jitter_fraction, rng))
                .collect();
            let refs: Vec<&PointCloud> = jittered.iter().collect();
            let ys: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();

            let (logits, tape) = model.forward_batch(&refs, Mode::Train, &mut rngs)?;
            let (loss, grad) = focal_loss(logits.view(), &ys, params.focal_gamma, alpha)?;
            loss_sum += loss * batch.len() as f64;
            correct += Model::argmax(logits.view())
                .iter()
                .zip(&ys)
                .filter(|(p, y)| p == y)
                .count();
            let grads = model.backward(&tape, grad.view());
            model.update_running_stats(&tape);
            state.optimizer.step(model, &grads, lr)?;
        }
        let record = EpochRecord {
            epoch: state.epoch,
            loss: loss_sum / clouds.len() as f64,
            train_acc: correct as f64 / clouds.len() as f64,
            lr,
            seconds: start.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {} loss {:.6} acc {:.4} lr {:.3e}",
            record.epoch,
            record.loss,
            record.train_acc,
            record.lr
        );
        state.epoch += 1;
        on_epoch(model, state, &record)?;
        history.epochs.push(record);
    }
    Ok(history)
}

/// Eval-mode logits for each cloud; `seed` fixes the input shuffles.
pub fn predict(model: &Model, clouds: &[&PointCloud], seed: u64) -> Result<ndarray::Array2<f64>> {
    let mut out = ndarray::Array2::zeros((clouds.len(), model.num_classes()));
    let mut base = Rng::new(seed);
    let mut rngs: Vec<Rng> = clouds.iter().map(|_| base.fork()).collect();
    for start in (0..clouds.len()).step_by(16) {
        let end = (start + 16).min(clouds.len());
        let (logits, _) = model.forward_batch(&clouds[start..end], Mode::Eval, &mut rngs[start..end])?;
        out.slice_mut(ndarray::s![start..end, ..]).assign(&logits);
    }
    Ok(out)
}
