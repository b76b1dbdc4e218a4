use serde::{Deserialize, Serialize};

use super::report::{evaluate, EvalReport};
use crate::data::TaskDataset;
use crate::error::{Error, Result};
use crate::net::{Ablation, Model, NetworkSpec};
use crate::rng::Rng;
use crate::train::{train, EpochRecord, TrainHistory, TrainParams, TrainState};

/// Model and training state for a fresh run. The model and the training
/// loop draw from separate streams of `seed`.
pub fn initial_state(spec: &NetworkSpec, params: &TrainParams, seed: u64) -> Result<(Model, TrainState)> {
    let mut root = Rng::new(seed);
    let model = Model::build(spec.clone(), &mut root.fork())?;
    let state = TrainState::new(&model, params, root.fork());
    Ok((model, state))
}

/// Trains a fresh model on the training split of `ds`.
pub fn fit<F>(spec: &NetworkSpec, params: &TrainParams, ds: &TaskDataset, seed: u64, on_epoch: F) -> Result<(Model, TrainHistory)>
where
    F: FnMut(&Model, &TrainState, &EpochRecord) -> Result<()>,
{
    if spec.num_classes != ds.num_classes() {
        return Err(Error::Config(format!(
            "network has {} classes, the {} task has {}",
            spec.num_classes,
            ds.task.name(),
            ds.num_classes()
        )));
    }
    let (mut model, mut state) = initial_state(spec, params, seed)?;
    let (clouds, labels) = ds.train_set();
    let history = train(&mut model, &clouds, &labels, params, &mut state, on_epoch)?;
    Ok((model, history))
}

/// One trained-and-evaluated grid cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub network: NetworkSpec,
    pub final_train_accuracy: Option<f64>,
    pub report: EvalReport,
}

/// Trains `spec` and evaluates it on the test split.
pub fn run_experiment(spec: &NetworkSpec, params: &TrainParams, ds: &TaskDataset, seed: u64, variant: &str) -> Result<ExperimentResult> {
    let (model, history) = fit(spec, params, ds, seed, |_, _, _| Ok(()))?;
    let report = evaluate(&model, ds, &ds.test, variant, seed)?;
    Ok(ExperimentResult {
        network: spec.clone(),
        final_train_accuracy: history.final_accuracy(),
        report,
    })
}

/// The base spec with one component removed, trained with the same seed and
/// parameters as every other row.
pub fn ablation_run(base: &NetworkSpec, omit: Ablation, params: &TrainParams, ds: &TaskDataset, seed: u64) -> Result<ExperimentResult> {
    let spec = omit.apply(base);
    spec.validate()?;
    run_experiment(&spec, params, ds, seed, omit.name())
}

/// One row per [`Ablation`], `none` last.
pub fn ablation_grid(base: &NetworkSpec, params: &TrainParams, ds: &TaskDataset, seed: u64) -> Result<Vec<ExperimentResult>> {
    Ablation::ALL
        .iter()
        .map(|&omit| {
            log::info!("ablation: omit {}", omit.name());
            ablation_run(base, omit, params, ds, seed)
        })
        .collect()
}

/// Retrains with every layer size scaled to each input size in `sizes`.
/// Clouds in `ds` must carry at least the largest size.
pub fn point_sweep(base: &NetworkSpec, sizes: &[usize], params: &TrainParams, ds: &TaskDataset, seed: u64) -> Result<Vec<ExperimentResult>> {
    let specs: Vec<NetworkSpec> = sizes.iter().map(|&n| base.with_input_points(n)).collect::<Result<_>>()?;
    let smallest = ds.instances.iter().map(|i| i.cloud.len()).min().unwrap_or(0);
    if let Some(&n) = sizes.iter().find(|&&n| n > smallest) {
        return Err(Error::Data(format!("sweep size {n} exceeds the {smallest} points loaded per cloud")));
    }
    specs
        .iter()
        .zip(sizes)
        .map(|(spec, n)| {
            log::info!("sweep: {n} points");
            run_experiment(spec, params, ds, seed, &n.to_string())
        })
        .collect()
}
