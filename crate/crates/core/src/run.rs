//! Command-level orchestration: everything a CLI subcommand does, with its
//! files written under the configured output directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::config::RunConfig;
use crate::data::{synth_tablets, CloudLoader, MeshSource, Split, SynthParams, SynthTask, BACK, FRONT, MANIFEST_COLUMNS};
use crate::error::{Error, Result};
use crate::eval::{
    ablation_grid, agreement_predict, bar_chart_svg, evaluate, initial_state, point_sweep, pr_curve, pr_curve_svg,
    write_csv, EvalReport, ExperimentResult,
};
use crate::geometry::io::{load_mesh, write_ply};
use crate::net::Model;
use crate::ops::Mode;
use crate::rng::Rng;
use crate::train::{train, TrainHistory};

pub const CONFIG_ECHO: &str = "config.json";
pub const HISTORY: &str = "history.csv";
pub const FINAL_CHECKPOINT: &str = "model.ppck";
pub const CHECKPOINT_DIR: &str = "checkpoints";

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn write_history(path: &Path, history: &TrainHistory) -> Result<()> {
    let mut buf = Vec::new();
    history.write_csv(&mut buf)?;
    write(path, buf)
}

pub fn periodic_checkpoint(out: &Path, epoch: usize) -> PathBuf {
    out.join(CHECKPOINT_DIR).join(format!("epoch_{epoch:04}.ppck"))
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub history: TrainHistory,
    pub checkpoint: PathBuf,
}

/// Trains per `cfg`, or continues from `resume`. Writes the config echo,
/// the history CSV after every epoch, periodic checkpoints and the final
/// checkpoint (which keeps the optimizer and rng state for resuming).
pub fn train_command(cfg: &RunConfig, resume: Option<&Path>) -> Result<TrainOutcome> {
    cfg.validate()?;
    let out = &cfg.output_dir;
    create_dir(out)?;
    write(&out.join(CONFIG_ECHO), cfg.to_canonical_json())?;

    let (mut model, mut state, mut history) = match resume {
        Some(path) => {
            let ck = checkpoint::load(path)?;
            if ck.model.spec != cfg.network {
                return Err(Error::Config(format!("{} was trained with a different network", path.display())));
            }
            let state = ck
                .state
                .ok_or_else(|| Error::Checkpoint(format!("{} has no training state", path.display())))?;
            let mut history = match fs::File::open(out.join(HISTORY)) {
                Ok(f) => TrainHistory::read_csv(f)?,
                Err(_) => TrainHistory::default(),
            };
            history.epochs.retain(|e| e.epoch < state.epoch);
            (ck.model, state, history)
        }
        None => {
            let (m, s) = initial_state(&cfg.network, &cfg.training, cfg.seed)?;
            (m, s, TrainHistory::default())
        }
    };

    let ds = cfg.dataset(cfg.network.input_points)?;
    let (clouds, labels) = ds.train_set();
    log::info!(
        "{} task: {} train / {} test instances, {} classes",
        ds.task.name(),
        ds.train.len(),
        ds.test.len(),
        ds.num_classes()
    );
    let every = cfg.training.checkpoint_every;
    if every > 0 {
        create_dir(&out.join(CHECKPOINT_DIR))?;
    }
    let history_path = out.join(HISTORY);
    let mut running = history.clone();
    let new = train(&mut model, &clouds, &labels, &cfg.training, &mut state, |m, st, rec| {
        running.epochs.push(rec.clone());
        write_history(&history_path, &running)?;
        if every > 0 && st.epoch % every == 0 {
            checkpoint::save(&periodic_checkpoint(out, st.epoch), m, Some(st))?;
        }
        Ok(())
    })?;
    history.epochs.extend(new.epochs);
    write_history(&history_path, &history)?;
    let path = out.join(FINAL_CHECKPOINT);
    checkpoint::save(&path, &model, Some(&state))?;
    Ok(TrainOutcome {
        history,
        checkpoint: path,
    })
}

fn check_model(model: &Model, cfg: &RunConfig) -> Result<()> {
    if model.num_classes() != cfg.network.num_classes {
        return Err(Error::Config(format!(
            "checkpoint has {} classes, the config {}",
            model.num_classes(),
            cfg.network.num_classes
        )));
    }
    if model.spec != cfg.network {
        return Err(Error::Config("checkpoint network differs from the config network".into()));
    }
    Ok(())
}

fn pr_svg(report: &EvalReport) -> Result<Option<String>> {
    if report.average_precision.is_none() {
        return Ok(None);
    }
    let scores: Vec<f64> = report.predictions.iter().map(|p| p.scores[1]).collect();
    let truth: Vec<bool> = report.predictions.iter().map(|p| p.label == 1).collect();
    let curve = pr_curve(&scores, &truth)?;
    let title = format!("{} ({})", report.task, report.variant);
    Ok(Some(pr_curve_svg(&title, &[(report.class_names[1].clone(), curve)])))
}

/// Eval-mode report for one split, written as `eval_<split>.{json,csv}` plus
/// a precision-recall SVG for binary tasks.
pub fn eval_command(cfg: &RunConfig, checkpoint_path: &Path, split: Split) -> Result<EvalReport> {
    let model = checkpoint::load(checkpoint_path)?.model;
    check_model(&model, cfg)?;
    let ds = cfg.dataset(cfg.network.input_points)?;
    let (idx, name) = match split {
        Split::Train => (&ds.train, "train"),
        Split::Test => (&ds.test, "test"),
    };
    let report = evaluate(&model, &ds, idx, name, cfg.seed)?;
    let out = &cfg.output_dir;
    create_dir(out)?;
    let mut json = Vec::new();
    report.write_json(&mut json)?;
    write(&out.join(format!("eval_{name}.json")), json)?;
    let mut csv = Vec::new();
    write_csv(&[&report], &mut csv)?;
    write(&out.join(format!("eval_{name}.csv")), csv)?;
    if let Some(svg) = pr_svg(&report)? {
        write(&out.join(format!("pr_{name}.svg")), svg)?;
    }
    Ok(report)
}

fn write_grid(out: &Path, stem: &str, title: &str, rows: &[ExperimentResult]) -> Result<()> {
    create_dir(out)?;
    let json = serde_json::to_vec_pretty(rows).map_err(|e| Error::Data(format!("writing {stem}: {e}")))?;
    write(&out.join(format!("{stem}.json")), json)?;
    let reports: Vec<&EvalReport> = rows.iter().map(|r| &r.report).collect();
    let mut csv = Vec::new();
    write_csv(&reports, &mut csv)?;
    write(&out.join(format!("{stem}.csv")), csv)?;
    write(&out.join(format!("{stem}.svg")), grid_svg(title, rows))
}

pub fn grid_svg(title: &str, rows: &[ExperimentResult]) -> String {
    let bars: Vec<(String, f64)> = rows.iter().map(|r| (r.report.variant.clone(), r.report.macro_f1)).collect();
    bar_chart_svg(title, "macro F1", &bars)
}

/// Six retrained variants, written as `ablation.{json,csv,svg}`.
pub fn ablate_command(cfg: &RunConfig) -> Result<Vec<ExperimentResult>> {
    cfg.validate()?;
    let ds = cfg.dataset(cfg.network.input_points)?;
    let rows = ablation_grid(&cfg.network, &cfg.training, &ds, cfg.seed)?;
    write_grid(&cfg.output_dir, "ablation", "ablation", &rows)?;
    Ok(rows)
}

/// One retrained model per entry of `sweep_sizes`, written as
/// `sweep.{json,csv,svg}`.
pub fn sweep_command(cfg: &RunConfig) -> Result<Vec<ExperimentResult>> {
    cfg.validate()?;
    let largest = *cfg
        .sweep_sizes
        .iter()
        .max()
        .ok_or_else(|| Error::Config("sweep_sizes is empty".into()))?;
    let ds = cfg.dataset(largest)?;
    let rows = point_sweep(&cfg.network, &cfg.sweep_sizes, &cfg.training, &ds, cfg.seed)?;
    write_grid(&cfg.output_dir, "sweep", "points per cloud", &rows)?;
    Ok(rows)
}

/// Re-renders the SVG for a saved report: a single [`EvalReport`] gives its
/// precision-recall curve, a grid of results gives the bar chart.
pub fn plot_command(report_json: &Path) -> Result<String> {
    let text = fs::read_to_string(report_json).map_err(|e| Error::io(report_json, e))?;
    if let Ok(rows) = serde_json::from_str::<Vec<ExperimentResult>>(&text) {
        let title = report_json.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        return Ok(grid_svg(&title, &rows));
    }
    let report: EvalReport =
        serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", report_json.display())))?;
    pr_svg(&report)?.ok_or_else(|| Error::Data("precision-recall curves need a binary task".into()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Orientation {
    /// `front`, `back`, or absent when the two views disagree.
    pub label: Option<String>,
    /// Class probabilities `[back, front]` of the scan as given.
    pub as_given: Vec<f64>,
    /// The same for the scan rotated 180 degrees about x.
    pub flipped: Vec<f64>,
}

fn softmax(row: ndarray::ArrayView1<'_, f64>) -> Vec<f64> {
    let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let e: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Classifies a single scan's orientation with a front-task model, emitting
/// a label only when the scan and its flip are classified oppositely.
pub fn orient_command(checkpoint_path: &Path, mesh: &Path, seed: u64) -> Result<Orientation> {
    let model = checkpoint::load(checkpoint_path)?.model;
    if model.num_classes() != 2 {
        return Err(Error::Config("orientation needs a two-class (front task) model".into()));
    }
    let loader = CloudLoader::new(model.spec.input_points, seed);
    let id = mesh.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let cloud = loader.sample_mesh(&load_mesh(mesh)?, loader.instance_seed(&id))?;
    let flipped = cloud.rotated_x_180();
    let a = model.forward(&cloud, Mode::Eval, &mut Rng::new(seed))?;
    let b = model.forward(&flipped, Mode::Eval, &mut Rng::new(seed))?;
    let label = agreement_predict(a.row(0), b.row(0)).map(|l| {
        match l {
            FRONT => "front",
            BACK => "back",
            _ => unreachable!("two classes"),
        }
        .to_string()
    });
    Ok(Orientation {
        label,
        as_given: softmax(a.row(0)),
        flipped: softmax(b.row(0)),
    })
}

/// Writes generated tablets as PLY meshes plus a `manifest.csv` describing
/// them, so the file-based pipeline can run without scans.
pub fn synth_command(task: SynthTask, per_class: usize, params: &SynthParams, seed: u64, out: &Path) -> Result<PathBuf> {
    let tablets = synth_tablets(task, per_class, params, &mut Rng::new(seed))?;
    let mesh_dir = out.join("meshes");
    create_dir(&mesh_dir)?;
    let manifest = out.join("manifest.csv");
    let mut w = csv::Writer::from_path(&manifest).map_err(|e| Error::Data(format!("{}: {e}", manifest.display())))?;
    let err = |e: csv::Error| Error::Data(format!("writing manifest: {e}"));
    w.write_record(MANIFEST_COLUMNS).map_err(err)?;
    let flag = |f: Option<bool>| f.map(|b| if b { "1" } else { "0" }).unwrap_or("").to_string();
    for t in &tablets {
        let MeshSource::Memory(mesh) = &t.source else {
            unreachable!("generated tablets live in memory")
        };
        let rel = format!("meshes/{}.ply", t.id);
        write_ply(&out.join(&rel), mesh)?;
        w.write_record([
            rel,
            t.id.clone(),
            t.period.clone().unwrap_or_default(),
            flag(t.seal),
            flag(t.left_sign),
            flag(t.front_eligible),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(&manifest, e))?;
    Ok(manifest)
}
