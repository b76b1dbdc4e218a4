//! Run configuration: network, training recipe, task data and output.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{
    build_binary_dataset, build_front_dataset, build_period_dataset, synth_generate, BinaryTask, CloudLoader, Manifest,
    SynthParams, SynthTask, Task, TaskDataset,
};
use crate::error::{Error, Result};
use crate::net::NetworkSpec;
use crate::rng::Rng;
use crate::train::TrainParams;

/// Where the task's tablets come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TaskConfig {
    /// Scanned meshes listed in a manifest CSV.
    Manifest {
        task: Task,
        manifest: PathBuf,
        #[serde(default)]
        split_file: Option<PathBuf>,
        /// Point-cloud cache; `PPC_CACHE_DIR` takes precedence.
        #[serde(default)]
        cache_dir: Option<PathBuf>,
    },
    /// Generated tablets.
    Synth {
        task: SynthTask,
        per_class: usize,
        #[serde(default)]
        params: SynthParams,
    },
}

impl TaskConfig {
    pub fn num_classes(&self) -> Option<usize> {
        match self {
            TaskConfig::Synth { task, .. } => Some(task.classes()),
            TaskConfig::Manifest { task, .. } if task.is_binary() => Some(2),
            TaskConfig::Manifest { .. } => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub network: NetworkSpec,
    pub training: TrainParams,
    pub task: TaskConfig,
    pub output_dir: PathBuf,
    pub seed: u64,
    /// Input sizes for the point-count sweep.
    #[serde(default)]
    pub sweep_sizes: Vec<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            network: NetworkSpec::default(),
            training: TrainParams::default(),
            task: TaskConfig::Synth {
                task: SynthTask::Period,
                per_class: 25,
                params: SynthParams::default(),
            },
            output_dir: PathBuf::from("runs/default"),
            seed: 0,
            sweep_sizes: vec![8192, 32768],
        }
    }
}

impl RunConfig {
    /// Parses and validates. Syntax errors carry their line and column.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let TaskConfig::Manifest {
            manifest,
            split_file,
            cache_dir,
            ..
        } = &mut cfg.task
        {
            fix(manifest);
            split_file.as_mut().map(fix);
            cache_dir.as_mut().map(fix);
        }
        Ok(cfg)
    }

    /// Pretty JSON with every field spelled out; parsing it gives back an
    /// equal config.
    pub fn to_canonical_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        self.training.validate()?;
        if let Some(c) = self.task.num_classes() {
            if c != self.network.num_classes {
                return Err(Error::Config(format!(
                    "task has {c} classes but network.num_classes is {}",
                    self.network.num_classes
                )));
            }
        }
        if let TaskConfig::Synth { per_class: 0, .. } = self.task {
            return Err(Error::Config("per_class must be at least 1".into()));
        }
        for &n in &self.sweep_sizes {
            self.network.with_input_points(n)?;
        }
        Ok(())
    }

    /// Loads the task dataset with `n_points` sampled per cloud.
    pub fn dataset(&self, n_points: usize) -> Result<TaskDataset> {
        let ds = match &self.task {
            TaskConfig::Synth { task, per_class, params } => {
                let loader = CloudLoader::new(n_points, self.seed);
                synth_generate(*task, *per_class, params, &loader, &mut Rng::new(self.seed))?
            }
            TaskConfig::Manifest {
                task,
                manifest,
                split_file,
                cache_dir,
            } => {
                let mut m = Manifest::load(manifest)?;
                if let Some(split) = split_file {
                    m = m.with_split_file(split)?;
                }
                let loader = CloudLoader::new(n_points, self.seed).with_cache(cache_dir.clone());
                match task {
                    Task::Period { variant } => build_period_dataset(&m, *variant, &loader, self.seed)?,
                    Task::Seal => build_binary_dataset(&m, BinaryTask::Seal, &loader, self.seed)?,
                    Task::LeftSign => build_binary_dataset(&m, BinaryTask::LeftSign, &loader, self.seed)?,
                    Task::Front => build_front_dataset(&m, &loader, &mut Rng::new(self.seed))?,
                }
            }
        };
        if ds.num_classes() != self.network.num_classes {
            return Err(Error::Config(format!(
                "the {} task has {} classes but network.num_classes is {}",
                ds.task.name(),
                ds.num_classes(),
                self.network.num_classes
            )));
        }
        Ok(ds)
    }
}
