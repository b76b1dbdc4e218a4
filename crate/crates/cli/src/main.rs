use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use pointpyramid::config::RunConfig;
use pointpyramid::data::{sample_directory, CloudLoader, Split, SynthParams, SynthTask};
use pointpyramid::run;
use pointpyramid::Error;

#[derive(Parser)]
#[command(name = "ppc", version, about = "Point-pyramid classifier for 3D tablet scans")]
struct Cli {
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 runs strictly single-threaded. Defaults to one
    /// per core. Results do not depend on the thread count.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthArg {
    Period,
    Seal,
    LeftSign,
    Front,
}

#[derive(Subcommand)]
enum Command {
    /// Sample every mesh in a directory into cached point clouds.
    Sample {
        #[arg(long)]
        mesh_dir: PathBuf,
        #[arg(long, default_value_t = 32768)]
        points: usize,
    },
    /// Train a model; writes checkpoints, history and a config echo.
    Train {
        /// Continue from a checkpoint written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on a split of the configured task.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        split: SplitArg,
    },
    /// Retrain with each network component omitted in turn.
    Ablate,
    /// Retrain at each of the configured point counts.
    Sweep,
    /// Decide whether a scan shows its front, or abstain.
    Orient {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        mesh: PathBuf,
    },
    /// Write generated tablet meshes and a manifest.
    Synth {
        #[arg(long, value_enum, default_value_t = SynthArg::Period)]
        task: SynthArg,
        #[arg(long, default_value_t = 25)]
        per_class: usize,
    },
    /// Print the canonical form of the configuration (defaults without --config).
    SpecEcho,
    /// Render the SVG for a saved report or grid JSON.
    Plot {
        #[arg(long)]
        report: PathBuf,
    },
}

fn load_config(cli: &Cli) -> Result<RunConfig, Error> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => return Err(Error::Config("--config is required".into())),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.output_dir = o.clone();
    }
    Ok(cfg)
}

fn out_dir(cli: &Cli) -> Result<&Path, Error> {
    cli.out.as_deref().ok_or_else(|| Error::Config("--out is required".into()))
}

fn execute(cli: &Cli) -> Result<(), Error> {
    match &cli.command {
        Command::Sample { mesh_dir, points } => {
            let out = out_dir(cli)?;
            let loader = CloudLoader::new(*points, cli.seed.unwrap_or(0));
            let report = sample_directory(mesh_dir, out, &loader)?;
            if report.written.is_empty() && report.skipped.is_empty() && report.errors.is_empty() {
                log::warn!("no meshes found in {}", mesh_dir.display());
            }
            println!("written {} skipped {} failed {}", report.written.len(), report.skipped.len(), report.errors.len());
            for (path, e) in &report.errors {
                eprintln!("error: {}: {e}", path.display());
            }
            if let Some((_, e)) = report.errors.into_iter().next() {
                return Err(e);
            }
        }
        Command::Train { resume } => {
            let cfg = load_config(cli)?;
            let outcome = run::train_command(&cfg, resume.as_deref())?;
            if let Some(last) = outcome.history.epochs.last() {
                println!("epoch {} loss {:.6} train_acc {:.4}", last.epoch, last.loss, last.train_acc);
            }
            println!("checkpoint {}", outcome.checkpoint.display());
        }
        Command::Eval { checkpoint, split } => {
            let cfg = load_config(cli)?;
            let split = match split {
                SplitArg::Train => Split::Train,
                SplitArg::Test => Split::Test,
            };
            let r = run::eval_command(&cfg, checkpoint, split)?;
            let ap = r.average_precision.map(|v| format!(" ap {v:.4}")).unwrap_or_default();
            println!("{} {}: macro_f1 {:.4} accuracy {:.4}{ap}", r.task, r.variant, r.macro_f1, r.accuracy);
            if let Some(a) = &r.agreement {
                let p = a.precision.map(|p| format!("{p:.4}")).unwrap_or_else(|| "n/a".into());
                println!("agreement: coverage {:.4} precision {p}", a.coverage);
            }
        }
        Command::Ablate => {
            let cfg = load_config(cli)?;
            for row in run::ablate_command(&cfg)? {
                println!("{:<14} macro_f1 {:.4}", row.report.variant, row.report.macro_f1);
            }
        }
        Command::Sweep => {
            let cfg = load_config(cli)?;
            for row in run::sweep_command(&cfg)? {
                println!("{:<8} macro_f1 {:.4}", row.report.variant, row.report.macro_f1);
            }
        }
        Command::Orient { checkpoint, mesh } => {
            let o = run::orient_command(checkpoint, mesh, cli.seed.unwrap_or(0))?;
            println!("{}", o.label.as_deref().unwrap_or("abstain"));
            println!("as given: back {:.4} front {:.4}", o.as_given[0], o.as_given[1]);
            println!("flipped:  back {:.4} front {:.4}", o.flipped[0], o.flipped[1]);
        }
        Command::Synth { task, per_class } => {
            let task = match task {
                SynthArg::Period => SynthTask::Period,
                SynthArg::Seal => SynthTask::Seal,
                SynthArg::LeftSign => SynthTask::LeftSign,
                SynthArg::Front => SynthTask::Front,
            };
            let manifest = run::synth_command(task, *per_class, &SynthParams::default(), cli.seed.unwrap_or(0), out_dir(cli)?)?;
            println!("{}", manifest.display());
        }
        Command::SpecEcho => {
            let cfg = match &cli.config {
                Some(_) => load_config(cli)?,
                None => RunConfig::default(),
            };
            print!("{}", cfg.to_canonical_json());
        }
        Command::Plot { report } => {
            let svg = run::plot_command(report)?;
            match &cli.out {
                Some(path) => std::fs::write(path, svg).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?,
                None => print!("{svg}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        pool = pool.num_threads(n.max(1));
    }
    if let Err(e) = pool.build_global() {
        eprintln!("error: thread pool: {e}");
        return ExitCode::from(1);
    }
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
