//! Acceptance suite. Runs every criterion in order, prints one PASS/FAIL
//! line each, and exits nonzero if any fails.
//!
//! `cargo test --release --test acceptance -- 4 10` runs only the listed
//! criteria.

mod common;

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use ndarray::Array2;
use pointpyramid::checkpoint;
use pointpyramid::config::{RunConfig, TaskConfig};
use pointpyramid::data::{separable_set, sibling_pairs, synth_generate, CloudLoader, SynthParams, SynthTask};
use pointpyramid::eval::{ablation_grid, average_precision, evaluate, f1_macro};
use pointpyramid::neighbors::bruteforce::knn_bruteforce;
use pointpyramid::neighbors::{knn_feature, knn_spatial, Space, DEFAULT_PAIRWISE_BUDGET};
use pointpyramid::ops::{Learnable, Mode, Variant};
use pointpyramid::run::{periodic_checkpoint, train_command, FINAL_CHECKPOINT, HISTORY};
use pointpyramid::train::{focal_loss, focal_term, predict, train, Optimizer, Scheduler, TrainParams, TrainState};
use pointpyramid::{Ablation, Model, NetworkSpec, PointCloud, Rng};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// 1 ---------------------------------------------------------------------

fn gradient_suite() -> Outcome {
    const CASES: usize = 50;
    const TOL: f64 = 1e-4;
    let variants = [Variant::Edge, Variant::LocalEdge, Variant::Vertex, Variant::EdgeVertex];
    let mut families: Vec<(String, Box<dyn Fn(usize, &mut Rng) -> common::Worst>)> = Vec::new();
    for v in variants {
        families.push((format!("{v:?}"), Box::new(move |c, r| common::pair_conv_case(v, c, false, r))));
    }
    families.push(("fusion".into(), Box::new(common::point_conv_case)));
    families.push(("top".into(), Box::new(|c, r| common::pair_conv_case(Variant::Edge, c, true, r))));
    families.push(("head".into(), Box::new(common::head_case)));
    families.push(("focal".into(), Box::new(common::focal_case)));
    let mut summary = Vec::new();
    for (f, (name, case)) in families.iter().enumerate() {
        let mut rng = Rng::new(1000 + f as u64);
        let mut worst = common::Worst::new();
        for c in 0..CASES {
            worst.merge(case(c, &mut rng));
        }
        ensure(worst.rel < TOL, || format!("{name}: relative error {:.2e} at {}", worst.rel, worst.at))?;
        summary.push(format!("{name} {:.1e}", worst.rel));
    }
    Ok(format!("{CASES} configs per family, worst: {}", summary.join(", ")))
}

// 2 ---------------------------------------------------------------------

fn random_cloud(n: usize, dims: usize, lattice: bool, rng: &mut Rng) -> Array2<f64> {
    if lattice {
        // Small integer grid: many exactly tied distances.
        Array2::from_shape_simple_fn((n, dims), || rng.below(6) as f64)
    } else {
        Array2::from_shape_simple_fn((n, dims), || rng.uniform_range(-1.0, 1.0))
    }
}

fn rows_of(a: &Array2<f64>) -> Vec<[f64; 3]> {
    a.rows().into_iter().map(|r| [r[0], r[1], r[2]]).collect()
}

fn knn_oracle() -> Outcome {
    let mut rng = Rng::new(2);
    let mut ties = 0;
    for case in 0..1000 {
        let k = 1 + rng.below(20);
        let d = 1 + rng.below(4);
        let n = k * d + 1 + rng.below(512 - k * d);
        let lattice = case % 3 == 0;
        ties += lattice as usize;
        let pts = random_cloud(n, 3, lattice, &mut rng);
        let fast = knn_spatial(&rows_of(&pts), k, d).map_err(|e| e.to_string())?;
        let slow = knn_bruteforce(pts.view(), k, d, Space::Spatial).map_err(|e| e.to_string())?;
        ensure(fast.as_slice() == slow.as_slice(), || format!("spatial case {case}: n {n} k {k} d {d}"))?;

        let dims = 1 + rng.below(16);
        let feats = random_cloud(n, dims, lattice, &mut rng);
        let fast = knn_feature(feats.view(), k, DEFAULT_PAIRWISE_BUDGET).map_err(|e| e.to_string())?;
        let slow = knn_bruteforce(feats.view(), k, 1, Space::Feature).map_err(|e| e.to_string())?;
        ensure(fast.as_slice() == slow.as_slice(), || format!("feature case {case}: n {n} k {k} dims {dims}"))?;
    }
    Ok(format!("1000 clouds ({ties} with tied lattice distances), spatial and feature search identical"))
}

// 3 ---------------------------------------------------------------------

fn dilation_identity() -> Outcome {
    let mut rng = Rng::new(3);
    for case in 0..200 {
        let k = 1 + rng.below(16);
        let d = 2 + rng.below(3);
        let n = k * d + 1 + rng.below(300);
        let pts = rows_of(&random_cloud(n, 3, case % 4 == 0, &mut rng));
        let dilated = knn_spatial(&pts, k, d).map_err(|e| e.to_string())?;
        let dense = knn_spatial(&pts, k * d, 1).map_err(|e| e.to_string())?;
        let strided = dense.strided(d);
        ensure(dilated.as_slice() == strided.as_slice() && dilated.k() == k, || {
            format!("case {case}: n {n} k {k} d {d}")
        })?;
        for i in 0..n {
            let row = dilated.row(i);
            for r in 0..k {
                ensure(row[r] == dense.row(i)[(r + 1) * d - 1], || format!("case {case} row {i} rank {r}"))?;
            }
        }
    }
    Ok("200 cases: rank r of the dilated search is rank r*d of the dense one".into())
}

// 4 ---------------------------------------------------------------------

fn architecture() -> Outcome {
    let s = NetworkSpec::default();
    let variants = [Variant::LocalEdge, Variant::EdgeVertex, Variant::Vertex, Variant::Vertex, Variant::Vertex];
    let inputs = [32768, 16384, 8192, 4096, 2048];
    let outputs = [16384, 8192, 4096, 2048, 1024];
    let features = [32, 32, 64, 64, 64];
    let dilation = [1, 1, 2, 2, 1];
    ensure(s.layers.len() == 5, || format!("{} layers", s.layers.len()))?;
    for (l, layer) in s.layers.iter().enumerate() {
        ensure(layer.variant == variants[l], || format!("layer {l} variant {:?}", layer.variant))?;
        ensure(layer.input_size == inputs[l], || format!("layer {l} input {}", layer.input_size))?;
        ensure(layer.output_size == outputs[l], || format!("layer {l} output {}", layer.output_size))?;
        ensure(layer.features == features[l], || format!("layer {l} features {}", layer.features))?;
        ensure(layer.dilation == dilation[l], || format!("layer {l} dilation {}", layer.dilation))?;
        ensure(layer.neighbors == 16, || format!("layer {l} neighbors {}", layer.neighbors))?;
    }
    let top = s.top_edgeconv.as_ref().ok_or("no top layer")?;
    ensure(top.neighbors == 16 && top.features == 128, || format!("top {top:?}"))?;
    ensure(s.fusion_width == Some(512), || format!("fusion {:?}", s.fusion_width))?;
    ensure(s.head_hidden == [512, 256], || format!("head {:?}", s.head_hidden))?;
    ensure(s.input_points == 32768 && s.use_normals && s.use_dilation, || "input settings".into())?;
    ensure(s.final_points() == 1024, || format!("final points {}", s.final_points()))?;
    let t = TrainParams::default();
    ensure(
        t.optimizer == Optimizer::Sgd
            && t.scheduler == Scheduler::CosineAnnealing
            && t.learning_rate == 0.001
            && t.epochs == 300
            && t.batch_size == 10
            && t.dropout == 0.6
            && t.weight_decay == 0.01
            && t.jitter_fraction == 0.03,
        || format!("training defaults {t:?}"),
    )?;
    Ok("layers, top, fusion, head and training defaults match field by field".into())
}

// 5 ---------------------------------------------------------------------

fn focal_properties() -> Outcome {
    let mut rng = Rng::new(5);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let b = 1 + rng.below(8);
        let c = 2 + rng.below(6);
        let logits = Array2::from_shape_simple_fn((b, c), || 4.0 * rng.normal());
        let labels: Vec<usize> = (0..b).map(|_| rng.below(c)).collect();
        let (fl, _) = focal_loss(logits.view(), &labels, 0.0, None).map_err(|e| e.to_string())?;
        let mut ce = 0.0;
        for (row, &y) in logits.rows().into_iter().zip(&labels) {
            let lse = row.iter().map(|v| v.exp()).sum::<f64>().ln();
            ce += lse - row[y];
        }
        ce /= b as f64;
        worst = worst.max((fl - ce).abs());
    }
    ensure(worst < 1e-9, || format!("gamma 0 differs from cross-entropy by {worst:e}"))?;
    let (uniform, _) = focal_loss(Array2::zeros((1, 2)).view(), &[0], 0.0, None).map_err(|e| e.to_string())?;
    ensure((uniform - std::f64::consts::LN_2).abs() < 1e-12, || format!("uniform two-class loss {uniform}"))?;
    let grid = 10_000;
    let mut prev = f64::INFINITY;
    for i in 1..=grid {
        let pt = i as f64 / grid as f64;
        let fl = focal_term(pt, 2.0);
        let ce = -pt.ln();
        ensure(fl <= ce, || format!("FL {fl} > CE {ce} at p_t {pt}"))?;
        ensure(fl <= prev, || format!("FL not decreasing at p_t {pt}"))?;
        prev = fl;
    }
    let at09 = focal_term(0.9, 2.0);
    ensure((at09 - 0.01 * -(0.9f64).ln()).abs() < 1e-15, || format!("FL(0.9) = {at09}"))?;
    Ok(format!("gamma 0 vs cross-entropy max diff {worst:.1e}; FL <= CE on {grid} grid points"))
}

// 6 ---------------------------------------------------------------------

fn determinism() -> Outcome {
    let dirs = [tempfile::tempdir().map_err(|e| e.to_string())?, tempfile::tempdir().map_err(|e| e.to_string())?];
    let mut network = NetworkSpec::default().with_input_points(8192).map_err(|e| e.to_string())?;
    network.num_classes = 4;
    let mut timings = Vec::new();
    for dir in &dirs {
        let cfg = RunConfig {
            network: network.clone(),
            training: TrainParams {
                epochs: 30,
                checkpoint_every: 10,
                ..TrainParams::default()
            },
            task: TaskConfig::Synth {
                task: SynthTask::Period,
                per_class: 25,
                params: SynthParams::default(),
            },
            output_dir: dir.path().to_path_buf(),
            seed: 6,
            sweep_sizes: Vec::new(),
        };
        let t = Instant::now();
        train_command(&cfg, None).map_err(|e| e.to_string())?;
        timings.push(t.elapsed().as_secs_f64());
    }
    let mut files = vec![HISTORY.to_string(), FINAL_CHECKPOINT.to_string()];
    for e in [10, 20, 30] {
        files.push(periodic_checkpoint(std::path::Path::new(""), e).to_string_lossy().into_owned());
    }
    for f in &files {
        let a = fs::read(dirs[0].path().join(f)).map_err(|e| format!("{f}: {e}"))?;
        let b = fs::read(dirs[1].path().join(f)).map_err(|e| format!("{f}: {e}"))?;
        ensure(a == b, || format!("{f} differs between runs"))?;
    }
    let history = fs::read_to_string(dirs[0].path().join(HISTORY)).map_err(|e| e.to_string())?;
    ensure(history.lines().count() == 31, || "history should have 30 rows".into())?;
    Ok(format!(
        "history and {} checkpoints byte-identical; runs took {:.0}s and {:.0}s",
        files.len() - 1,
        timings[0],
        timings[1]
    ))
}

// 7 ---------------------------------------------------------------------

fn overfit(classes: usize, epochs: usize, seed: u64) -> Result<f64, String> {
    let mut rng = Rng::new(seed);
    let (clouds, labels) = separable_set(classes, 10, 256, &mut rng).map_err(|e| e.to_string())?;
    let refs: Vec<&PointCloud> = clouds.iter().collect();
    let mut model = Model::build(NetworkSpec::tiny(classes), &mut rng).map_err(|e| e.to_string())?;
    let params = TrainParams {
        epochs,
        learning_rate: 0.05,
        ..TrainParams::default()
    };
    let mut state = TrainState::new(&model, &params, rng.fork());
    train(&mut model, &refs, &labels, &params, &mut state, |_, _, _| Ok(())).map_err(|e| e.to_string())?;
    let logits = predict(&model, &refs, seed).map_err(|e| e.to_string())?;
    let hits = Model::argmax(logits.view()).iter().zip(&labels).filter(|(p, y)| p == y).count();
    Ok(hits as f64 / labels.len() as f64)
}

fn overfit_sanity() -> Outcome {
    let four = overfit(4, 100, 71)?;
    ensure(four >= 0.95, || format!("4-class train accuracy {four} after 100 epochs"))?;
    let two = overfit(2, 50, 72)?;
    ensure(two == 1.0, || format!("2-class train accuracy {two} after 50 epochs"))?;
    Ok(format!("4-class {four:.3} after 100 epochs, 2-class {two:.3} after 50 (eval mode, lr 0.05)"))
}

// 8 ---------------------------------------------------------------------

fn front_agreement() -> Outcome {
    let seed = 8;
    let loader = CloudLoader::new(1024, seed);
    let ds = synth_generate(SynthTask::Front, 100, &SynthParams::default(), &loader, &mut Rng::new(seed))
        .map_err(|e| e.to_string())?;
    let mut spec = NetworkSpec::default().with_input_points(1024).map_err(|e| e.to_string())?;
    spec.num_classes = 2;
    let params = TrainParams {
        epochs: 30,
        ..TrainParams::default()
    };
    let (model, _) = pointpyramid::eval::fit(&spec, &params, &ds, seed, |_, _, _| Ok(())).map_err(|e| e.to_string())?;
    let report = evaluate(&model, &ds, &ds.test, "test", seed).map_err(|e| e.to_string())?;
    let a = report.agreement.ok_or("no agreement summary")?;
    let precision = a.precision.unwrap_or(0.0);
    ensure(a.coverage >= 0.8 && precision >= 0.95, || {
        format!("coverage {} precision {precision} over {} tablets", a.coverage, a.tablets)
    })?;
    Ok(format!(
        "{} held-out tablets: coverage {:.3}, precision {precision:.3}; plain accuracy {:.3}",
        a.tablets, a.coverage, report.accuracy
    ))
}

// 9 ---------------------------------------------------------------------

fn bits(pc: &PointCloud) -> Vec<u64> {
    pc.positions().iter().chain(pc.normals()).flatten().map(|v| v.to_bits()).collect()
}

fn rotation_consistency() -> Outcome {
    let mut rng = Rng::new(9);
    for case in 0..50 {
        let pc = common::blob(1 + rng.below(500), &mut rng);
        let twice = pc.rotated_x_180().rotated_x_180();
        ensure(bits(&twice) == bits(&pc), || format!("cloud {case} not restored by two flips"))?;
    }
    let loader = CloudLoader::new(256, 9);
    let ds = synth_generate(SynthTask::Front, 12, &SynthParams::default(), &loader, &mut Rng::new(9))
        .map_err(|e| e.to_string())?;
    let all: Vec<usize> = (0..ds.instances.len()).collect();
    let pairs = sibling_pairs(&ds, &all);
    ensure(pairs.len() == 12, || format!("{} sibling pairs", pairs.len()))?;
    for (f, b) in pairs {
        let (front, back) = (&ds.instances[f].cloud, &ds.instances[b].cloud);
        ensure(bits(&front.rotated_x_180()) == bits(back), || format!("pair {f}/{b} is not a flip"))?;
        ensure(bits(&back.rotated_x_180()) == bits(front), || format!("pair {f}/{b} does not flip back"))?;
    }
    Ok("50 random clouds restored by two flips; 12 sibling pairs bit-identical under flip".into())
}

// 10 --------------------------------------------------------------------

fn f1_direct(preds: &[usize], truth: &[usize], classes: usize) -> f64 {
    let mut total = 0.0;
    for c in 0..classes {
        let mut tp = 0.0;
        let mut fp = 0.0;
        let mut fneg = 0.0;
        for i in 0..preds.len() {
            match (preds[i] == c, truth[i] == c) {
                (true, true) => tp += 1.0,
                (true, false) => fp += 1.0,
                (false, true) => fneg += 1.0,
                _ => {}
            }
        }
        let p = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let r = if tp + fneg > 0.0 { tp / (tp + fneg) } else { 0.0 };
        total += if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    }
    total / classes as f64
}

fn ap_direct(scores: &[f64], truth: &[bool]) -> f64 {
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let positives = truth.iter().filter(|&&t| t).count() as f64;
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    for t in thresholds {
        let selected: Vec<usize> = (0..scores.len()).filter(|&i| scores[i] >= t).collect();
        let tp = selected.iter().filter(|&&i| truth[i]).count() as f64;
        let recall = tp / positives;
        ap += (recall - prev_recall) * tp / selected.len() as f64;
        prev_recall = recall;
    }
    ap
}

fn metric_oracles() -> Outcome {
    let f = f1_macro(&[0, 1, 1, 1], &[0, 0, 1, 1], 2).map_err(|e| e.to_string())?;
    ensure((f - 0.733_333_333_333_333_3).abs() < 1e-9, || format!("hand macro-F1 {f}"))?;
    let ap = average_precision(&[0.9, 0.8, 0.7], &[true, false, true]).map_err(|e| e.to_string())?;
    ensure((ap - 0.833_333_333_333_333_3).abs() < 1e-9, || format!("hand AP {ap}"))?;
    let tied = average_precision(&[0.4; 7], &[true, false, false, true, false, true, false]).map_err(|e| e.to_string())?;
    ensure((tied - 3.0 / 7.0).abs() < 1e-12, || format!("all-tied AP {tied}"))?;

    let mut rng = Rng::new(10);
    let mut worst: f64 = 0.0;
    for case in 0..1000 {
        let n = 1 + rng.below(60);
        let classes = 2 + rng.below(4);
        let truth: Vec<usize> = (0..n).map(|_| rng.below(classes)).collect();
        let preds: Vec<usize> = (0..n).map(|_| rng.below(classes)).collect();
        let a = f1_macro(&preds, &truth, classes).map_err(|e| e.to_string())?;
        worst = worst.max((a - f1_direct(&preds, &truth, classes)).abs());

        let labels: Vec<bool> = (0..n).map(|_| rng.bernoulli(0.4)).collect();
        if !labels.contains(&true) {
            continue;
        }
        let scores: Vec<f64> = (0..n)
            .map(|_| if case % 2 == 0 { rng.below(5) as f64 / 4.0 } else { rng.uniform() })
            .collect();
        let a = average_precision(&scores, &labels).map_err(|e| e.to_string())?;
        worst = worst.max((a - ap_direct(&scores, &labels)).abs());
    }
    ensure(worst < 1e-9, || format!("max deviation from direct evaluation {worst:e}"))?;
    Ok(format!("hand cases exact; 1000 random vectors within {worst:.1e} of direct evaluation"))
}

// 11 --------------------------------------------------------------------

fn ablation_direction() -> Outcome {
    let seed = 11;
    let n = 1024;
    let loader = CloudLoader::new(n, seed);
    let ds = synth_generate(SynthTask::Period, 40, &SynthParams::default(), &loader, &mut Rng::new(seed))
        .map_err(|e| e.to_string())?;
    let spec = NetworkSpec::default().with_input_points(n).map_err(|e| e.to_string())?;
    let params = TrainParams {
        epochs: 40,
        ..TrainParams::default()
    };
    let rows = ablation_grid(&spec, &params, &ds, seed).map_err(|e| e.to_string())?;
    ensure(rows.len() == 6, || format!("{} rows", rows.len()))?;
    let dil = rows.iter().find(|r| r.report.variant == "dilation").ok_or("no dilation row")?;
    ensure(!dil.network.use_dilation, || "dilation row still dilated".into())?;
    let none = rows.iter().find(|r| r.report.variant == Ablation::None.name()).ok_or("no baseline row")?;
    let best_other = rows
        .iter()
        .filter(|r| r.report.variant != Ablation::None.name())
        .map(|r| r.report.macro_f1)
        .fold(0.0, f64::max);
    let table: Vec<String> = rows.iter().map(|r| format!("{} {:.3}", r.report.variant, r.report.macro_f1)).collect();
    ensure(none.report.macro_f1 >= best_other - 0.05, || format!("baseline below other rows: {}", table.join(", ")))?;
    Ok(format!("macro-F1 {}", table.join(", ")))
}

// 12 --------------------------------------------------------------------

fn checkpoint_round_trip() -> Outcome {
    let mut rng = Rng::new(12);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    for case in 0..20 {
        let classes = 2 + rng.below(4);
        let omit = Ablation::ALL[rng.below(Ablation::ALL.len())];
        let spec = omit.apply(&NetworkSpec::tiny(classes));
        let mut model = Model::build(spec, &mut rng).map_err(|e| e.to_string())?;
        for t in model.buffers_mut() {
            for v in t.iter_mut() {
                *v = rng.uniform_range(0.5, 2.0);
            }
        }
        let params = TrainParams::default();
        let mut state = TrainState::new(&model, &params, rng.fork());
        state.epoch = rng.below(300);
        for v in state.optimizer.velocity.iter_mut().flatten() {
            *v = rng.normal();
        }
        let path = dir.path().join(format!("m{case}.ppck"));
        checkpoint::save(&path, &model, Some(&state)).map_err(|e| e.to_string())?;
        let back = checkpoint::load(&path).map_err(|e| e.to_string())?;
        ensure(back.model == model && back.state.as_ref() == Some(&state), || format!("model {case} state differs"))?;
        let cloud = common::blob(100, &mut rng);
        for mode in [Mode::Eval, Mode::Train] {
            let a = model.forward(&cloud, mode, &mut Rng::new(case)).map_err(|e| e.to_string())?;
            let b = back.model.forward(&cloud, mode, &mut Rng::new(case)).map_err(|e| e.to_string())?;
            let same = a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits());
            ensure(same, || format!("model {case} ({}) {mode:?} outputs differ", omit.name()))?;
        }
        let again = checkpoint::to_bytes(&back.model, back.state.as_ref());
        ensure(again == fs::read(&path).map_err(|e| e.to_string())?, || format!("model {case} bytes differ"))?;
    }
    Ok("20 random models: parameters, buffers, optimizer and rng state, and forward outputs bit-exact".into())
}

fn main() {
    // Strict single-threaded execution, as the determinism criterion requires.
    rayon::ThreadPoolBuilder::new().num_threads(1).build_global().expect("thread pool");
    let criteria: [(usize, &str, fn() -> Outcome); 12] = [
        (1, "gradient suite", gradient_suite),
        (2, "k-NN oracle equivalence", knn_oracle),
        (3, "dilation identity", dilation_identity),
        (4, "architecture conformance", architecture),
        (5, "focal loss", focal_properties),
        (6, "training determinism", determinism),
        (7, "overfit sanity", overfit_sanity),
        (8, "synthetic front agreement", front_agreement),
        (9, "rotation consistency", rotation_consistency),
        (10, "metric oracles", metric_oracles),
        (11, "ablation direction", ablation_direction),
        (12, "checkpoint round trip", checkpoint_round_trip),
    ];
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name, run) in criteria {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {id:>2} PASS  {name} [{secs:.1}s]: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {id:>2} FAIL  {name} [{secs:.1}s]: {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
