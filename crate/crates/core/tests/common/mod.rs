//! Central finite-difference checks shared by the gradient and acceptance
//! suites. Each `*_case` builds one random configuration and returns the
//! worst relative error between analytic and numeric gradients.

#![allow(dead_code)]

use ndarray::{Array2, ArrayView2};
use pointpyramid::neighbors::bruteforce::knn_bruteforce;
use pointpyramid::neighbors::{knn_feature, NeighborIndex, Space, DEFAULT_PAIRWISE_BUDGET};
use pointpyramid::ops::{Head, Learnable, Mode, PairConv, PairInput, PointConv, Variant};
use pointpyramid::train::focal_loss;
use pointpyramid::{Model, NetworkSpec, PointCloud, Rng};

pub const H: f64 = 1e-6;
/// Gradients smaller than this are compared on absolute error.
pub const FLOOR: f64 = 1e-3;

#[derive(Clone, Debug)]
pub struct Worst {
    pub rel: f64,
    pub at: String,
}

impl Worst {
    pub fn new() -> Self {
        Self { rel: 0.0, at: String::new() }
    }

    fn record(&mut self, analytic: f64, numeric: f64, at: impl FnOnce() -> String) {
        let e = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR);
        if e > self.rel || e.is_nan() {
            self.rel = if e.is_nan() { f64::INFINITY } else { e };
            self.at = format!("{} (analytic {analytic:.6e}, numeric {numeric:.6e})", at());
        }
    }

    pub fn merge(&mut self, other: Worst) {
        if other.rel > self.rel {
            *self = other;
        }
    }
}

pub fn random_matrix(rows: usize, cols: usize, rng: &mut Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.normal())
}

/// Perturbs a sample of entries of every learnable tensor.
pub fn check_params<M: Learnable + Clone>(model: &M, grads: &M, loss: impl Fn(&M) -> f64, per_tensor: usize, rng: &mut Rng) -> Worst {
    let sizes: Vec<(String, usize)> = model.tensors().iter().map(|(n, t)| (n.clone(), t.len())).collect();
    let g_all = grads.tensors();
    let mut worst = Worst::new();
    for (t, (name, len)) in sizes.iter().enumerate() {
        let picks: Vec<usize> = if *len <= per_tensor {
            (0..*len).collect()
        } else {
            (0..per_tensor).map(|_| rng.below(*len)).collect()
        };
        for idx in picks {
            let mut plus = model.clone();
            plus.tensors_mut()[t][idx] += H;
            let mut minus = model.clone();
            minus.tensors_mut()[t][idx] -= H;
            let numeric = (loss(&plus) - loss(&minus)) / (2.0 * H);
            worst.record(g_all[t].1[idx], numeric, || format!("{name}[{idx}]"));
        }
    }
    worst
}

pub fn check_input(x: &Array2<f64>, grad: ArrayView2<'_, f64>, loss: impl Fn(&Array2<f64>) -> f64) -> Worst {
    let mut worst = Worst::new();
    for r in 0..x.nrows() {
        for c in 0..x.ncols() {
            let mut p = x.clone();
            p[[r, c]] += H;
            let mut m = x.clone();
            m[[r, c]] -= H;
            let numeric = (loss(&p) - loss(&m)) / (2.0 * H);
            worst.record(grad[[r, c]], numeric, || format!("input[{r},{c}]"));
        }
    }
    worst
}

fn randomize_norm(conv_norm: Option<&mut pointpyramid::ops::BatchNorm>, rng: &mut Rng) {
    if let Some(bn) = conv_norm {
        // Negative scales exercise the min-side neighbor selection.
        bn.scale.mapv_inplace(|_| rng.uniform_range(-1.5, 1.5));
        bn.shift.mapv_inplace(|_| rng.uniform_range(-0.5, 0.5));
        bn.running_mean.mapv_inplace(|_| rng.uniform_range(-0.5, 0.5));
        bn.running_var.mapv_inplace(|_| rng.uniform_range(0.5, 2.0));
    }
}

/// A neighbor convolution on a random batch. With `feature_space` the
/// neighbors come from the input features, as in the top layer.
pub fn pair_conv_case(variant: Variant, case: usize, feature_space: bool, rng: &mut Rng) -> Worst {
    let batch = 1 + case % 3;
    let mode = if case % 7 == 6 { Mode::Eval } else { Mode::Train };
    let in_f = 1 + rng.below(4);
    let out_f = 1 + rng.below(5);
    let k = 2 + rng.below(4);
    let dilation = if feature_space { 1 } else { 1 + case % 2 };
    let n = k * dilation + 3 + rng.below(6);
    let mut conv = PairConv::new(variant, in_f, out_f, rng);
    randomize_norm(conv.norm.as_mut(), rng);
    if case % 11 == 10 {
        conv.norm = None;
    }
    let samples: Vec<(Array2<f64>, Array2<f64>, NeighborIndex)> = (0..batch)
        .map(|_| {
            let pos = random_matrix(n, 3, rng);
            let feat = random_matrix(n, in_f, rng);
            let nbrs = if feature_space {
                knn_feature(feat.view(), k, DEFAULT_PAIRWISE_BUDGET).unwrap()
            } else {
                knn_bruteforce(pos.view(), k, dilation, Space::Spatial).unwrap()
            };
            (pos, feat, nbrs)
        })
        .collect();
    let weights: Vec<Array2<f64>> = (0..batch).map(|_| random_matrix(n, out_f, rng)).collect();
    // Neighbor tables stay fixed under perturbation, as in the network where
    // they are computed outside the differentiated path.
    let loss_of = |c: &PairConv, feats: &[&Array2<f64>]| -> f64 {
        let inputs: Vec<PairInput<'_>> = samples
            .iter()
            .zip(feats)
            .map(|((p, _, nb), x)| PairInput {
                features: x.view(),
                positions: Some(p.view()),
                neighbors: nb,
            })
            .collect();
        let (out, _) = c.forward(&inputs, mode).unwrap();
        out.iter().zip(&weights).map(|(o, w)| (o * w).sum()).sum()
    };
    let base: Vec<&Array2<f64>> = samples.iter().map(|s| &s.1).collect();
    let inputs: Vec<PairInput<'_>> = samples
        .iter()
        .map(|(p, x, nb)| PairInput {
            features: x.view(),
            positions: Some(p.view()),
            neighbors: nb,
        })
        .collect();
    let (_, tape) = conv.forward(&inputs, mode).unwrap();
    let gviews: Vec<ArrayView2<'_, f64>> = weights.iter().map(|w| w.view()).collect();
    let (grads, g_inputs) = conv.backward(&inputs, &tape, &gviews);

    let mut worst = check_params(&conv, &grads, |c| loss_of(c, &base), 12, rng);
    for s in 0..batch {
        worst.merge(check_input(&samples[s].1, g_inputs[s].view(), |x| {
            let mut feats = base.clone();
            feats[s] = x;
            loss_of(&conv, &feats)
        }));
    }
    worst
}

/// Pointwise (fusion) convolution with normalization, or affine only.
pub fn point_conv_case(case: usize, rng: &mut Rng) -> Worst {
    let batch = 1 + case % 3;
    let mode = if case % 5 == 4 { Mode::Eval } else { Mode::Train };
    let (i, o, n) = (1 + rng.below(5), 1 + rng.below(5), 2 + rng.below(8));
    let mut conv = if case % 6 == 5 {
        PointConv::linear(i, o, rng)
    } else {
        PointConv::new(i, o, rng)
    };
    randomize_norm(conv.norm.as_mut(), rng);
    let xs: Vec<Array2<f64>> = (0..batch).map(|_| random_matrix(n, i, rng)).collect();
    let ws: Vec<Array2<f64>> = (0..batch).map(|_| random_matrix(n, o, rng)).collect();
    let loss_of = |c: &PointConv, xs: &[&Array2<f64>]| -> f64 {
        let views: Vec<_> = xs.iter().map(|x| x.view()).collect();
        let (out, _) = c.forward(&views, mode).unwrap();
        out.iter().zip(&ws).map(|(o, w)| (o * w).sum()).sum()
    };
    let base: Vec<&Array2<f64>> = xs.iter().collect();
    let views: Vec<_> = xs.iter().map(|x| x.view()).collect();
    let (_, tape) = conv.forward(&views, mode).unwrap();
    let gviews: Vec<_> = ws.iter().map(|w| w.view()).collect();
    let (grads, g_x) = conv.backward(&views, &tape, &gviews);
    let mut worst = check_params(&conv, &grads, |c| loss_of(c, &base), 20, rng);
    for s in 0..batch {
        worst.merge(check_input(&xs[s], g_x[s].view(), |x| {
            let mut f = base.clone();
            f[s] = x;
            loss_of(&conv, &f)
        }));
    }
    worst
}

/// Classifier head (with or without dropout) under focal loss.
pub fn head_case(case: usize, rng: &mut Rng) -> Worst {
    let batch = 2 + rng.below(4);
    let classes = 2 + rng.below(3);
    let input = 1 + rng.below(6);
    let hidden: Vec<usize> = (0..case % 3).map(|_| 2 + rng.below(5)).collect();
    let dropout = if case % 2 == 0 { 0.0 } else { 0.5 };
    let mut head = Head::new(input, &hidden, classes, dropout, rng);
    for h in &mut head.hidden {
        randomize_norm(h.norm.as_mut(), rng);
    }
    let x = random_matrix(batch, input, rng);
    let labels: Vec<usize> = (0..batch).map(|_| rng.below(classes)).collect();
    let rngs: Vec<Rng> = (0..batch).map(|_| rng.fork()).collect();
    let loss_of = |h: &Head, x: &Array2<f64>| -> f64 {
        // Cloned generators keep the dropout masks fixed across evaluations.
        let mut r = rngs.clone();
        let (logits, _) = h.forward(x.view(), Mode::Train, &mut r).unwrap();
        focal_loss(logits.view(), &labels, 2.0, None).unwrap().0
    };
    let mut r = rngs.clone();
    let (logits, tape) = head.forward(x.view(), Mode::Train, &mut r).unwrap();
    let (_, g_logits) = focal_loss(logits.view(), &labels, 2.0, None).unwrap();
    let (grads, g_x) = head.backward(&tape, g_logits.view());
    let mut worst = check_params(&head, &grads, |h| loss_of(h, &x), 15, rng);
    worst.merge(check_input(&x, g_x.view(), |x| loss_of(&head, x)));
    worst
}

/// Focal loss gradient with respect to the logits.
pub fn focal_case(case: usize, rng: &mut Rng) -> Worst {
    let batch = 1 + rng.below(6);
    let classes = 2 + rng.below(4);
    let scale = [0.5, 1.0, 3.0, 6.0][case % 4];
    let logits = Array2::from_shape_simple_fn((batch, classes), || scale * rng.normal());
    let labels: Vec<usize> = (0..batch).map(|_| rng.below(classes)).collect();
    let gamma = [0.0, 0.5, 1.0, 2.0, 3.5][case % 5];
    let alpha: Option<Vec<f64>> = (case % 3 == 2).then(|| (0..classes).map(|_| rng.uniform_range(0.2, 2.0)).collect());
    let (_, grad) = focal_loss(logits.view(), &labels, gamma, alpha.as_deref()).unwrap();
    check_input(&logits, grad.view(), |l| focal_loss(l.view(), &labels, gamma, alpha.as_deref()).unwrap().0)
}

pub fn blob(n: usize, rng: &mut Rng) -> PointCloud {
    let pos: Vec<[f64; 3]> = (0..n).map(|_| [rng.normal(), rng.normal() * 0.7, rng.normal() * 0.4]).collect();
    let nor: Vec<[f64; 3]> = pos
        .iter()
        .map(|p| {
            let l = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt().max(1e-9);
            [p[0] / l, p[1] / l, p[2] / l]
        })
        .collect();
    PointCloud::new(pos, nor).unwrap()
}

/// Every parameter of the tiny network through focal loss.
pub fn whole_network(seed: u64) -> Worst {
    let mut rng = Rng::new(seed);
    let model = Model::build(NetworkSpec::tiny(3), &mut rng).unwrap();
    let clouds: Vec<PointCloud> = (0..3).map(|_| blob(64, &mut rng)).collect();
    let refs: Vec<&PointCloud> = clouds.iter().collect();
    let labels = vec![0, 2, 1];
    let rngs: Vec<Rng> = (0..3).map(|_| rng.fork()).collect();
    let loss_of = |m: &Model| -> f64 {
        let mut r = rngs.clone();
        let (logits, _) = m.forward_batch(&refs, Mode::Train, &mut r).unwrap();
        focal_loss(logits.view(), &labels, 2.0, None).unwrap().0
    };
    let mut r = rngs.clone();
    let (logits, tape) = model.forward_batch(&refs, Mode::Train, &mut r).unwrap();
    let (_, g) = focal_loss(logits.view(), &labels, 2.0, None).unwrap();
    let grads = model.backward(&tape, g.view());
    check_params(&model, &grads, loss_of, 6, &mut rng)
}

