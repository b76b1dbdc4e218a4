use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::norm::reduce_mean;
use super::{fan_in_uniform, fan_in_uniform_vec, slice1, slice1_mut, slice2, slice2_mut};
use super::{Activation, BatchNorm, Learnable, Mode, NormStats};
use crate::error::{Error, Result};
use crate::neighbors::NeighborIndex;
use crate::rng::Rng;

/// How the per-neighbor pair input is assembled from point `i` and neighbor `j`.
///
/// | variant      | pair input                      |
/// |--------------|---------------------------------|
/// | `Edge`       | `[x_i, x_j - x_i]`              |
/// | `LocalEdge`  | `[x_j - x_i]`                   |
/// | `Vertex`     | `[x_i, x_j]`                    |
/// | `EdgeVertex` | `[p_i, p_j - p_i, x_i, x_j]`    |
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    Edge,
    LocalEdge,
    Vertex,
    EdgeVertex,
}

impl Variant {
    pub fn pair_width(self, features: usize) -> usize {
        match self {
            Variant::Edge | Variant::Vertex => 2 * features,
            Variant::LocalEdge => features,
            Variant::EdgeVertex => 6 + 2 * features,
        }
    }

    pub fn needs_positions(self) -> bool {
        self == Variant::EdgeVertex
    }
}

/// One sample's input to a [`PairConv`].
#[derive(Clone, Copy, Debug)]
pub struct PairInput<'a> {
    pub features: ArrayView2<'a, f64>,
    /// `N x 3`; required by `EdgeVertex`, ignored otherwise.
    pub positions: Option<ArrayView2<'a, f64>>,
    pub neighbors: &'a NeighborIndex,
}

/// Neighbor convolution: a shared affine kernel on every (point, neighbor)
/// pair, optional normalization, activation, then a per-feature max over the
/// neighbors of each point.
///
/// The kernel is linear in the pair input, so it splits into a per-point
/// "center" projection and a per-point "neighbor" projection; a pair's
/// pre-activation is `center[i] + neighbor[j]`. Nothing `N*k`-sized is stored.
#[derive(Clone, Debug, PartialEq)]
pub struct PairConv {
    pub variant: Variant,
    pub in_features: usize,
    /// `pair_width x out_features`, row blocks ordered as in the pair input.
    pub kernel: Array2<f64>,
    pub bias: Array1<f64>,
    pub norm: Option<BatchNorm>,
    pub activation: Activation,
}

pub struct PairConvTape {
    center: Vec<Array2<f64>>,
    neighbor: Vec<Array2<f64>>,
    /// Sum of neighbor projections over each point's neighbors.
    neighbor_sum: Vec<Array2<f64>>,
    /// Winning neighbor rank per (point, feature), row-major.
    argmax: Vec<Vec<u16>>,
    /// Center and neighbor parts of the batch mean, in batch mode.
    split_mean: Option<(Vec<f64>, Vec<f64>)>,
    pub stats: Option<NormStats>,
}

impl PairConv {
    pub fn new(variant: Variant, in_features: usize, out_features: usize, rng: &mut Rng) -> Self {
        let width = variant.pair_width(in_features);
        Self {
            variant,
            in_features,
            kernel: fan_in_uniform(width, out_features, width, rng),
            bias: fan_in_uniform_vec(out_features, width, rng),
            norm: Some(BatchNorm::new(out_features)),
            activation: Activation::Leaky(super::LEAKY_SLOPE),
        }
    }

    pub fn out_features(&self) -> usize {
        self.kernel.ncols()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            variant: self.variant,
            in_features: self.in_features,
            kernel: Array2::zeros(self.kernel.raw_dim()),
            bias: Array1::zeros(self.bias.len()),
            norm: self.norm.as_ref().map(BatchNorm::zeros_like),
            activation: self.activation,
        }
    }

    fn block(&self, rows: std::ops::Range<usize>) -> ArrayView2<'_, f64> {
        self.kernel.slice(s![rows, ..])
    }

    fn validate(&self, input: &PairInput<'_>) -> Result<()> {
        let n = input.features.nrows();
        if input.features.ncols() != self.in_features {
            return Err(Error::Shape(format!(
                "{:?} expects {} input features, got {}",
                self.variant,
                self.in_features,
                input.features.ncols()
            )));
        }
        if input.neighbors.len() != n {
            return Err(Error::Shape(format!(
                "neighbor table has {} rows for {n} points",
                input.neighbors.len()
            )));
        }
        if input.neighbors.k() > u16::MAX as usize {
            return Err(Error::Shape("too many neighbors".into()));
        }
        if self.kernel.nrows() != self.variant.pair_width(self.in_features) {
            return Err(Error::Shape("kernel rows do not match the variant".into()));
        }
        match (self.variant.needs_positions(), input.positions) {
            (true, None) => return Err(Error::Shape("EdgeVertex requires positions".into())),
            (true, Some(p)) if p.dim() != (n, 3) => {
                return Err(Error::Shape(format!("positions must be {n} x 3, got {:?}", p.dim())))
            }
            _ => {}
        }
        if input.features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                stage: format!("{:?} input features", self.variant),
            });
        }
        Ok(())
    }

    /// Per-point center and neighbor projections; bias folded into center.
    fn project(&self, input: &PairInput<'_>) -> (Array2<f64>, Array2<f64>) {
        let x = input.features;
        let f = self.in_features;
        let (mut center, neighbor) = match self.variant {
            Variant::Edge => {
                let ka = self.block(0..f);
                let kb = self.block(f..2 * f);
                (x.dot(&(&ka - &kb)), x.dot(&kb))
            }
            Variant::LocalEdge => {
                let nb = x.dot(&self.kernel);
                (-&nb, nb)
            }
            Variant::Vertex => (x.dot(&self.block(0..f)), x.dot(&self.block(f..2 * f))),
            Variant::EdgeVertex => {
                let p = input.positions.expect("validated");
                let kp = self.block(0..3);
                let kd = self.block(3..6);
                let kx = self.block(6..6 + f);
                let kn = self.block(6 + f..6 + 2 * f);
                (p.dot(&(&kp - &kd)) + x.dot(&kx), p.dot(&kd) + x.dot(&kn))
            }
        };
        center += &self.bias;
        (center, neighbor)
    }

    /// Accumulates kernel gradients into `grad.kernel` and returns the
    /// gradient with respect to the input features.
    fn project_backward(
        &self,
        input: &PairInput<'_>,
        g_center: &Array2<f64>,
        g_neighbor: &Array2<f64>,
        grad: &mut Array2<f64>,
    ) -> Array2<f64> {
        let x = input.features;
        let f = self.in_features;
        let xt = x.t();
        match self.variant {
            Variant::Edge => {
                let ka = self.block(0..f);
                let kb = self.block(f..2 * f);
                let g_diff = g_neighbor - g_center;
                grad.slice_mut(s![0..f, ..]).scaled_add(1.0, &xt.dot(g_center));
                grad.slice_mut(s![f..2 * f, ..]).scaled_add(1.0, &xt.dot(&g_diff));
                g_center.dot(&(&ka - &kb).t()) + g_neighbor.dot(&kb.t())
            }
            Variant::LocalEdge => {
                let g_diff = g_neighbor - g_center;
                grad.scaled_add(1.0, &xt.dot(&g_diff));
                g_diff.dot(&self.kernel.t())
            }
            Variant::Vertex => {
                grad.slice_mut(s![0..f, ..]).scaled_add(1.0, &xt.dot(g_center));
                grad.slice_mut(s![f..2 * f, ..]).scaled_add(1.0, &xt.dot(g_neighbor));
                g_center.dot(&self.block(0..f).t()) + g_neighbor.dot(&self.block(f..2 * f).t())
            }
            Variant::EdgeVertex => {
                let p = input.positions.expect("validated");
                let pt = p.t();
                let g_diff = g_neighbor - g_center;
                grad.slice_mut(s![0..3, ..]).scaled_add(1.0, &pt.dot(g_center));
                grad.slice_mut(s![3..6, ..]).scaled_add(1.0, &pt.dot(&g_diff));
                grad.slice_mut(s![6..6 + f, ..]).scaled_add(1.0, &xt.dot(g_center));
                grad.slice_mut(s![6 + f..6 + 2 * f, ..]).scaled_add(1.0, &xt.dot(g_neighbor));
                g_center.dot(&self.block(6..6 + f).t()) + g_neighbor.dot(&self.block(6 + f..6 + 2 * f).t())
            }
        }
    }

    /// Forward over a batch; normalization statistics span every pair of
    /// every sample in train mode.
    ///
    /// The activation is monotone and the normalization affine per feature,
    /// so the maximum over neighbors is attained at the neighbor with the
    /// largest (or, for a negative scale, smallest) neighbor projection.
    /// Pair moments follow from per-point neighbor sums, so a single pass
    /// over the `N*k` pairs suffices.
    pub fn forward(&self, inputs: &[PairInput<'_>], mode: Mode) -> Result<(Vec<Array2<f64>>, PairConvTape)> {
        for input in inputs {
            self.validate(input)?;
        }
        let width = self.out_features();
        let gathered: Vec<Gathered> = inputs
            .par_iter()
            .map(|inp| {
                let (center, neighbor) = self.project(inp);
                gather(center, neighbor, inp.neighbors)
            })
            .collect();
        let count: usize = inputs.iter().map(|i| i.neighbors.len() * i.neighbors.k()).sum();
        let mut split_mean = None;
        let stats = self.norm.as_ref().map(|bn| {
            bn.select(mode, count, || {
                let (mc, mn, var) = pair_moments(&gathered, inputs, count);
                let mean = mc.iter().zip(&mn).map(|(a, b)| a + b).collect();
                split_mean = Some((mc, mn));
                (mean, var)
            })
        });
        let (a, c) = match (&self.norm, &stats) {
            (Some(bn), Some(st)) => bn.coefficients(st),
            _ => (vec![1.0; width], vec![0.0; width]),
        };
        let act = self.activation;

        let results: Vec<(Array2<f64>, Vec<u16>)> = gathered
            .par_iter()
            .map(|g| {
                let n = g.center.nrows();
                let mut out = Array2::zeros((n, width));
                let mut arg = vec![0u16; n * width];
                let cs = slice2(&g.center);
                let hi = slice2(&g.max);
                let lo = slice2(&g.min);
                let os = slice2_mut(&mut out);
                for idx in 0..n * width {
                    let f = idx % width;
                    let (z, rank) = if a[f] >= 0.0 {
                        (cs[idx] + hi[idx], g.max_rank[idx])
                    } else {
                        (cs[idx] + lo[idx], g.min_rank[idx])
                    };
                    os[idx] = act.apply(a[f] * z + c[f]);
                    arg[idx] = rank;
                }
                (out, arg)
            })
            .collect();

        let mut outputs = Vec::with_capacity(results.len());
        let mut argmax = Vec::with_capacity(results.len());
        for (out, arg) in results {
            if out.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    stage: format!("{:?} convolution output", self.variant),
                });
            }
            outputs.push(out);
            argmax.push(arg);
        }
        let mut center = Vec::with_capacity(gathered.len());
        let mut neighbor = Vec::with_capacity(gathered.len());
        let mut neighbor_sum = Vec::with_capacity(gathered.len());
        for g in gathered {
            center.push(g.center);
            neighbor.push(g.neighbor);
            neighbor_sum.push(g.sum);
        }
        Ok((
            outputs,
            PairConvTape {
                center,
                neighbor,
                neighbor_sum,
                argmax,
                split_mean,
                stats,
            },
        ))
    }

    /// Returns parameter gradients (as a `PairConv`) and per-sample gradients
    /// with respect to the input features.
    pub fn backward(
        &self,
        inputs: &[PairInput<'_>],
        tape: &PairConvTape,
        grad_out: &[ArrayView2<'_, f64>],
    ) -> (PairConv, Vec<Array2<f64>>) {
        let width = self.out_features();
        let act = self.activation;
        let stats = tape.stats.as_ref();
        let (a, c) = match (&self.norm, stats) {
            (Some(bn), Some(st)) => bn.coefficients(st),
            _ => (vec![1.0; width], vec![0.0; width]),
        };
        let (mean, inv_std) = match stats {
            Some(st) => (st.mean.clone(), st.inv_std.clone()),
            None => (vec![0.0; width], vec![1.0; width]),
        };

        // Gradient at the winning pair of every (point, feature), and partial
        // sums for the normalization's shift and scale.
        let selected: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = (0..inputs.len())
            .into_par_iter()
            .map(|s| {
                let center = slice2(&tape.center[s]);
                let neighbor = slice2(&tape.neighbor[s]);
                let nbrs = inputs[s].neighbors;
                let arg = &tape.argmax[s];
                let g = grad_out[s];
                let n = nbrs.len();
                let mut gy = vec![0.0; n * width];
                let mut g_shift = vec![0.0; width];
                let mut g_scale = vec![0.0; width];
                for i in 0..n {
                    let row = nbrs.row(i);
                    let grow = g.row(i);
                    for f in 0..width {
                        let j = row[arg[i * width + f] as usize] as usize;
                        let z = center[i * width + f] + neighbor[j * width + f];
                        let y = a[f] * z + c[f];
                        let v = grow[f] * act.derivative(y);
                        gy[i * width + f] = v;
                        g_shift[f] += v;
                        g_scale[f] += v * (z - mean[f]) * inv_std[f];
                    }
                }
                (gy, g_shift, g_scale)
            })
            .collect();
        let mut g_shift = vec![0.0; width];
        let mut g_scale = vec![0.0; width];
        for (_, sh, sc) in &selected {
            for f in 0..width {
                g_shift[f] += sh[f];
                g_scale[f] += sc[f];
            }
        }

        let batch_norm = stats.is_some_and(|st| st.from_batch);
        let count = stats.map_or(1, |st| st.count.max(1)) as f64;
        let m_shift: Vec<f64> = g_shift.iter().map(|v| v / count).collect();
        let m_scale: Vec<f64> = g_scale.iter().map(|v| v / count).collect();

        let per_sample: Vec<(Array2<f64>, Array1<f64>, Array2<f64>)> = (0..inputs.len())
            .into_par_iter()
            .map(|s| {
                let nbrs = inputs[s].neighbors;
                let arg = &tape.argmax[s];
                let gy = &selected[s].0;
                let n = nbrs.len();
                let k = nbrs.k() as f64;
                let mut g_center = Array2::<f64>::zeros((n, width));
                let mut g_neighbor = Array2::<f64>::zeros((n, width));
                {
                    let gc = slice2_mut(&mut g_center);
                    let gn = slice2_mut(&mut g_neighbor);
                    for i in 0..n {
                        let row = nbrs.row(i);
                        for f in 0..width {
                            let idx = i * width + f;
                            let j = row[arg[idx] as usize] as usize;
                            let g = a[f] * gy[idx];
                            gc[idx] += g;
                            gn[j * width + f] += g;
                        }
                    }
                    if batch_norm {
                        // Every pair also contributes through the batch mean
                        // and variance: with centered projections u_i, v_j,
                        //   sum_j dz_ij = -a (k m_shift + s (k u_i + sum_j v_j))
                        //   sum_i dz_ij = -a (cnt_j m_shift + s (sum_i u_i + cnt_j v_j))
                        // where s = inv_std * m_scale.
                        let (mc, mn) = tape.split_mean.as_ref().expect("batch statistics keep split means");
                        let center = slice2(&tape.center[s]);
                        let neighbor = slice2(&tape.neighbor[s]);
                        let nsum = slice2(&tape.neighbor_sum[s]);
                        let mut cnt = vec![0u32; n];
                        let mut scatter = vec![0.0; n * width];
                        for i in 0..n {
                            let crow = &center[i * width..(i + 1) * width];
                            for &j in nbrs.row(i) {
                                let j = j as usize;
                                cnt[j] += 1;
                                for ((t, &cv), &m) in scatter[j * width..(j + 1) * width].iter_mut().zip(crow).zip(mc) {
                                    *t += cv - m;
                                }
                            }
                        }
                        for i in 0..n {
                            for f in 0..width {
                                let idx = i * width + f;
                                let sc = inv_std[f] * m_scale[f];
                                let u = center[idx] - mc[f];
                                let vsum = nsum[idx] - k * mn[f];
                                gc[idx] -= a[f] * (k * m_shift[f] + sc * (k * u + vsum));
                                let cj = cnt[i] as f64;
                                let v = neighbor[idx] - mn[f];
                                gn[idx] -= a[f] * (cj * m_shift[f] + sc * (scatter[idx] + cj * v));
                            }
                        }
                    }
                }
                let mut g_kernel = Array2::zeros(self.kernel.raw_dim());
                let g_x = self.project_backward(&inputs[s], &g_center, &g_neighbor, &mut g_kernel);
                let g_bias = g_center.sum_axis(Axis(0));
                (g_kernel, g_bias, g_x)
            })
            .collect();

        let mut grads = self.zeros_like();
        let mut g_inputs = Vec::with_capacity(per_sample.len());
        for (g_kernel, g_bias, g_x) in per_sample {
            grads.kernel += &g_kernel;
            grads.bias += &g_bias;
            g_inputs.push(g_x);
        }
        if let Some(gn) = grads.norm.as_mut() {
            gn.shift = Array1::from(g_shift);
            gn.scale = Array1::from(g_scale);
        }
        (grads, g_inputs)
    }

    /// Single-sample convenience wrapper around [`PairConv::forward`].
    pub fn apply(&self, input: PairInput<'_>, mode: Mode) -> Result<Array2<f64>> {
        let (mut out, _) = self.forward(&[input], mode)?;
        Ok(out.pop().expect("one sample"))
    }

    pub fn update_running(&mut self, tape: &PairConvTape) {
        if let (Some(bn), Some(st)) = (self.norm.as_mut(), tape.stats.as_ref()) {
            bn.update_running(st);
        }
    }
}

/// Projections of one sample plus per-(point, feature) reductions of the
/// neighbor projection over each point's neighbors.
struct Gathered {
    center: Array2<f64>,
    neighbor: Array2<f64>,
    sum: Array2<f64>,
    max: Array2<f64>,
    min: Array2<f64>,
    max_rank: Vec<u16>,
    min_rank: Vec<u16>,
}

/// The one pass over all pairs. Ties go to the lowest neighbor rank.
fn gather(center: Array2<f64>, neighbor: Array2<f64>, nbrs: &NeighborIndex) -> Gathered {
    let (n, width) = center.dim();
    let mut sum = Array2::zeros((n, width));
    let mut max = Array2::from_elem((n, width), f64::NEG_INFINITY);
    let mut min = Array2::from_elem((n, width), f64::INFINITY);
    let mut max_rank = vec![0u16; n * width];
    let mut min_rank = vec![0u16; n * width];
    {
        let ns = slice2(&neighbor);
        let ss = slice2_mut(&mut sum);
        let hs = slice2_mut(&mut max);
        let ls = slice2_mut(&mut min);
        for i in 0..n {
            let r = i * width..(i + 1) * width;
            let (srow, hrow, lrow) = (&mut ss[r.clone()], &mut hs[r.clone()], &mut ls[r.clone()]);
            let (hr, lr) = (&mut max_rank[r.clone()], &mut min_rank[r]);
            for (rank, &j) in nbrs.row(i).iter().enumerate() {
                let j = j as usize;
                let nrow = &ns[j * width..(j + 1) * width];
                for f in 0..width {
                    let v = nrow[f];
                    srow[f] += v;
                    if v > hrow[f] {
                        hrow[f] = v;
                        hr[f] = rank as u16;
                    }
                    if v < lrow[f] {
                        lrow[f] = v;
                        lr[f] = rank as u16;
                    }
                }
            }
        }
    }
    Gathered {
        center,
        neighbor,
        sum,
        max,
        min,
        max_rank,
        min_rank,
    }
}

/// Batch moments of the pair pre-activations `center[i] + neighbor[j]`.
/// Returns the mean split into its center and neighbor parts, and the
/// biased variance, computed from centered terms:
/// `sum (u_i + v_j)^2 = k sum u_i^2 + 2 sum u_i (sum_j v_j) + sum cnt_j v_j^2`.
fn pair_moments(gathered: &[Gathered], inputs: &[PairInput<'_>], count: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let width = gathered.first().map_or(0, |g| g.center.ncols());
    let counts: Vec<Vec<u32>> = inputs
        .iter()
        .map(|inp| {
            let mut cnt = vec![0u32; inp.neighbors.len()];
            for &j in inp.neighbors.as_slice() {
                cnt[j as usize] += 1;
            }
            cnt
        })
        .collect();
    let firsts: Vec<(Vec<f64>, Vec<f64>)> = gathered
        .par_iter()
        .zip(inputs.par_iter())
        .zip(counts.par_iter())
        .map(|((g, inp), cnt)| {
            let k = inp.neighbors.k() as f64;
            let mut sc = vec![0.0; width];
            let mut sn = vec![0.0; width];
            for (crow, (nrow, &cj)) in g.center.rows().into_iter().zip(g.neighbor.rows().into_iter().zip(cnt)) {
                for f in 0..width {
                    sc[f] += k * crow[f];
                    sn[f] += cj as f64 * nrow[f];
                }
            }
            (sc, sn)
        })
        .collect();
    let (sc, sn): (Vec<Vec<f64>>, Vec<Vec<f64>>) = firsts.into_iter().unzip();
    let mc = reduce_mean(&sc, count);
    let mn = reduce_mean(&sn, count);
    let seconds: Vec<Vec<f64>> = gathered
        .par_iter()
        .zip(inputs.par_iter())
        .zip(counts.par_iter())
        .map(|((g, inp), cnt)| {
            let k = inp.neighbors.k() as f64;
            let mut acc = vec![0.0; width];
            let cs = slice2(&g.center);
            let ns = slice2(&g.neighbor);
            let ss = slice2(&g.sum);
            for (i, &cj) in cnt.iter().enumerate() {
                for f in 0..width {
                    let idx = i * width + f;
                    let u = cs[idx] - mc[f];
                    let vsum = ss[idx] - k * mn[f];
                    let v = ns[idx] - mn[f];
                    acc[f] += k * u * u + 2.0 * u * vsum + cj as f64 * v * v;
                }
            }
            acc
        })
        .collect();
    let var = reduce_mean(&seconds, count).into_iter().map(|v| v.max(0.0)).collect();
    (mc, mn, var)
}


impl Learnable for PairConv {
    fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut t = vec![("kernel".to_string(), slice2(&self.kernel)), ("bias".to_string(), slice1(&self.bias))];
        if let Some(bn) = &self.norm {
            t.push(("norm.scale".into(), slice1(&bn.scale)));
            t.push(("norm.shift".into(), slice1(&bn.shift)));
        }
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut t = vec![slice2_mut(&mut self.kernel), slice1_mut(&mut self.bias)];
        if let Some(bn) = &mut self.norm {
            t.push(slice1_mut(&mut bn.scale));
            t.push(slice1_mut(&mut bn.shift));
        }
        t
    }

    fn buffers(&self) -> Vec<(String, &[f64])> {
        match &self.norm {
            Some(bn) => vec![
                ("norm.running_mean".into(), slice1(&bn.running_mean)),
                ("norm.running_var".into(), slice1(&bn.running_var)),
            ],
            None => Vec::new(),
        }
    }

    fn buffers_mut(&mut self) -> Vec<&mut [f64]> {
        match &mut self.norm {
            Some(bn) => vec![slice1_mut(&mut bn.running_mean), slice1_mut(&mut bn.running_var)],
            None => Vec::new(),
        }
    }
}
