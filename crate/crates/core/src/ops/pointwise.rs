use ndarray::{Array1, Array2, ArrayView2, Axis};
use rayon::prelude::*;

use super::norm::reduce_mean;
use super::{fan_in_uniform, fan_in_uniform_vec, slice1, slice1_mut, slice2, slice2_mut};
use super::{Activation, BatchNorm, Learnable, Mode, NormStats, LEAKY_SLOPE};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Kernel-size-1 convolution: the same affine map, normalization and
/// activation applied to every row independently.
#[derive(Clone, Debug, PartialEq)]
pub struct PointConv {
    /// `in x out`.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub norm: Option<BatchNorm>,
    pub activation: Activation,
}

pub struct PointConvTape {
    pre: Vec<Array2<f64>>,
    pub stats: Option<NormStats>,
}

impl PointConv {
    pub fn new(input: usize, output: usize, rng: &mut Rng) -> Self {
        Self {
            weight: fan_in_uniform(input, output, input, rng),
            bias: fan_in_uniform_vec(output, input, rng),
            norm: Some(BatchNorm::new(output)),
            activation: Activation::Leaky(LEAKY_SLOPE),
        }
    }

    /// Affine only: no normalization, identity activation.
    pub fn linear(input: usize, output: usize, rng: &mut Rng) -> Self {
        Self {
            norm: None,
            activation: Activation::Identity,
            ..Self::new(input, output, rng)
        }
    }

    pub fn in_features(&self) -> usize {
        self.weight.nrows()
    }

    pub fn out_features(&self) -> usize {
        self.weight.ncols()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            weight: Array2::zeros(self.weight.raw_dim()),
            bias: Array1::zeros(self.bias.len()),
            norm: self.norm.as_ref().map(BatchNorm::zeros_like),
            activation: self.activation,
        }
    }

    pub fn forward(&self, inputs: &[ArrayView2<'_, f64>], mode: Mode) -> Result<(Vec<Array2<f64>>, PointConvTape)> {
        for x in inputs {
            if x.ncols() != self.in_features() {
                return Err(Error::Shape(format!(
                    "pointwise conv expects {} features, got {}",
                    self.in_features(),
                    x.ncols()
                )));
            }
        }
        let width = self.out_features();
        let pre: Vec<Array2<f64>> = inputs.par_iter().map(|x| x.dot(&self.weight) + &self.bias).collect();
        let count: usize = pre.iter().map(Array2::nrows).sum();
        let stats = self.norm.as_ref().map(|bn| {
            bn.select(mode, count, || {
                let sums: Vec<Vec<f64>> = pre.iter().map(|z| z.sum_axis(Axis(0)).to_vec()).collect();
                let mean = reduce_mean(&sums, count);
                let sq: Vec<Vec<f64>> = pre
                    .iter()
                    .map(|z| {
                        let mut acc = vec![0.0; width];
                        for row in z.rows() {
                            for f in 0..width {
                                let e = row[f] - mean[f];
                                acc[f] += e * e;
                            }
                        }
                        acc
                    })
                    .collect();
                let var = reduce_mean(&sq, count);
                (mean, var)
            })
        });
        let (a, c) = match (&self.norm, &stats) {
            (Some(bn), Some(st)) => bn.coefficients(st),
            _ => (vec![1.0; width], vec![0.0; width]),
        };
        let act = self.activation;
        let mut outputs = Vec::with_capacity(pre.len());
        for z in &pre {
            let mut y = z.clone();
            for row in slice2_mut(&mut y).chunks_exact_mut(width) {
                for f in 0..width {
                    row[f] = act.apply(a[f] * row[f] + c[f]);
                }
            }
            if y.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    stage: "pointwise conv output".into(),
                });
            }
            outputs.push(y);
        }
        Ok((outputs, PointConvTape { pre, stats }))
    }

    pub fn backward(
        &self,
        inputs: &[ArrayView2<'_, f64>],
        tape: &PointConvTape,
        grad_out: &[ArrayView2<'_, f64>],
    ) -> (PointConv, Vec<Array2<f64>>) {
        let width = self.out_features();
        let stats = tape.stats.as_ref();
        let (a, c) = match (&self.norm, stats) {
            (Some(bn), Some(st)) => bn.coefficients(st),
            _ => (vec![1.0; width], vec![0.0; width]),
        };
        let (mean, inv_std) = match stats {
            Some(st) => (st.mean.clone(), st.inv_std.clone()),
            None => (vec![0.0; width], vec![1.0; width]),
        };
        let act = self.activation;

        // Gradient w.r.t. the normalized-and-shifted value, before the activation.
        let mut g_shift = vec![0.0; width];
        let mut g_scale = vec![0.0; width];
        let gy: Vec<Array2<f64>> = tape
            .pre
            .iter()
            .zip(grad_out)
            .map(|(z, g)| {
                let mut out = Array2::zeros(z.raw_dim());
                let zs = slice2(z);
                let os = slice2_mut(&mut out);
                for (idx, (&zv, &gv)) in zs.iter().zip(g.iter()).enumerate() {
                    let f = idx % width;
                    let v = gv * act.derivative(a[f] * zv + c[f]);
                    os[idx] = v;
                    g_shift[f] += v;
                    g_scale[f] += v * (zv - mean[f]) * inv_std[f];
                }
                out
            })
            .collect();

        let batch_norm = stats.is_some_and(|st| st.from_batch);
        let count = stats.map_or(1, |st| st.count.max(1)) as f64;
        let g_pre: Vec<Array2<f64>> = tape
            .pre
            .iter()
            .zip(gy)
            .map(|(z, mut g)| {
                let zs = slice2(z);
                let gs = slice2_mut(&mut g);
                for (idx, v) in gs.iter_mut().enumerate() {
                    let f = idx % width;
                    if batch_norm {
                        let zh = (zs[idx] - mean[f]) * inv_std[f];
                        *v = a[f] * (*v - g_shift[f] / count - zh * g_scale[f] / count);
                    } else {
                        *v *= a[f];
                    }
                }
                g
            })
            .collect();

        let mut grads = self.zeros_like();
        let mut g_inputs = Vec::with_capacity(inputs.len());
        for (x, g) in inputs.iter().zip(&g_pre) {
            grads.weight += &x.t().dot(g);
            grads.bias += &g.sum_axis(Axis(0));
            g_inputs.push(g.dot(&self.weight.t()));
        }
        if let Some(gn) = grads.norm.as_mut() {
            gn.shift = Array1::from(g_shift);
            gn.scale = Array1::from(g_scale);
        }
        (grads, g_inputs)
    }

    pub fn apply(&self, input: ArrayView2<'_, f64>, mode: Mode) -> Result<Array2<f64>> {
        let (mut out, _) = self.forward(&[input], mode)?;
        Ok(out.pop().expect("one sample"))
    }

    pub fn update_running(&mut self, tape: &PointConvTape) {
        if let (Some(bn), Some(st)) = (self.norm.as_mut(), tape.stats.as_ref()) {
            bn.update_running(st);
        }
    }
}

impl Learnable for PointConv {
    fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut t = vec![("weight".to_string(), slice2(&self.weight)), ("bias".to_string(), slice1(&self.bias))];
        if let Some(bn) = &self.norm {
            t.push(("norm.scale".into(), slice1(&bn.scale)));
            t.push(("norm.shift".into(), slice1(&bn.shift)));
        }
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut t = vec![slice2_mut(&mut self.weight), slice1_mut(&mut self.bias)];
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

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn bare(weight: Array2<f64>, bias: Array1<f64>) -> PointConv {
        PointConv {
            weight,
            bias,
            norm: None,
            activation: Activation::Identity,
        }
    }

    #[test]
    fn identity_kernel_returns_input() {
        let x = array![[1.0, -2.0, 3.0], [0.5, 0.0, -1.0]];
        let conv = bare(Array2::eye(3), Array1::zeros(3));
        assert_eq!(conv.apply(x.view(), Mode::Train).unwrap(), x);
    }

    #[test]
    fn matches_dense_matmul() {
        let mut rng = Rng::new(3);
        let x = Array2::from_shape_simple_fn((8, 4), || rng.normal());
        let w = Array2::from_shape_simple_fn((4, 3), || rng.normal());
        let b = Array1::from_shape_simple_fn(3, || rng.normal());
        let conv = bare(w.clone(), b.clone());
        let out = conv.apply(x.view(), Mode::Eval).unwrap();
        for i in 0..8 {
            for o in 0..3 {
                let mut acc = b[o];
                for k in 0..4 {
                    acc += x[[i, k]] * w[[k, o]];
                }
                assert!((out[[i, o]] - acc).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn commutes_with_row_permutation() {
        let mut rng = Rng::new(8);
        let x = Array2::from_shape_simple_fn((10, 5), || rng.normal());
        let conv = PointConv::new(5, 4, &mut rng);
        let perm = rng.permutation(10);
        let xp = x.select(Axis(0), &perm);
        let a = conv.apply(x.view(), Mode::Eval).unwrap().select(Axis(0), &perm);
        let b = conv.apply(xp.view(), Mode::Eval).unwrap();
        for (u, v) in a.iter().zip(b.iter()) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn train_mode_normalizes_each_feature() {
        let mut rng = Rng::new(4);
        let x = Array2::from_shape_simple_fn((50, 3), || rng.normal() * 4.0 + 1.0);
        let mut conv = PointConv::new(3, 2, &mut rng);
        conv.activation = Activation::Identity;
        let y = conv.apply(x.view(), Mode::Train).unwrap();
        for f in 0..2 {
            let col = y.column(f);
            let mean = col.sum() / 50.0;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 50.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-3);
        }
    }
}
