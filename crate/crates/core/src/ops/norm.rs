use ndarray::Array1;

use super::{slice1, slice1_mut, Mode};

/// Per-feature affine normalization with running statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm {
    pub scale: Array1<f64>,
    pub shift: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
    pub eps: f64,
    pub momentum: f64,
}

/// Statistics a forward pass normalized with.
#[derive(Clone, Debug, PartialEq)]
pub struct NormStats {
    pub mean: Vec<f64>,
    /// Biased variance of the batch (or the running variance).
    pub var: Vec<f64>,
    pub inv_std: Vec<f64>,
    /// Number of normalized values per feature.
    pub count: usize,
    /// True when computed from the batch, false when running statistics were used.
    pub from_batch: bool,
}

impl BatchNorm {
    pub fn new(width: usize) -> Self {
        Self {
            scale: Array1::ones(width),
            shift: Array1::zeros(width),
            running_mean: Array1::zeros(width),
            running_var: Array1::ones(width),
            eps: 1e-5,
            momentum: 0.1,
        }
    }

    pub fn width(&self) -> usize {
        self.scale.len()
    }

    pub fn zeros_like(&self) -> Self {
        let w = self.width();
        Self {
            scale: Array1::zeros(w),
            shift: Array1::zeros(w),
            running_mean: Array1::zeros(w),
            running_var: Array1::zeros(w),
            eps: self.eps,
            momentum: self.momentum,
        }
    }

    pub fn running_stats(&self) -> NormStats {
        self.stats_from(slice1(&self.running_mean).to_vec(), slice1(&self.running_var).to_vec(), 0, false)
    }

    pub fn batch_stats(&self, mean: Vec<f64>, var: Vec<f64>, count: usize) -> NormStats {
        self.stats_from(mean, var, count, true)
    }

    fn stats_from(&self, mean: Vec<f64>, var: Vec<f64>, count: usize, from_batch: bool) -> NormStats {
        let inv_std = var.iter().map(|v| 1.0 / (v + self.eps).sqrt()).collect();
        NormStats {
            mean,
            var,
            inv_std,
            count,
            from_batch,
        }
    }

    /// Picks batch or running statistics; `batch` is only evaluated in train
    /// mode with more than one value per feature.
    pub fn select(&self, mode: Mode, count: usize, batch: impl FnOnce() -> (Vec<f64>, Vec<f64>)) -> NormStats {
        if mode == Mode::Train && count > 1 {
            let (mean, var) = batch();
            self.batch_stats(mean, var, count)
        } else {
            self.running_stats()
        }
    }

    /// Per-feature `(a, c)` with `y = a * z + c`.
    pub fn coefficients(&self, stats: &NormStats) -> (Vec<f64>, Vec<f64>) {
        let scale = slice1(&self.scale);
        let shift = slice1(&self.shift);
        let a: Vec<f64> = (0..self.width()).map(|f| scale[f] * stats.inv_std[f]).collect();
        let c = (0..self.width()).map(|f| shift[f] - a[f] * stats.mean[f]).collect();
        (a, c)
    }

    /// Exponential moving update with the unbiased batch variance.
    pub fn update_running(&mut self, stats: &NormStats) {
        if !stats.from_batch {
            return;
        }
        let m = self.momentum;
        let unbias = stats.count as f64 / (stats.count as f64 - 1.0);
        let rm = slice1_mut(&mut self.running_mean);
        for (r, &v) in rm.iter_mut().zip(&stats.mean) {
            *r = (1.0 - m) * *r + m * v;
        }
        let rv = slice1_mut(&mut self.running_var);
        for (r, &v) in rv.iter_mut().zip(&stats.var) {
            *r = (1.0 - m) * *r + m * v * unbias;
        }
    }
}

/// Mean and biased variance per feature from per-chunk partial sums, reduced
/// in chunk order so the result does not depend on scheduling.
pub(crate) fn reduce_mean(partials: &[Vec<f64>], count: usize) -> Vec<f64> {
    let width = partials.first().map_or(0, Vec::len);
    let mut total = vec![0.0; width];
    for p in partials {
        for (t, v) in total.iter_mut().zip(p) {
            *t += v;
        }
    }
    total.iter().map(|t| t / count as f64).collect()
}
