use ndarray::ArrayView2;
use rayon::prelude::*;

use super::{check_request, squared_distance, Candidates, NeighborIndex, Space};
use crate::error::{Error, Result};

/// Default cap on `N * N` for feature-space search.
pub const DEFAULT_PAIRWISE_BUDGET: usize = 1 << 26;

/// Exact k-NN in feature space by scanning every pair. Dilation is fixed at 1.
/// `budget` bounds `N * N`, the size of the implied distance matrix.
pub fn knn_feature(features: ArrayView2<'_, f64>, k: usize, budget: usize) -> Result<NeighborIndex> {
    let n = features.nrows();
    check_request(n, k, 1)?;
    if features.ncols() == 0 {
        return Err(Error::Neighbors("feature width must be at least 1".into()));
    }
    if n.saturating_mul(n) > budget {
        return Err(Error::Neighbors(format!(
            "{n} points exceed the pairwise budget of {budget} entries"
        )));
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(Error::Neighbors("non-finite feature".into()));
    }
    let owned;
    let rows = match features.as_slice() {
        Some(s) => s,
        None => {
            owned = features.as_standard_layout().into_owned();
            owned.as_slice().expect("standard layout")
        }
    };
    let f = features.ncols();
    let mut indices = vec![0u32; n * k];
    indices
        .par_chunks_mut(k)
        .enumerate()
        .for_each_init(
            || Candidates::new(k),
            |cand, (i, out)| {
                cand.clear();
                let q = &rows[i * f..(i + 1) * f];
                for j in 0..n {
                    if j != i {
                        let d = squared_distance(q, &rows[j * f..(j + 1) * f]);
                        if d <= cand.bound() {
                            cand.offer(d, j as u32);
                        }
                    }
                }
                cand.emit(1, out);
            },
        );
    NeighborIndex::from_rows(indices, k, 1, Space::Feature)
}
