//! Reference k-NN: full pairwise distance matrix and a complete sort per row.
//! Slow by construction; the production searches are checked against it.

use ndarray::ArrayView2;

use super::{check_request, NeighborIndex, Space};
use crate::error::Result;

pub fn knn_bruteforce(points: ArrayView2<'_, f64>, k: usize, dilation: usize, space: Space) -> Result<NeighborIndex> {
    let n = points.nrows();
    check_request(n, k, dilation)?;
    let mut dist = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for c in 0..points.ncols() {
                let e = points[[i, c]] - points[[j, c]];
                s += e * e;
            }
            dist[i * n + j] = s;
        }
    }
    let mut indices = Vec::with_capacity(n * k);
    for i in 0..n {
        let mut order: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        order.sort_by(|&a, &b| {
            dist[i * n + a]
                .partial_cmp(&dist[i * n + b])
                .expect("finite distances")
                .then(a.cmp(&b))
        });
        indices.extend((1..=k).map(|r| order[r * dilation - 1] as u32));
    }
    NeighborIndex::from_rows(indices, k, dilation, space)
}
