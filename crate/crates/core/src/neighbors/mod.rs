//! Exact k-nearest-neighbor tables in 3D position space and in feature space.
//!
//! All searches exclude the query point itself and order candidates by
//! `(squared distance, index)`, so ties resolve to the lowest index. With
//! dilation `d`, row `i` holds ranks `d, 2d, ..., k*d` (1-based) of the `k*d`
//! nearest candidates.

pub mod bruteforce;
mod feature;
mod grid;

use std::io::Write;

use ndarray::ArrayView2;

use crate::error::{Error, Result};

pub use feature::{knn_feature, DEFAULT_PAIRWISE_BUDGET};
pub use grid::knn_spatial;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Space {
    Spatial,
    Feature,
}

/// Row-major `n x k` neighbor table.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NeighborIndex {
    indices: Vec<u32>,
    n: usize,
    k: usize,
    dilation: usize,
    space: Space,
}

impl NeighborIndex {
    pub fn from_rows(indices: Vec<u32>, k: usize, dilation: usize, space: Space) -> Result<Self> {
        if k == 0 || indices.len() % k != 0 {
            return Err(Error::Neighbors(format!(
                "{} indices do not form rows of {k}",
                indices.len()
            )));
        }
        let n = indices.len() / k;
        for (pos, &j) in indices.iter().enumerate() {
            if j as usize >= n || j as usize == pos / k {
                return Err(Error::Neighbors(format!("row {} has invalid neighbor {j}", pos / k)));
            }
        }
        Ok(Self {
            indices,
            n,
            k,
            dilation,
            space,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dilation(&self) -> usize {
        self.dilation
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.indices[i * self.k..(i + 1) * self.k]
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.indices
    }

    /// Every `stride`-th column, starting at column `stride - 1`.
    pub fn strided(&self, stride: usize) -> Self {
        let k = self.k / stride;
        let mut indices = Vec::with_capacity(self.n * k);
        for i in 0..self.n {
            let row = self.row(i);
            indices.extend((1..=k).map(|r| row[r * stride - 1]));
        }
        Self {
            indices,
            n: self.n,
            k,
            dilation: self.dilation * stride,
            space: self.space,
        }
    }

    /// Debug dump: `point_index,rank,neighbor_index,distance`.
    pub fn write_csv<W: Write>(&self, points: ArrayView2<'_, f64>, mut out: W) -> std::io::Result<()> {
        writeln!(out, "point_index,rank,neighbor_index,distance")?;
        for i in 0..self.n {
            for (rank, &j) in self.row(i).iter().enumerate() {
                let d = squared_distance(points.row(i).as_slice().unwrap(), points.row(j as usize).as_slice().unwrap());
                writeln!(out, "{i},{},{j},{}", rank + 1, d.sqrt())?;
            }
        }
        Ok(())
    }
}

/// Sum of squared channel differences, accumulated in channel order.
#[inline]
pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        let e = x - y;
        s += e * e;
    }
    s
}

pub(crate) fn check_request(n: usize, k: usize, dilation: usize) -> Result<()> {
    if k == 0 || dilation == 0 {
        return Err(Error::Neighbors("k and dilation must be at least 1".into()));
    }
    if n <= k * dilation {
        return Err(Error::Neighbors(format!(
            "need more than k*dilation = {} points, got {n}",
            k * dilation
        )));
    }
    Ok(())
}

/// Bounded candidate list kept sorted by `(distance, index)`.
pub(crate) struct Candidates {
    items: Vec<(f64, u32)>,
    cap: usize,
}

impl Candidates {
    pub(crate) fn new(cap: usize) -> Self {
        Self {
            items: Vec::with_capacity(cap + 1),
            cap,
        }
    }

    pub(crate) fn clear(&mut self) {
        self.items.clear();
    }

    pub(crate) fn is_full(&self) -> bool {
        self.items.len() == self.cap
    }

    /// Current worst kept distance, or infinity while not full.
    pub(crate) fn bound(&self) -> f64 {
        if self.is_full() {
            self.items[self.cap - 1].0
        } else {
            f64::INFINITY
        }
    }

    #[inline]
    pub(crate) fn offer(&mut self, dist: f64, idx: u32) {
        let less = |a: (f64, u32), b: (f64, u32)| a.0 < b.0 || (a.0 == b.0 && a.1 < b.1);
        if self.is_full() && !less((dist, idx), self.items[self.cap - 1]) {
            return;
        }
        let pos = self.items.partition_point(|&it| less(it, (dist, idx)));
        self.items.insert(pos, (dist, idx));
        self.items.truncate(self.cap);
    }

    /// Writes ranks `dilation, 2*dilation, ...` into `out`.
    pub(crate) fn emit(&self, dilation: usize, out: &mut [u32]) {
        for (r, slot) in out.iter_mut().enumerate() {
            *slot = self.items[(r + 1) * dilation - 1].1;
        }
    }
}
