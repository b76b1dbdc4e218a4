use rayon::prelude::*;

use super::{check_request, squared_distance, Candidates, NeighborIndex, Space};
use crate::error::{Error, Result};

/// Average occupancy the grid is sized for.
const POINTS_PER_CELL: f64 = 4.0;

/// Uniform grid over the bounding box with points bucketed by cell.
struct Grid {
    origin: [f64; 3],
    cell: f64,
    dims: [usize; 3],
    starts: Vec<u32>,
    members: Vec<u32>,
}

impl Grid {
    fn build(points: &[[f64; 3]]) -> Self {
        let n = points.len();
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in points {
            for d in 0..3 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        let extent: [f64; 3] = std::array::from_fn(|d| hi[d] - lo[d]);
        let longest = extent.iter().cloned().fold(0.0, f64::max);
        // Flat axes get a nominal thickness so the volume estimate is sane.
        let floor = (longest * 1e-3).max(f64::MIN_POSITIVE);
        let volume: f64 = extent.iter().map(|e| e.max(floor)).product();
        let target_cells = (n as f64 / POINTS_PER_CELL).max(1.0);
        let mut cell = (volume / target_cells).cbrt();
        if !(cell > 0.0) || !cell.is_finite() {
            cell = 1.0;
        }
        let mut dims: [usize; 3] = std::array::from_fn(|d| ((extent[d] / cell).ceil() as usize).max(1));
        // Guard against pathological aspect ratios blowing up the cell count.
        while dims.iter().product::<usize>() > 4 * n + 64 {
            cell *= 1.5;
            dims = std::array::from_fn(|d| ((extent[d] / cell).ceil() as usize).max(1));
        }

        let mut grid = Grid {
            origin: lo,
            cell,
            dims,
            starts: Vec::new(),
            members: Vec::new(),
        };
        let cells: Vec<usize> = points.iter().map(|p| grid.flat(grid.coord(p))).collect();
        let total = dims.iter().product::<usize>();
        let mut starts = vec![0u32; total + 1];
        for &c in &cells {
            starts[c + 1] += 1;
        }
        for c in 0..total {
            starts[c + 1] += starts[c];
        }
        let mut fill = starts.clone();
        let mut members = vec![0u32; n];
        for (i, &c) in cells.iter().enumerate() {
            members[fill[c] as usize] = i as u32;
            fill[c] += 1;
        }
        grid.starts = starts;
        grid.members = members;
        grid
    }

    fn coord(&self, p: &[f64; 3]) -> [usize; 3] {
        std::array::from_fn(|d| {
            let c = ((p[d] - self.origin[d]) / self.cell).floor();
            (c.max(0.0) as usize).min(self.dims[d] - 1)
        })
    }

    fn flat(&self, c: [usize; 3]) -> usize {
        (c[2] * self.dims[1] + c[1]) * self.dims[0] + c[0]
    }

    fn cell_members(&self, c: [usize; 3]) -> &[u32] {
        let f = self.flat(c);
        &self.members[self.starts[f] as usize..self.starts[f + 1] as usize]
    }

    /// Calls `visit` for every in-bounds cell at Chebyshev distance exactly `r`.
    fn ring(&self, center: [usize; 3], r: usize, mut visit: impl FnMut([usize; 3])) {
        let r = r as isize;
        let c = center.map(|v| v as isize);
        let inb = |v: isize, d: usize| v >= 0 && (v as usize) < self.dims[d];
        for dz in -r..=r {
            let z = c[2] + dz;
            if !inb(z, 2) {
                continue;
            }
            for dy in -r..=r {
                let y = c[1] + dy;
                if !inb(y, 1) {
                    continue;
                }
                let interior = dz.abs() < r && dy.abs() < r;
                let mut dx = -r;
                while dx <= r {
                    let x = c[0] + dx;
                    if inb(x, 0) {
                        visit([x as usize, y as usize, z as usize]);
                    }
                    // Interior rows only contribute their two end cells.
                    dx += if interior && dx == -r { 2 * r.max(1) } else { 1 };
                }
            }
        }
    }
}

/// Exact Euclidean k-NN over 3D points with dilation, self excluded.
pub fn knn_spatial(points: &[[f64; 3]], k: usize, dilation: usize) -> Result<NeighborIndex> {
    let n = points.len();
    check_request(n, k, dilation)?;
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Neighbors("non-finite coordinate".into()));
    }
    let want = k * dilation;
    let grid = Grid::build(points);
    let max_ring = grid.dims.iter().copied().max().unwrap_or(1);

    let mut indices = vec![0u32; n * k];
    indices
        .par_chunks_mut(k)
        .enumerate()
        .for_each_init(
            || Candidates::new(want),
            |cand, (i, out)| {
                cand.clear();
                let q = &points[i];
                let home = grid.coord(q);
                for r in 0..=max_ring {
                    if r > 0 && cand.is_full() {
                        // Any point in ring r is at least (r - 1) cells away.
                        let gap = (r - 1) as f64 * grid.cell * (1.0 - 1e-9);
                        if gap * gap > cand.bound() {
                            break;
                        }
                    }
                    grid.ring(home, r, |c| {
                        for &j in grid.cell_members(c) {
                            if j as usize != i {
                                cand.offer(squared_distance(q, &points[j as usize]), j);
                            }
                        }
                    });
                }
                cand.emit(dilation, out);
            },
        );
    NeighborIndex::from_rows(indices, k, dilation, Space::Spatial)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neighbors::bruteforce::knn_bruteforce;
    use crate::rng::Rng;
    use ndarray::Array2;

    fn line(xs: &[f64]) -> Vec<[f64; 3]> {
        xs.iter().map(|&x| [x, 0.0, 0.0]).collect()
    }

    fn as_array(points: &[[f64; 3]]) -> Array2<f64> {
        Array2::from_shape_fn((points.len(), 3), |(i, d)| points[i][d])
    }

    #[test]
    fn collinear_nearest() {
        let idx = knn_spatial(&line(&[0.0, 1.0, 3.0]), 1, 1).unwrap();
        assert_eq!(idx.as_slice(), &[1, 0, 1]);
    }

    #[test]
    fn collinear_dilated() {
        let idx = knn_spatial(&line(&[0.0, 1.0, 2.0, 4.0, 8.0]), 2, 2).unwrap();
        // Ranks 2 and 4 of {1, 2, 4, 8} seen from x = 0.
        assert_eq!(idx.row(0), &[2, 4]);
    }

    #[test]
    fn rejects_too_few_points() {
        assert!(knn_spatial(&line(&[0.0, 1.0, 2.0]), 2, 1).is_ok());
        assert!(knn_spatial(&line(&[0.0, 1.0, 2.0]), 3, 1).is_err());
        assert!(knn_spatial(&line(&[0.0, 1.0, 2.0, 3.0]), 2, 2).is_err());
    }

    #[test]
    fn lattice_ties_match_oracle() {
        let mut pts = Vec::new();
        for x in 0..6 {
            for y in 0..5 {
                for z in 0..4 {
                    pts.push([x as f64, y as f64, z as f64]);
                }
            }
        }
        for (k, d) in [(1, 1), (6, 1), (4, 3), (10, 2)] {
            let fast = knn_spatial(&pts, k, d).unwrap();
            let slow = knn_bruteforce(as_array(&pts).view(), k, d, Space::Spatial).unwrap();
            assert_eq!(fast, slow, "k={k} d={d}");
        }
    }

    #[test]
    fn thin_and_clustered_clouds_match_oracle() {
        let mut rng = Rng::new(17);
        // Nearly planar sheet plus a distant cluster.
        let mut pts: Vec<[f64; 3]> = (0..300)
            .map(|_| [rng.uniform() * 10.0, rng.uniform() * 3.0, rng.normal() * 1e-4])
            .collect();
        pts.extend((0..40).map(|_| [50.0 + rng.normal() * 0.01, 50.0, 50.0]));
        let fast = knn_spatial(&pts, 16, 2).unwrap();
        let slow = knn_bruteforce(as_array(&pts).view(), 16, 2, Space::Spatial).unwrap();
        assert_eq!(fast, slow);
    }

    #[test]
    fn duplicate_points_resolve_by_index() {
        let pts = vec![[0.0; 3]; 5];
        let idx = knn_spatial(&pts, 2, 1).unwrap();
        assert_eq!(idx.row(0), &[1, 2]);
        assert_eq!(idx.row(3), &[0, 1]);
    }
}
