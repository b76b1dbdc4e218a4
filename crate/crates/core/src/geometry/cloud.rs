use crate::error::{Error, Result};
use crate::geometry::norm3;
use crate::rng::Rng;

/// Maximum deviation of a stored normal's length from 1.
pub const NORMAL_TOLERANCE: f64 = 1e-4;

/// Oriented point cloud: one position and one unit normal per point.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    positions: Vec<[f64; 3]>,
    normals: Vec<[f64; 3]>,
}

impl PointCloud {
    pub fn new(positions: Vec<[f64; 3]>, normals: Vec<[f64; 3]>) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::InvalidCloud("point cloud has no points".into()));
        }
        if positions.len() != normals.len() {
            return Err(Error::InvalidCloud(format!(
                "{} positions but {} normals",
                positions.len(),
                normals.len()
            )));
        }
        if let Some(i) = normals
            .iter()
            .position(|&n| !((norm3(n) - 1.0).abs() <= NORMAL_TOLERANCE))
        {
            return Err(Error::InvalidCloud(format!(
                "normal {i} has length {}",
                norm3(normals[i])
            )));
        }
        if positions.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidCloud("non-finite position".into()));
        }
        Ok(Self { positions, normals })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[[f64; 3]] {
        &self.positions
    }

    pub fn normals(&self) -> &[[f64; 3]] {
        &self.normals
    }

    pub fn position(&self, i: usize) -> [f64; 3] {
        self.positions[i]
    }

    pub fn normal(&self, i: usize) -> [f64; 3] {
        self.normals[i]
    }

    pub fn centroid(&self) -> [f64; 3] {
        let n = self.len() as f64;
        let mut c = [0.0; 3];
        for p in &self.positions {
            for d in 0..3 {
                c[d] += p[d];
            }
        }
        c.map(|v| v / n)
    }

    /// Population variance of each position channel.
    pub fn channel_variance(&self) -> [f64; 3] {
        let c = self.centroid();
        let n = self.len() as f64;
        let mut var = [0.0; 3];
        for p in &self.positions {
            for d in 0..3 {
                let e = p[d] - c[d];
                var[d] += e * e;
            }
        }
        var.map(|v| v / n)
    }

    pub fn translated(&self, t: [f64; 3]) -> Self {
        Self {
            positions: self
                .positions
                .iter()
                .map(|p| [p[0] + t[0], p[1] + t[1], p[2] + t[2]])
                .collect(),
            normals: self.normals.clone(),
        }
    }

    /// Centers at the centroid, then (when `scale` is set) rescales so the
    /// farthest point lies at distance 1. A cloud with zero extent stays at
    /// the origin with scale 1.
    pub fn normalized(&self, scale: bool) -> Self {
        let c = self.centroid();
        let mut positions: Vec<[f64; 3]> = self
            .positions
            .iter()
            .map(|p| [p[0] - c[0], p[1] - c[1], p[2] - c[2]])
            .collect();
        if scale {
            let radius = positions.iter().map(|&p| norm3(p)).fold(0.0, f64::max);
            if radius > 0.0 {
                for p in &mut positions {
                    *p = p.map(|v| v / radius);
                }
            }
        }
        Self {
            positions,
            normals: self.normals.clone(),
        }
    }

    /// Adds independent Gaussian noise to every position channel with
    /// standard deviation `fraction` times that channel's variance.
    pub fn jittered(&self, fraction: f64, rng: &mut Rng) -> Self {
        let var = self.channel_variance();
        let sigma = var.map(|v| fraction * v);
        let positions = self
            .positions
            .iter()
            .map(|p| {
                let mut q = *p;
                for d in 0..3 {
                    // Draw regardless of sigma so the stream position does
                    // not depend on the data.
                    let z = rng.normal();
                    if sigma[d] > 0.0 {
                        q[d] += sigma[d] * z;
                    }
                }
                q
            })
            .collect();
        Self {
            positions,
            normals: self.normals.clone(),
        }
    }

    /// Rotation by 180 degrees about the x axis: (x, y, z) -> (x, -y, -z),
    /// applied to positions and normals.
    pub fn rotated_x_180(&self) -> Self {
        let flip = |v: &[f64; 3]| [v[0], -v[1], -v[2]];
        Self {
            positions: self.positions.iter().map(flip).collect(),
            normals: self.normals.iter().map(flip).collect(),
        }
    }

    /// Reorders rows by `order` (row `i` of the result is row `order[i]`).
    pub fn permuted(&self, order: &[usize]) -> Self {
        Self {
            positions: order.iter().map(|&i| self.positions[i]).collect(),
            normals: order.iter().map(|&i| self.normals[i]).collect(),
        }
    }

    /// Uniformly random row order. Any prefix of the result is a uniform
    /// random subset of the input.
    pub fn shuffled(&self, rng: &mut Rng) -> Self {
        self.permuted(&rng.permutation(self.len()))
    }

    /// First `m` rows.
    pub fn truncated(&self, m: usize) -> Result<Self> {
        if m == 0 || m > self.len() {
            return Err(Error::InvalidCloud(format!(
                "cannot truncate {} points to {m}",
                self.len()
            )));
        }
        Ok(Self {
            positions: self.positions[..m].to_vec(),
            normals: self.normals[..m].to_vec(),
        })
    }
}
