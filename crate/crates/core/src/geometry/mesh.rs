use crate::error::{Error, Result};
use crate::geometry::{cross3, norm3, sub3, PointCloud};
use crate::rng::Rng;

/// Indexed triangle mesh.
#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<[f64; 3]>,
    pub faces: Vec<[u32; 3]>,
    pub name: String,
}

impl Mesh {
    /// Builds a mesh, dropping zero-area faces. Fails if any index is out of
    /// range or nothing survives cleanup.
    pub fn new(name: impl Into<String>, vertices: Vec<[f64; 3]>, faces: Vec<[u32; 3]>) -> Result<Self> {
        let name = name.into();
        let nv = vertices.len();
        if let Some(f) = faces.iter().find(|f| f.iter().any(|&i| i as usize >= nv)) {
            return Err(Error::InvalidMesh(format!(
                "{name}: face {f:?} references a vertex beyond {nv}"
            )));
        }
        let mut mesh = Self {
            vertices,
            faces,
            name,
        };
        let before = mesh.faces.len();
        mesh.faces.retain(|f| {
            let [a, b, c] = f.map(|i| mesh.vertices[i as usize]);
            norm3(cross3(sub3(b, a), sub3(c, a))) > 0.0
        });
        if mesh.faces.len() < before {
            log::debug!(
                "{}: dropped {} degenerate faces",
                mesh.name,
                before - mesh.faces.len()
            );
        }
        if mesh.faces.is_empty() {
            return Err(Error::InvalidMesh(format!("{}: empty mesh after cleanup", mesh.name)));
        }
        Ok(mesh)
    }

    fn corners(&self, face: usize) -> [[f64; 3]; 3] {
        self.faces[face].map(|i| self.vertices[i as usize])
    }

    pub fn face_area(&self, face: usize) -> f64 {
        let [a, b, c] = self.corners(face);
        0.5 * norm3(cross3(sub3(b, a), sub3(c, a)))
    }

    /// Unit normal following the face winding (counter-clockwise = outward).
    pub fn face_normal(&self, face: usize) -> [f64; 3] {
        let [a, b, c] = self.corners(face);
        let n = cross3(sub3(b, a), sub3(c, a));
        let len = norm3(n);
        [n[0] / len, n[1] / len, n[2] / len]
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    /// Draws `n` points area-uniformly: a triangle is picked with probability
    /// proportional to its area, then a point uniformly inside it. Each point
    /// carries its source triangle's normal.
    pub fn sample_surface(&self, n: usize, rng: &mut Rng) -> Result<PointCloud> {
        self.sample_surface_tagged(n, rng).map(|(pc, _)| pc)
    }

    /// As [`Mesh::sample_surface`], also returning the source face of every point.
    pub fn sample_surface_tagged(&self, n: usize, rng: &mut Rng) -> Result<(PointCloud, Vec<usize>)> {
        if n == 0 {
            return Err(Error::InvalidCloud("cannot sample zero points".into()));
        }
        let mut cumulative = Vec::with_capacity(self.faces.len());
        let mut total = 0.0;
        for f in 0..self.faces.len() {
            total += self.face_area(f);
            cumulative.push(total);
        }
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::InvalidMesh(format!("{}: zero total area", self.name)));
        }
        let normals: Vec<[f64; 3]> = (0..self.faces.len()).map(|f| self.face_normal(f)).collect();

        let mut positions = Vec::with_capacity(n);
        let mut point_normals = Vec::with_capacity(n);
        let mut sources = Vec::with_capacity(n);
        for _ in 0..n {
            let target = rng.uniform() * total;
            let face = cumulative
                .partition_point(|&c| c <= target)
                .min(self.faces.len() - 1);
            let (mut u, mut v) = (rng.uniform(), rng.uniform());
            if u + v > 1.0 {
                u = 1.0 - u;
                v = 1.0 - v;
            }
            let [a, b, c] = self.corners(face);
            let w = 1.0 - u - v;
            positions.push([
                w * a[0] + u * b[0] + v * c[0],
                w * a[1] + u * b[1] + v * c[1],
                w * a[2] + u * b[2] + v * c[2],
            ]);
            point_normals.push(normals[face]);
            sources.push(face);
        }
        Ok((PointCloud::new(positions, point_normals)?, sources))
    }
}
