//! Procedural tablet-like meshes for desk-scale experiments, plus trivially
//! separable primitive clouds for sanity runs.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Mesh, PointCloud};
use crate::rng::Rng;

use super::cache::CloudLoader;
use super::manifest::{Manifest, MeshSource, Tablet};
use super::tasks::{
    build_binary_dataset, build_front_dataset, build_period_dataset, BinaryTask, SizeVariant, TaskDataset,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthTask {
    Period,
    Seal,
    LeftSign,
    Front,
}

impl SynthTask {
    pub fn classes(self) -> usize {
        match self {
            SynthTask::Period => 4,
            _ => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthParams {
    pub wedges_min: usize,
    pub wedges_max: usize,
    /// Wedge depth range as a fraction of tablet thickness.
    pub depth_min: f64,
    pub depth_max: f64,
    /// Grid cells per side of each of the six faces.
    pub resolution: usize,
    /// Outward bulge of the flat (front) and curved (back) faces, as a
    /// fraction of thickness.
    pub front_bulge: f64,
    pub back_bulge: f64,
    /// Seal relief height as a fraction of thickness.
    pub seal_height: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            wedges_min: 20,
            wedges_max: 200,
            depth_min: 0.01,
            depth_max: 0.03,
            resolution: 40,
            front_bulge: 0.03,
            back_bulge: 0.35,
            seal_height: 0.15,
        }
    }
}

/// Face order: +z (front), -z (back), +x (right), -x (left), +y (top), -y (bottom).
const FACES: [(usize, f64, usize, usize); 6] = [(2, 1.0, 0, 1), (2, -1.0, 1, 0), (0, 1.0, 1, 2), (0, -1.0, 2, 1), (1, 1.0, 2, 0), (1, -1.0, 0, 2)];
const FRONT_FACE: usize = 0;
const BACK_FACE: usize = 1;
const LEFT_FACE: usize = 3;

#[derive(Clone, Debug)]
struct Wedge {
    face: usize,
    /// Center in face coordinates, metric units.
    center: [f64; 2],
    angle: f64,
    length: f64,
    width: f64,
    depth: f64,
}

#[derive(Clone, Debug)]
struct Relief {
    face: usize,
    radius: f64,
    height: f64,
}

#[derive(Clone, Debug)]
struct TabletShape {
    half: [f64; 3],
    rounding: f64,
    front_bulge: f64,
    back_bulge: f64,
    wedges: Vec<Wedge>,
    relief: Option<Relief>,
}

#[derive(Clone, Copy, Debug)]
struct WedgeStyle {
    count: (usize, usize),
    length: f64,
    /// Fraction of the configured depth range (0 = min, 1 = max).
    depth: f64,
    /// Fixed orientation, or uniformly random when `None`.
    angle: Option<f64>,
}

impl TabletShape {
    fn face_extent(&self, face: usize) -> [f64; 2] {
        let (_, _, u, v) = FACES[face];
        [self.half[u], self.half[v]]
    }

    fn displacement(&self, face: usize, st: [f64; 2]) -> f64 {
        let ext = self.face_extent(face);
        let p = [st[0] * ext[0], st[1] * ext[1]];
        let mut d: f64 = 0.0;
        for w in self.wedges.iter().filter(|w| w.face == face) {
            let (s, c) = w.angle.sin_cos();
            let dx = p[0] - w.center[0];
            let dy = p[1] - w.center[1];
            let a = c * dx + s * dy;
            let b = -s * dx + c * dy;
            if (0.0..=w.length).contains(&a) {
                let taper = 1.0 - a / w.length;
                if b.abs() <= 0.5 * w.width * taper {
                    d = d.max(w.depth * taper);
                }
            }
        }
        let mut out = -d;
        if let Some(r) = self.relief.as_ref().filter(|r| r.face == face) {
            let rho = (p[0] * p[0] + p[1] * p[1]).sqrt();
            if rho < r.radius {
                out += r.height * (0.75 + 0.25 * (rho / r.radius * 3.0 * PI).cos());
            }
        }
        out
    }

    fn mesh(&self, resolution: usize, name: &str) -> Result<Mesh> {
        let r = resolution.max(2);
        let mut vertices = Vec::with_capacity(6 * (r + 1) * (r + 1));
        let mut faces = Vec::with_capacity(6 * 2 * r * r);
        let thickness = 2.0 * self.half[2];
        for (f, &(axis, sign, u, v)) in FACES.iter().enumerate() {
            let base = vertices.len() as u32;
            for j in 0..=r {
                for i in 0..=r {
                    let s = 2.0 * i as f64 / r as f64 - 1.0;
                    let t = 2.0 * j as f64 / r as f64 - 1.0;
                    let mut q = [0.0; 3];
                    q[axis] = sign;
                    q[u] = s;
                    q[v] = t;
                    let len = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2]).sqrt();
                    let mut p = [0.0; 3];
                    for k in 0..3 {
                        let rounded = (1.0 - self.rounding) * q[k] + self.rounding * q[k] / len * 1.2;
                        p[k] = rounded * self.half[k];
                    }
                    let xn = (p[0] / self.half[0]).clamp(-1.0, 1.0);
                    let yn = (p[1] / self.half[1]).clamp(-1.0, 1.0);
                    let bulge = if p[2] >= 0.0 { self.front_bulge } else { self.back_bulge };
                    p[2] *= 1.0 + bulge * (1.0 - xn * xn) * (1.0 - yn * yn);
                    // Interior-of-face displacement fades out toward the edges
                    // so neighboring faces stay stitched.
                    let edge = (1.0 - s.abs().max(t.abs())).clamp(0.0, 0.1) / 0.1;
                    p[axis] += sign * self.displacement(f, [s, t]) * thickness * edge;
                    vertices.push(p);
                }
            }
            let w = (r + 1) as u32;
            for j in 0..r as u32 {
                for i in 0..r as u32 {
                    let a = base + j * w + i;
                    faces.push([a, a + 1, a + w + 1]);
                    faces.push([a, a + w + 1, a + w]);
                }
            }
        }
        Mesh::new(name, vertices, faces)
    }
}

fn random_wedges(face: usize, style: WedgeStyle, ext: [f64; 2], params: &SynthParams, rng: &mut Rng) -> Vec<Wedge> {
    let lo = style.count.0.max(params.wedges_min);
    let hi = style.count.1.min(params.wedges_max).max(lo);
    let n = lo + rng.below(hi - lo + 1);
    let depth = params.depth_min + style.depth * (params.depth_max - params.depth_min);
    (0..n)
        .map(|_| Wedge {
            face,
            center: [
                rng.uniform_range(-0.8, 0.8) * ext[0],
                rng.uniform_range(-0.8, 0.8) * ext[1],
            ],
            angle: style.angle.unwrap_or_else(|| rng.uniform_range(0.0, 2.0 * PI)) + rng.uniform_range(-0.15, 0.15),
            length: style.length * rng.uniform_range(0.8, 1.2),
            width: 0.6 * style.length,
            depth: depth * rng.uniform_range(0.9, 1.1),
        })
        .collect()
}

fn base_shape(half: [f64; 3], params: &SynthParams, rng: &mut Rng) -> TabletShape {
    let jitter = |v: f64, rng: &mut Rng| v * rng.uniform_range(0.92, 1.08);
    TabletShape {
        half: [jitter(half[0], rng), jitter(half[1], rng), jitter(half[2], rng)],
        rounding: rng.uniform_range(0.25, 0.4),
        front_bulge: params.front_bulge,
        back_bulge: params.back_bulge,
        wedges: Vec::new(),
        relief: None,
    }
}

const NEUTRAL: WedgeStyle = WedgeStyle {
    count: (40, 120),
    length: 0.08,
    depth: 0.5,
    angle: None,
};

fn inscribe(shape: &mut TabletShape, faces: &[usize], style: WedgeStyle, params: &SynthParams, rng: &mut Rng) {
    for &f in faces {
        let ext = shape.face_extent(f);
        let w = random_wedges(f, style, ext, params, rng);
        shape.wedges.extend(w);
    }
}

/// Per-period tablet proportions and writing style.
fn period_style(class: usize) -> ([f64; 3], WedgeStyle) {
    match class {
        0 => (
            [1.0, 1.3, 0.35],
            WedgeStyle {
                count: (20, 60),
                length: 0.14,
                depth: 1.0,
                angle: None,
            },
        ),
        1 => (
            [1.0, 1.0, 0.5],
            WedgeStyle {
                count: (150, 200),
                length: 0.05,
                depth: 0.0,
                angle: Some(0.0),
            },
        ),
        2 => (
            [1.35, 0.9, 0.3],
            WedgeStyle {
                count: (60, 120),
                length: 0.09,
                depth: 0.5,
                angle: Some(0.5 * PI),
            },
        ),
        _ => (
            [0.8, 1.5, 0.55],
            WedgeStyle {
                count: (120, 200),
                length: 0.06,
                depth: 0.9,
                angle: Some(0.25 * PI),
            },
        ),
    }
}

fn synth_shape(task: SynthTask, class: usize, params: &SynthParams, rng: &mut Rng) -> TabletShape {
    match task {
        SynthTask::Period => {
            let (half, style) = period_style(class);
            let mut s = base_shape(half, params, rng);
            inscribe(&mut s, &[FRONT_FACE, BACK_FACE], style, params, rng);
            s
        }
        SynthTask::Seal => {
            let mut s = base_shape([1.0, 1.2, 0.4], params, rng);
            inscribe(&mut s, &[FRONT_FACE, BACK_FACE], NEUTRAL, params, rng);
            if class == 1 {
                s.relief = Some(Relief {
                    face: BACK_FACE,
                    radius: 0.45 * s.half[0].min(s.half[1]),
                    height: params.seal_height,
                });
            }
            s
        }
        SynthTask::LeftSign => {
            let mut s = base_shape([1.0, 1.2, 0.4], params, rng);
            inscribe(&mut s, &[FRONT_FACE, BACK_FACE], NEUTRAL, params, rng);
            if class == 1 {
                let style = WedgeStyle {
                    count: (params.wedges_max, params.wedges_max),
                    length: 0.12,
                    depth: 1.0,
                    angle: None,
                };
                inscribe(&mut s, &[LEFT_FACE], style, params, rng);
            }
            s
        }
        SynthTask::Front => {
            let mut s = base_shape([1.0, 1.2, 0.4], params, rng);
            inscribe(&mut s, &[FRONT_FACE, BACK_FACE], NEUTRAL, params, rng);
            s
        }
    }
}

/// Generated tablets with labels filled in for `task`. Front-task tablets
/// are all eligible (written on both faces) with their flat face toward +z.
pub fn synth_tablets(task: SynthTask, n_per_class: usize, params: &SynthParams, rng: &mut Rng) -> Result<Vec<Tablet>> {
    if n_per_class == 0 {
        return Err(Error::Config("n_per_class must be at least 1".into()));
    }
    let classes = if task == SynthTask::Front { 1 } else { task.classes() };
    let mut tablets = Vec::with_capacity(classes * n_per_class);
    for class in 0..classes {
        for i in 0..n_per_class {
            let id = format!("synth-{}-{class}-{i:04}", task_slug(task));
            let mut trng = rng.fork();
            let mesh = synth_shape(task, class, params, &mut trng).mesh(params.resolution, &id)?;
            tablets.push(Tablet {
                source: MeshSource::Memory(Arc::new(mesh)),
                period: (task == SynthTask::Period).then(|| format!("P{class}")),
                seal: (task == SynthTask::Seal).then_some(class == 1),
                left_sign: (task == SynthTask::LeftSign).then_some(class == 1),
                front_eligible: (task == SynthTask::Front).then_some(true),
                id,
            });
        }
    }
    Ok(tablets)
}

fn task_slug(task: SynthTask) -> &'static str {
    match task {
        SynthTask::Period => "period",
        SynthTask::Seal => "seal",
        SynthTask::LeftSign => "leftsign",
        SynthTask::Front => "front",
    }
}

/// Synthetic dataset built through the same task constructors as a real
/// manifest. For the front task `n_per_class` is the number of tablets.
pub fn synth_generate(
    task: SynthTask,
    n_per_class: usize,
    params: &SynthParams,
    loader: &CloudLoader,
    rng: &mut Rng,
) -> Result<TaskDataset> {
    let tablets = synth_tablets(task, n_per_class, params, rng)?;
    let manifest = Manifest::new(tablets)?;
    let split_seed = rng.next_u64();
    match task {
        SynthTask::Period => build_period_dataset(&manifest, SizeVariant::Full747, loader, split_seed),
        SynthTask::Seal => build_binary_dataset(&manifest, BinaryTask::Seal, loader, split_seed),
        SynthTask::LeftSign => build_binary_dataset(&manifest, BinaryTask::LeftSign, loader, split_seed),
        SynthTask::Front => build_front_dataset(&manifest, loader, &mut Rng::new(split_seed)),
    }
}

/// Variance of z over points whose normal points along `direction` (+1 for
/// the +z face, -1 for the -z face). A flat face has lower variance.
pub fn face_height_variance(pc: &PointCloud, direction: f64) -> f64 {
    let zs: Vec<f64> = pc
        .positions()
        .iter()
        .zip(pc.normals())
        .filter(|(_, n)| n[2] * direction > 0.8)
        .map(|(p, _)| p[2])
        .collect();
    if zs.len() < 2 {
        return 0.0;
    }
    let mean = zs.iter().sum::<f64>() / zs.len() as f64;
    zs.iter().map(|z| (z - mean) * (z - mean)).sum::<f64>() / zs.len() as f64
}

/// Primitive surfaces used as a trivially separable multi-class set.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Primitive {
    Sphere,
    Cube,
    Cylinder,
    Plane,
}

impl Primitive {
    pub const ALL: [Primitive; 4] = [Primitive::Sphere, Primitive::Cube, Primitive::Cylinder, Primitive::Plane];

    /// `n` points on the surface with outward unit normals, centered at the
    /// origin and scaled into the unit ball.
    pub fn sample(self, n: usize, rng: &mut Rng) -> Result<PointCloud> {
        let mut pos = Vec::with_capacity(n);
        let mut nrm = Vec::with_capacity(n);
        for _ in 0..n {
            let (p, q) = match self {
                Primitive::Sphere => {
                    let v = [rng.normal(), rng.normal(), rng.normal()];
                    let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt().max(1e-12);
                    let u = v.map(|c| c / r);
                    (u, u)
                }
                Primitive::Cube => {
                    let axis = rng.below(3);
                    let sign = if rng.bernoulli(0.5) { 1.0 } else { -1.0 };
                    let mut p = [rng.uniform_range(-1.0, 1.0), rng.uniform_range(-1.0, 1.0), rng.uniform_range(-1.0, 1.0)];
                    p[axis] = sign;
                    let mut q = [0.0; 3];
                    q[axis] = sign;
                    (p.map(|c| c * 0.57), q)
                }
                Primitive::Cylinder => {
                    let th = rng.uniform_range(0.0, 2.0 * PI);
                    let (s, c) = th.sin_cos();
                    ([0.6 * c, 0.6 * s, rng.uniform_range(-0.8, 0.8)], [c, s, 0.0])
                }
                Primitive::Plane => {
                    let sign = if rng.bernoulli(0.5) { 1.0 } else { -1.0 };
                    ([rng.uniform_range(-0.7, 0.7), rng.uniform_range(-0.7, 0.7), 0.0], [0.0, 0.0, sign])
                }
            };
            pos.push(p);
            nrm.push(q);
        }
        PointCloud::new(pos, nrm)
    }
}

/// `n_per_class` clouds of each of the first `classes` primitives, with
/// labels equal to the primitive index.
pub fn separable_set(classes: usize, n_per_class: usize, n_points: usize, rng: &mut Rng) -> Result<(Vec<PointCloud>, Vec<usize>)> {
    if classes < 2 || classes > Primitive::ALL.len() {
        return Err(Error::Config(format!("separable set supports 2 to 4 classes, got {classes}")));
    }
    let mut clouds = Vec::with_capacity(classes * n_per_class);
    let mut labels = Vec::with_capacity(classes * n_per_class);
    for (c, prim) in Primitive::ALL.iter().take(classes).enumerate() {
        for _ in 0..n_per_class {
            clouds.push(prim.sample(n_points, rng)?);
            labels.push(c);
        }
    }
    Ok((clouds, labels))
}
