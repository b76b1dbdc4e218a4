use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geometry::io::load_mesh;
use crate::geometry::ppc::{self, Provenance};
use crate::geometry::{Mesh, PointCloud};
use crate::rng::{self, Rng};

use super::manifest::{MeshSource, Tablet};

/// Environment variable overriding the point-cloud cache directory.
pub const CACHE_ENV: &str = "PPC_CACHE_DIR";

/// Materializes tablets as normalized point clouds, one fixed sample per
/// (tablet, seed, point count).
#[derive(Clone, Debug)]
pub struct CloudLoader {
    pub n_points: usize,
    pub seed: u64,
    pub scale: bool,
    pub cache_dir: Option<PathBuf>,
}

/// 64-bit FNV-1a, used to derive per-tablet sampling seeds from ids.
pub fn stable_hash(text: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Rounds a cloud to the precision of the on-disk format so cached and
/// freshly sampled clouds are identical.
fn storage_precision(pc: &PointCloud) -> Result<PointCloud> {
    ppc::decode(&ppc::encode(pc))
}

fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

impl CloudLoader {
    pub fn new(n_points: usize, seed: u64) -> Self {
        Self {
            n_points,
            seed,
            scale: true,
            cache_dir: None,
        }
    }

    /// Uses `$PPC_CACHE_DIR` when set, otherwise `default`.
    pub fn with_cache(mut self, default: Option<PathBuf>) -> Self {
        self.cache_dir = std::env::var_os(CACHE_ENV).map(PathBuf::from).or(default);
        self
    }

    pub fn instance_seed(&self, tablet_id: &str) -> u64 {
        self.seed ^ stable_hash(tablet_id)
    }

    fn provenance(&self, source: String, seed: u64) -> Provenance {
        Provenance {
            source,
            seed,
            rng: rng::ALGORITHM.to_string(),
            n_points: self.n_points,
            centered: true,
            scaled: self.scale,
        }
    }

    pub fn cache_path(&self, tablet_id: &str) -> Option<PathBuf> {
        self.cache_dir.as_ref().map(|d| {
            d.join(format!(
                "{}_{}_{}.ppc",
                sanitize(tablet_id),
                self.instance_seed(tablet_id),
                self.n_points
            ))
        })
    }

    pub fn sample_mesh(&self, mesh: &Mesh, seed: u64) -> Result<PointCloud> {
        let pc = mesh.sample_surface(self.n_points, &mut Rng::new(seed))?;
        storage_precision(&pc.normalized(self.scale))
    }

    pub fn load(&self, tablet: &Tablet) -> Result<PointCloud> {
        let seed = self.instance_seed(&tablet.id);
        match &tablet.source {
            MeshSource::Memory(mesh) => self.sample_mesh(mesh, seed),
            MeshSource::File(path) => {
                let cached = self.cache_path(&tablet.id);
                let want = self.provenance(path.display().to_string(), seed);
                if let Some(c) = &cached {
                    if c.exists() && ppc::load_provenance(c).ok().as_ref() == Some(&want) {
                        if let Ok(pc) = ppc::load(c) {
                            return Ok(pc);
                        }
                    }
                }
                let pc = self.sample_mesh(&load_mesh(path)?, seed)?;
                if let Some(c) = &cached {
                    if let Some(dir) = c.parent() {
                        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                    }
                    ppc::save(c, &pc, &want)?;
                }
                Ok(pc)
            }
        }
    }
}

#[derive(Debug, Default)]
pub struct SampleReport {
    pub written: Vec<PathBuf>,
    pub skipped: Vec<PathBuf>,
    pub errors: Vec<(PathBuf, Error)>,
}

fn is_mesh(path: &Path) -> bool {
    matches!(
        path.extension().map(|e| e.to_string_lossy().to_ascii_lowercase()).as_deref(),
        Some("ply") | Some("obj")
    )
}

/// Samples every PLY/OBJ file in `mesh_dir` into `out_dir/<stem>.ppc` with a
/// provenance sidecar. Outputs whose sidecar matches and that are newer
/// than their mesh are left alone. Per-file failures are collected.
pub fn sample_directory(mesh_dir: &Path, out_dir: &Path, loader: &CloudLoader) -> Result<SampleReport> {
    let mut meshes: Vec<PathBuf> = std::fs::read_dir(mesh_dir)
        .map_err(|e| Error::io(mesh_dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && is_mesh(p))
        .collect();
    meshes.sort();
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut report = SampleReport::default();
    for mesh_path in meshes {
        let stem = mesh_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let out = out_dir.join(format!("{stem}.ppc"));
        let seed = loader.instance_seed(&stem);
        let want = loader.provenance(mesh_path.display().to_string(), seed);
        let fresh = || -> Option<bool> {
            let mesh_time = std::fs::metadata(&mesh_path).ok()?.modified().ok()?;
            let out_time = std::fs::metadata(&out).ok()?.modified().ok()?;
            Some(out_time >= mesh_time && ppc::load_provenance(&out).ok()? == want)
        };
        if fresh().unwrap_or(false) {
            report.skipped.push(out);
            continue;
        }
        match load_mesh(&mesh_path).and_then(|m| loader.sample_mesh(&m, seed)) {
            Ok(pc) => match ppc::save(&out, &pc, &want) {
                Ok(()) => report.written.push(out),
                Err(e) => report.errors.push((mesh_path, e)),
            },
            Err(e) => {
                log::warn!("{}: {e}", mesh_path.display());
                report.errors.push((mesh_path, e));
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::io::write_ply;
    use std::sync::Arc;

    fn tetra() -> Mesh {
        Mesh::new(
            "tetra",
            vec![[0., 0., 0.], [1., 0., 0.], [0., 1., 0.], [0., 0., 1.]],
            vec![[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]],
        )
        .unwrap()
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(stable_hash(""), 0xcbf29ce484222325);
        assert_eq!(stable_hash("a"), 0xaf63dc4c8601ec8c);
    }

    #[test]
    fn cache_hit_equals_fresh_sample() {
        let dir = tempfile::tempdir().unwrap();
        let mesh_path = dir.path().join("t.ply");
        write_ply(&mesh_path, &tetra()).unwrap();
        let tablet = Tablet {
            id: "T 1".into(),
            source: MeshSource::File(mesh_path),
            period: None,
            seal: None,
            left_sign: None,
            front_eligible: None,
        };
        let mut loader = CloudLoader::new(200, 5);
        loader.cache_dir = Some(dir.path().join("cache"));
        let first = loader.load(&tablet).unwrap();
        let path = loader.cache_path("T 1").unwrap();
        assert!(path.exists());
        assert!(path.file_name().unwrap().to_string_lossy().starts_with("T_1_"));
        let second = loader.load(&tablet).unwrap();
        assert_eq!(first, second);
        let memory = Tablet {
            source: MeshSource::Memory(Arc::new(tetra())),
            ..tablet
        };
        assert_eq!(loader.load(&memory).unwrap(), first);
    }

    #[test]
    fn sample_directory_is_idempotent_and_collects_errors() {
        let dir = tempfile::tempdir().unwrap();
        let meshes = dir.path().join("meshes");
        std::fs::create_dir(&meshes).unwrap();
        write_ply(&meshes.join("a.ply"), &tetra()).unwrap();
        std::fs::write(meshes.join("broken.ply"), b"ply\ngarbage").unwrap();
        std::fs::write(meshes.join("notes.txt"), b"hello").unwrap();
        let out = dir.path().join("out");
        let loader = CloudLoader::new(50, 1);
        let r = sample_directory(&meshes, &out, &loader).unwrap();
        assert_eq!(r.written.len(), 1);
        assert_eq!(r.errors.len(), 1);
        let r = sample_directory(&meshes, &out, &loader).unwrap();
        assert_eq!((r.written.len(), r.skipped.len()), (0, 1));
        let empty = dir.path().join("empty");
        std::fs::create_dir(&empty).unwrap();
        let r = sample_directory(&empty, &out, &loader).unwrap();
        assert!(r.written.is_empty() && r.errors.is_empty());
    }
}
