//! `PPC1` point-cloud files: a 12-byte header (magic, u32 point count, u32
//! channel count = 6) followed by little-endian f32 rows `x y z nx ny nz`,
//! plus a JSON provenance sidecar.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PointCloud;

pub const MAGIC: &[u8; 4] = b"PPC1";
pub const CHANNELS: u32 = 6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub source: String,
    pub seed: u64,
    pub rng: String,
    pub n_points: usize,
    pub centered: bool,
    pub scaled: bool,
}

pub fn encode(pc: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + pc.len() * 24);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(pc.len() as u32).to_le_bytes());
    out.extend_from_slice(&CHANNELS.to_le_bytes());
    for (p, n) in pc.positions().iter().zip(pc.normals()) {
        for v in p.iter().chain(n) {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<PointCloud> {
    let bad = |msg: &str| Error::UnsupportedFormat(format!("PPC1: {msg}"));
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return Err(bad("missing magic"));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
    let n = word(4) as usize;
    if word(8) != CHANNELS {
        return Err(bad("expected 6 channels"));
    }
    if bytes.len() != 12 + n * 24 {
        return Err(bad("length does not match header"));
    }
    let mut positions = Vec::with_capacity(n);
    let mut normals = Vec::with_capacity(n);
    for row in bytes[12..].chunks_exact(24) {
        let f = |k: usize| f32::from_le_bytes(row[k * 4..k * 4 + 4].try_into().unwrap()) as f64;
        positions.push([f(0), f(1), f(2)]);
        normals.push([f(3), f(4), f(5)]);
    }
    PointCloud::new(positions, normals)
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

pub fn save(path: &Path, pc: &PointCloud, provenance: &Provenance) -> Result<()> {
    fs::write(path, encode(pc)).map_err(|e| Error::io(path, e))?;
    let side = sidecar_path(path);
    let json = serde_json::to_string_pretty(provenance).expect("provenance serializes");
    fs::write(&side, json).map_err(|e| Error::io(side, e))
}

pub fn load(path: &Path) -> Result<PointCloud> {
    decode(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

pub fn load_provenance(path: &Path) -> Result<Provenance> {
    let side = sidecar_path(path);
    let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    serde_json::from_str(&text).map_err(|e| Error::UnsupportedFormat(format!("{}: {e}", side.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout_is_fixed() {
        let pc = PointCloud::new(vec![[1.0, 2.0, 3.0]], vec![[0.0, 1.0, 0.0]]).unwrap();
        let bytes = encode(&pc);
        assert_eq!(&bytes[..4], b"PPC1");
        assert_eq!(&bytes[4..8], &1u32.to_le_bytes());
        assert_eq!(&bytes[8..12], &6u32.to_le_bytes());
        assert_eq!(&bytes[12..16], &1.0f32.to_le_bytes());
        assert_eq!(&bytes[28..32], &1.0f32.to_le_bytes());
        assert_eq!(bytes.len(), 36);
        assert_eq!(decode(&bytes).unwrap(), pc);
    }

    #[test]
    fn rejects_wrong_magic_and_length() {
        let pc = PointCloud::new(vec![[1.0, 2.0, 3.0]], vec![[0.0, 1.0, 0.0]]).unwrap();
        let mut bytes = encode(&pc);
        bytes.pop();
        assert!(decode(&bytes).is_err());
        bytes[0] = b'X';
        assert!(decode(&bytes).is_err());
    }

    #[test]
    fn sidecar_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ppc");
        let pc = PointCloud::new(vec![[0.5, 0.25, 0.0]; 3], vec![[1.0, 0.0, 0.0]; 3]).unwrap();
        let prov = Provenance {
            source: "a.ply".into(),
            seed: 3,
            rng: "chacha8".into(),
            n_points: 3,
            centered: true,
            scaled: true,
        };
        save(&path, &pc, &prov).unwrap();
        assert_eq!(load(&path).unwrap(), pc);
        assert_eq!(load_provenance(&path).unwrap(), prov);
    }
}
