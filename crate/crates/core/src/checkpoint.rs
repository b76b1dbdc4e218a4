//! Versioned binary checkpoints.
//!
//! Layout, little-endian:
//!
//! | bytes | content                                  |
//! |-------|------------------------------------------|
//! | 8     | magic `PPCKPT\0\0`                       |
//! | 4     | format version (u32)                     |
//! | 8     | header length in bytes (u64)             |
//! | n     | JSON header: spec, epoch, rng, sections  |
//! | rest  | f64 values of every section, in order    |

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{Model, NetworkSpec};
use crate::ops::Learnable;
use crate::rng::{Rng, RngState};
use crate::train::{Sgd, TrainState};

pub const MAGIC: &[u8; 8] = b"PPCKPT\0\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Kind {
    Param,
    Buffer,
    Velocity,
}

#[derive(Debug, Serialize, Deserialize)]
struct Section {
    kind: Kind,
    name: String,
    len: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    network: NetworkSpec,
    head_dropout: f64,
    training: Option<TrainingHeader>,
    sections: Vec<Section>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TrainingHeader {
    epoch: usize,
    rng: RngState,
    momentum: f64,
    weight_decay: f64,
}

/// A restored model plus, when saved mid-training, the state to resume from.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub state: Option<TrainState>,
}

pub fn to_bytes(model: &Model, state: Option<&TrainState>) -> Vec<u8> {
    let mut sections = Vec::new();
    let mut blob: Vec<f64> = Vec::new();
    let mut push = |kind: Kind, name: String, values: &[f64]| {
        sections.push(Section {
            kind,
            name,
            len: values.len(),
        });
        blob.extend_from_slice(values);
    };
    let params = model.tensors();
    for (name, t) in &params {
        push(Kind::Param, name.clone(), t);
    }
    for (name, t) in model.buffers() {
        push(Kind::Buffer, name, t);
    }
    if let Some(st) = state {
        for ((name, _), v) in params.iter().zip(&st.optimizer.velocity) {
            push(Kind::Velocity, name.clone(), v);
        }
    }
    let header = Header {
        network: model.spec.clone(),
        head_dropout: model.head.dropout,
        training: state.map(|st| TrainingHeader {
            epoch: st.epoch,
            rng: st.rng.state(),
            momentum: st.optimizer.momentum,
            weight_decay: st.optimizer.weight_decay,
        }),
        sections,
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(20 + json.len() + 8 * blob.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for v in blob {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(bad(format!("unsupported format version {version}")));
    }
    let header_len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let body = bytes.get(20..).ok_or_else(|| bad("truncated"))?;
    if header_len > body.len() {
        return Err(bad("truncated header"));
    }
    let header: Header = serde_json::from_slice(&body[..header_len]).map_err(|e| bad(format!("header: {e}")))?;
    let data = &body[header_len..];
    let total: usize = header.sections.iter().map(|s| s.len).sum();
    if data.len() != 8 * total {
        return Err(bad(format!("expected {} data bytes, found {}", 8 * total, data.len())));
    }
    let values: Vec<f64> = data
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();

    let mut model = Model::build(header.network, &mut Rng::new(0))?;
    model.head.dropout = header.head_dropout;
    let param_names: Vec<String> = model.tensors().into_iter().map(|(n, _)| n).collect();
    let buffer_names: Vec<String> = model.buffers().into_iter().map(|(n, _)| n).collect();

    let mut start = 0;
    let mut located = Vec::with_capacity(header.sections.len());
    for sec in &header.sections {
        located.push((sec, &values[start..start + sec.len]));
        start += sec.len;
    }
    let by_kind = |kind: Kind, names: &[String]| -> Result<Vec<&[f64]>> {
        let picked: Vec<_> = located.iter().filter(|(sec, _)| sec.kind == kind).collect();
        if picked.len() != names.len() {
            return Err(bad(format!("{} {kind:?} sections for {} tensors", picked.len(), names.len())));
        }
        picked
            .into_iter()
            .zip(names)
            .map(|((sec, v), name)| {
                if &sec.name == name {
                    Ok(*v)
                } else {
                    Err(bad(format!("section {} where {name} was expected", sec.name)))
                }
            })
            .collect()
    };
    let params = by_kind(Kind::Param, &param_names)?;
    let buffers = by_kind(Kind::Buffer, &buffer_names)?;
    let velocity = if header.training.is_some() {
        by_kind(Kind::Velocity, &param_names)?
    } else {
        Vec::new()
    };

    for (dst, src) in model.tensors_mut().into_iter().zip(&params) {
        if dst.len() != src.len() {
            return Err(bad("parameter length mismatch"));
        }
        dst.copy_from_slice(src);
    }
    for (dst, src) in model.buffers_mut().into_iter().zip(&buffers) {
        if dst.len() != src.len() {
            return Err(bad("buffer length mismatch"));
        }
        dst.copy_from_slice(src);
    }
    let state = match header.training {
        Some(t) => Some(TrainState {
            epoch: t.epoch,
            rng: Rng::from_state(&t.rng).ok_or_else(|| bad("invalid rng state"))?,
            optimizer: Sgd {
                momentum: t.momentum,
                weight_decay: t.weight_decay,
                velocity: velocity.iter().map(|v| v.to_vec()).collect(),
            },
        }),
        None => None,
    };
    Ok(Checkpoint { model, state })
}

/// Writes through a temporary sibling and renames, so a crash never leaves
/// a half-written checkpoint under `path`.
pub fn save(path: &Path, model: &Model, state: Option<&TrainState>) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, to_bytes(model, state)).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}
