use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Mesh;

/// Where a tablet's surface comes from.
#[derive(Clone, Debug)]
pub enum MeshSource {
    File(PathBuf),
    Memory(Arc<Mesh>),
}

#[derive(Clone, Debug)]
pub struct Tablet {
    pub id: String,
    pub source: MeshSource,
    pub period: Option<String>,
    pub seal: Option<bool>,
    pub left_sign: Option<bool>,
    pub front_eligible: Option<bool>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Debug, Default)]
pub struct Manifest {
    pub tablets: Vec<Tablet>,
    /// Externally fixed split by tablet id; tablets not listed fall back to
    /// the seeded split.
    pub split: Option<BTreeMap<String, Split>>,
}

pub const MANIFEST_COLUMNS: [&str; 6] = ["mesh_path", "tablet_id", "period", "seal", "left_sign", "front_eligible"];

fn parse_flag(raw: &str, column: &str, line: u64) -> Result<Option<bool>> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "" => Ok(None),
        "1" | "true" | "yes" | "y" => Ok(Some(true)),
        "0" | "false" | "no" | "n" => Ok(Some(false)),
        other => Err(Error::Data(format!("line {line}: bad {column} flag {other:?}"))),
    }
}

impl Manifest {
    pub fn new(tablets: Vec<Tablet>) -> Result<Self> {
        let m = Self { tablets, split: None };
        m.check_unique()?;
        Ok(m)
    }

    /// Reads the CSV manifest. Relative mesh paths resolve against the
    /// manifest's directory; label columns may be absent or blank.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let headers = reader
            .headers()
            .map_err(|e| Error::Data(format!("manifest header: {e}")))?
            .clone();
        let col = |name: &str| headers.iter().position(|h| h == name);
        for h in headers.iter() {
            if !MANIFEST_COLUMNS.contains(&h) {
                return Err(Error::Data(format!("unknown manifest column {h:?}")));
            }
        }
        let (Some(path_col), Some(id_col)) = (col("mesh_path"), col("tablet_id")) else {
            return Err(Error::Data("manifest needs mesh_path and tablet_id columns".into()));
        };
        let (period_col, seal_col, left_col, front_col) =
            (col("period"), col("seal"), col("left_sign"), col("front_eligible"));
        let mut tablets = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| Error::Data(format!("manifest: {e}")))?;
            let line = record.position().map_or(0, |p| p.line());
            let get = |c: Option<usize>| c.and_then(|c| record.get(c)).unwrap_or("");
            let id = get(Some(id_col)).to_string();
            if id.is_empty() {
                return Err(Error::Data(format!("line {line}: empty tablet_id")));
            }
            let mesh = PathBuf::from(get(Some(path_col)));
            let period = get(period_col);
            tablets.push(Tablet {
                id,
                source: MeshSource::File(if mesh.is_absolute() { mesh } else { base.join(mesh) }),
                period: (!period.is_empty()).then(|| period.to_string()),
                seal: parse_flag(get(seal_col), "seal", line)?,
                left_sign: parse_flag(get(left_col), "left_sign", line)?,
                front_eligible: parse_flag(get(front_col), "front_eligible", line)?,
            });
        }
        Self::new(tablets)
    }

    /// Attaches a `tablet_id,split` CSV (split is `train` or `test`).
    pub fn with_split_file(mut self, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let mut split = BTreeMap::new();
        for row in reader.deserialize::<(String, Split)>() {
            let (id, s) = row.map_err(|e| Error::Data(format!("split file: {e}")))?;
            if split.insert(id.clone(), s).is_some() {
                return Err(Error::Data(format!("split file lists {id:?} twice")));
            }
        }
        for id in split.keys() {
            if !self.tablets.iter().any(|t| &t.id == id) {
                return Err(Error::Data(format!("split file names unknown tablet {id:?}")));
            }
        }
        self.split = Some(split);
        Ok(self)
    }

    fn check_unique(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for t in &self.tablets {
            if !seen.insert(t.id.as_str()) {
                return Err(Error::Data(format!("duplicate tablet_id {:?}", t.id)));
            }
        }
        Ok(())
    }
}
