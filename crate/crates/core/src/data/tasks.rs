use std::collections::{BTreeMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::rng::Rng;

use super::cache::CloudLoader;
use super::manifest::{Manifest, MeshSource, Split, Tablet};

/// Vertex limit that defined the mid-sized period training set in earlier
/// work (larger scans did not fit in memory there).
pub const MEDIUM_VERTEX_LIMIT: usize = 2_414_753;
/// Per-class cap of the small period training set.
pub const SMALL_CLASS_CAP: usize = 100;
/// Fraction of tablets held out when no split file is given.
pub const TEST_FRACTION: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SizeVariant {
    Small337,
    Medium631,
    Full747,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinaryTask {
    Seal,
    LeftSign,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Task {
    Period { variant: SizeVariant },
    Seal,
    LeftSign,
    Front,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Period { .. } => "period",
            Task::Seal => "seal",
            Task::LeftSign => "left_sign",
            Task::Front => "front",
        }
    }

    pub fn is_binary(self) -> bool {
        !matches!(self, Task::Period { .. })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub tablet_id: String,
    pub cloud: PointCloud,
    pub label: usize,
}

#[derive(Clone, Debug)]
pub struct TaskDataset {
    pub task: Task,
    pub class_names: Vec<String>,
    pub instances: Vec<Instance>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

pub const FRONT: usize = 1;
pub const BACK: usize = 0;

impl TaskDataset {
    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    /// Per-class counts over the training split.
    pub fn class_counts(&self) -> Vec<usize> {
        self.counts(&self.train)
    }

    pub fn test_class_counts(&self) -> Vec<usize> {
        self.counts(&self.test)
    }

    fn counts(&self, idx: &[usize]) -> Vec<usize> {
        let mut c = vec![0; self.num_classes()];
        for &i in idx {
            c[self.instances[i].label] += 1;
        }
        c
    }

    pub fn train_set(&self) -> (Vec<&PointCloud>, Vec<usize>) {
        self.subset(&self.train)
    }

    pub fn test_set(&self) -> (Vec<&PointCloud>, Vec<usize>) {
        self.subset(&self.test)
    }

    pub fn subset(&self, idx: &[usize]) -> (Vec<&PointCloud>, Vec<usize>) {
        idx.iter()
            .map(|&i| (&self.instances[i].cloud, self.instances[i].label))
            .unzip()
    }

    pub fn tablet_ids(&self, idx: &[usize]) -> Vec<&str> {
        idx.iter().map(|&i| self.instances[i].tablet_id.as_str()).collect()
    }

    /// Splits are disjoint, in range, labels valid, and no tablet appears
    /// on both sides.
    pub fn check(&self) -> Result<()> {
        let n = self.instances.len();
        let mut seen = vec![false; n];
        for &i in self.train.iter().chain(&self.test) {
            if i >= n || seen[i] {
                return Err(Error::Data(format!("split index {i} out of range or repeated")));
            }
            seen[i] = true;
        }
        if let Some(bad) = self.instances.iter().find(|x| x.label >= self.num_classes()) {
            return Err(Error::Data(format!("label {} out of range", bad.label)));
        }
        let train_ids: HashSet<&str> = self.tablet_ids(&self.train).into_iter().collect();
        if let Some(id) = self.tablet_ids(&self.test).into_iter().find(|id| train_ids.contains(id)) {
            return Err(Error::Data(format!("tablet {id:?} leaks between train and test")));
        }
        Ok(())
    }
}

/// Seeded split of tablet indices per class: `round(TEST_FRACTION * n)` of
/// each group (at least one when the group has two or more) go to test.
fn seeded_split(groups: &BTreeMap<usize, Vec<usize>>, rng: &mut Rng) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for members in groups.values() {
        let mut m = members.clone();
        rng.shuffle(&mut m);
        let n_test = test_count(m.len());
        test.extend_from_slice(&m[..n_test]);
        train.extend_from_slice(&m[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

pub fn test_count(n: usize) -> usize {
    if n < 2 {
        0
    } else {
        ((n as f64 * TEST_FRACTION).round() as usize).max(1)
    }
}

/// Train/test tablet indices, from the manifest's split file when present.
fn split_tablets(
    manifest: &Manifest,
    rows: &[usize],
    labels: &[usize],
    stratify: bool,
    rng: &mut Rng,
) -> (Vec<usize>, Vec<usize>) {
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (k, (&row, &label)) in rows.iter().zip(labels).enumerate() {
        let fixed = manifest
            .split
            .as_ref()
            .and_then(|s| s.get(&manifest.tablets[row].id));
        match fixed {
            Some(Split::Train) => train.push(k),
            Some(Split::Test) => test.push(k),
            None => groups.entry(if stratify { label } else { 0 }).or_default().push(k),
        }
    }
    let (tr, te) = seeded_split(&groups, rng);
    train.extend(tr);
    test.extend(te);
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

fn load_all(tablets: &[&Tablet], loader: &CloudLoader) -> Result<Vec<PointCloud>> {
    tablets
        .par_iter()
        .map(|t| {
            loader.load(t).map_err(|e| match e {
                Error::Io { .. } | Error::UnsupportedFormat(_) | Error::InvalidMesh(_) => {
                    Error::Data(format!("tablet {}: {e}", t.id))
                }
                other => other,
            })
        })
        .collect()
}

fn vertex_count(tablet: &Tablet) -> Result<usize> {
    match &tablet.source {
        MeshSource::Memory(mesh) => Ok(mesh.vertices.len()),
        MeshSource::File(path) => crate::geometry::io::vertex_count(path),
    }
}

/// Four-period (or however many periods the manifest names) dataset. The
/// test split depends only on the manifest and seed, so it is shared by
/// every size variant; `Medium631` drops training tablets above
/// [`MEDIUM_VERTEX_LIMIT`] vertices and `Small337` further caps every class
/// at [`SMALL_CLASS_CAP`].
pub fn build_period_dataset(
    manifest: &Manifest,
    variant: SizeVariant,
    loader: &CloudLoader,
    seed: u64,
) -> Result<TaskDataset> {
    let rows: Vec<usize> = (0..manifest.tablets.len())
        .filter(|&i| manifest.tablets[i].period.is_some())
        .collect();
    if rows.is_empty() {
        return Err(Error::Data("manifest has no period labels".into()));
    }
    let names: Vec<String> = rows
        .iter()
        .map(|&i| manifest.tablets[i].period.clone().expect("filtered"))
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    if names.len() < 2 {
        return Err(Error::Data(format!("degenerate task: only period {:?}", names[0])));
    }
    let labels: Vec<usize> = rows
        .iter()
        .map(|&i| {
            let p = manifest.tablets[i].period.as_ref().expect("filtered");
            names.iter().position(|n| n == p).expect("collected")
        })
        .collect();
    let mut rng = Rng::new(seed);
    let (mut train, test) = split_tablets(manifest, &rows, &labels, true, &mut rng);

    if variant != SizeVariant::Full747 {
        let mut keep = Vec::with_capacity(train.len());
        for &k in &train {
            if vertex_count(&manifest.tablets[rows[k]])? <= MEDIUM_VERTEX_LIMIT {
                keep.push(k);
            }
        }
        train = keep;
    }
    if variant == SizeVariant::Small337 {
        let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for &k in &train {
            by_class.entry(labels[k]).or_default().push(k);
        }
        let mut cap_rng = Rng::new(seed).fork();
        train = by_class
            .into_values()
            .flat_map(|mut members| {
                cap_rng.shuffle(&mut members);
                members.truncate(SMALL_CLASS_CAP);
                members
            })
            .collect();
        train.sort_unstable();
    }
    for c in 0..names.len() {
        if !train.iter().any(|&k| labels[k] == c) {
            return Err(Error::Data(format!(
                "period {:?} has no training tablets in the {variant:?} variant",
                names[c]
            )));
        }
    }

    let used: Vec<usize> = train.iter().chain(&test).copied().collect();
    let tablets: Vec<&Tablet> = used.iter().map(|&k| &manifest.tablets[rows[k]]).collect();
    let clouds = load_all(&tablets, loader)?;
    let instances: Vec<Instance> = used
        .iter()
        .zip(clouds)
        .map(|(&k, cloud)| Instance {
            tablet_id: manifest.tablets[rows[k]].id.clone(),
            cloud,
            label: labels[k],
        })
        .collect();
    let ds = TaskDataset {
        task: Task::Period { variant },
        class_names: names,
        train: (0..train.len()).collect(),
        test: (train.len()..used.len()).collect(),
        instances,
    };
    ds.check()?;
    Ok(ds)
}

/// Presence/absence task; class 0 is absent, class 1 present.
pub fn build_binary_dataset(
    manifest: &Manifest,
    task: BinaryTask,
    loader: &CloudLoader,
    seed: u64,
) -> Result<TaskDataset> {
    let flag = |t: &Tablet| match task {
        BinaryTask::Seal => t.seal,
        BinaryTask::LeftSign => t.left_sign,
    };
    let rows: Vec<usize> = (0..manifest.tablets.len())
        .filter(|&i| flag(&manifest.tablets[i]).is_some())
        .collect();
    if rows.is_empty() {
        return Err(Error::Data(format!("manifest has no {task:?} flags")));
    }
    let labels: Vec<usize> = rows
        .iter()
        .map(|&i| flag(&manifest.tablets[i]).expect("filtered") as usize)
        .collect();
    let positives = labels.iter().filter(|&&l| l == 1).count();
    if positives == 0 || positives == labels.len() {
        return Err(Error::Data(format!("degenerate task: every {task:?} flag is equal")));
    }
    let mut rng = Rng::new(seed);
    let (train, test) = split_tablets(manifest, &rows, &labels, true, &mut rng);
    let used: Vec<usize> = train.iter().chain(&test).copied().collect();
    let tablets: Vec<&Tablet> = used.iter().map(|&k| &manifest.tablets[rows[k]]).collect();
    let clouds = load_all(&tablets, loader)?;
    let instances = used
        .iter()
        .zip(clouds)
        .map(|(&k, cloud)| Instance {
            tablet_id: manifest.tablets[rows[k]].id.clone(),
            cloud,
            label: labels[k],
        })
        .collect();
    let ds = TaskDataset {
        task: match task {
            BinaryTask::Seal => Task::Seal,
            BinaryTask::LeftSign => Task::LeftSign,
        },
        class_names: vec!["absent".into(), "present".into()],
        train: (0..train.len()).collect(),
        test: (train.len()..used.len()).collect(),
        instances,
    };
    ds.check()?;
    Ok(ds)
}

/// Two instances per eligible tablet: the scan as captured (front) and its
/// 180-degree rotation about x (back). Both land in the same split.
pub fn build_front_dataset(manifest: &Manifest, loader: &CloudLoader, rng: &mut Rng) -> Result<TaskDataset> {
    let rows: Vec<usize> = (0..manifest.tablets.len())
        .filter(|&i| manifest.tablets[i].front_eligible == Some(true))
        .collect();
    if rows.is_empty() {
        return Err(Error::Data("no front-eligible tablets".into()));
    }
    let zeros = vec![0; rows.len()];
    let (train, test) = split_tablets(manifest, &rows, &zeros, false, rng);
    let used: Vec<usize> = train.iter().chain(&test).copied().collect();
    let tablets: Vec<&Tablet> = used.iter().map(|&k| &manifest.tablets[rows[k]]).collect();
    let clouds = load_all(&tablets, loader)?;
    let mut instances = Vec::with_capacity(2 * used.len());
    for (t, cloud) in tablets.iter().zip(clouds) {
        let flipped = cloud.rotated_x_180();
        instances.push(Instance {
            tablet_id: t.id.clone(),
            cloud,
            label: FRONT,
        });
        instances.push(Instance {
            tablet_id: t.id.clone(),
            cloud: flipped,
            label: BACK,
        });
    }
    let ds = TaskDataset {
        task: Task::Front,
        class_names: vec!["back".into(), "front".into()],
        train: (0..2 * train.len()).collect(),
        test: (2 * train.len()..2 * used.len()).collect(),
        instances,
    };
    ds.check()?;
    Ok(ds)
}

/// Pairs of (front, back) instance indices sharing a tablet, in `idx` order.
pub fn sibling_pairs(ds: &TaskDataset, idx: &[usize]) -> Vec<(usize, usize)> {
    let mut by_tablet: BTreeMap<&str, (Option<usize>, Option<usize>)> = BTreeMap::new();
    let mut order = Vec::new();
    for &i in idx {
        let inst = &ds.instances[i];
        let e = by_tablet.entry(inst.tablet_id.as_str()).or_insert_with(|| {
            order.push(inst.tablet_id.as_str());
            (None, None)
        });
        if inst.label == FRONT {
            e.0 = Some(i);
        } else {
            e.1 = Some(i);
        }
    }
    order
        .into_iter()
        .filter_map(|id| match by_tablet[id] {
            (Some(f), Some(b)) => Some((f, b)),
            _ => None,
        })
        .collect()
}
