//! Classification tasks built from a labeled mesh manifest or from
//! procedurally generated tablets.

mod cache;
mod manifest;
mod synth;
mod tasks;

pub use cache::{sample_directory, stable_hash, CloudLoader, SampleReport, CACHE_ENV};
pub use manifest::{Manifest, MeshSource, Split, Tablet, MANIFEST_COLUMNS};
pub use synth::{face_height_variance, separable_set, synth_generate, synth_tablets, Primitive, SynthParams, SynthTask};
pub use tasks::{
    build_binary_dataset, build_front_dataset, build_period_dataset, sibling_pairs, test_count, BinaryTask, Instance,
    SizeVariant, Task, TaskDataset, BACK, FRONT, MEDIUM_VERTEX_LIMIT, SMALL_CLASS_CAP, TEST_FRACTION,
};
