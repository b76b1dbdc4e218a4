//! The spatial-pyramid classifier: declarative spec, parameter container,
//! forward pass and its adjoint.

mod model;
mod spec;

pub use model::{gather_prefix, Model, Tape};
pub use spec::{Ablation, LayerSpec, NetworkSpec, TopSpec};
