//! Hierarchical point-cloud classification with spatial-pyramid neighbor
//! convolutions and a feature-space edge convolution on top.

pub mod data;
pub mod checkpoint;
pub mod config;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod neighbors;
pub mod net;
pub mod ops;
pub mod rng;
pub mod run;
pub mod train;

pub use error::{Error, Result};
pub use geometry::PointCloud;
pub use net::{Ablation, Model, NetworkSpec};
pub use rng::Rng;
