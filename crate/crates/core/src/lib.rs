//! Octree point cloud geometry codec driven by voxel-context entropy models.

// `!(x > 0.0)` style checks are meant to reject NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod coder;
pub mod dynamic;
pub mod entropy;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod octree;
pub mod pointcloud;
pub mod refine;
pub mod rng;
pub mod voxel;

pub use error::{Error, Result};
