//! Learned monocular visual odometry and dense mapping.
//!
//! The crate turns per-frame optical flow and depth rasters into dense 3D
//! flow, regresses 6-DOF inter-frame motion with a small dual-stream
//! convolutional network whose planar translation is parameterized as a
//! bivariate Gaussian, accumulates the predictions into a trajectory,
//! scores trajectories with the standard KITTI sub-sequence protocol, and
//! fuses depth into a probabilistic occupancy octree.

mod bytes;

pub mod error;
pub mod flow;
pub mod geometry;
pub mod kitti;
pub mod loss;
pub mod net;
pub mod octree;

pub use error::{Error, Result};

// Geometry types in the public API are nalgebra vectors/matrices, and the
// sampling/training entry points are generic over rand's `Rng`; re-export
// those crates so downstream code names the same versions.
pub use nalgebra;
pub use rand;
pub use rand_chacha;
