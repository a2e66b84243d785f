//! Monocular SLAM backend: SE(3) geometry, UKF scale correction, classical
//! translation estimation, pose-graph optimization, TSDF fusion, and a full
//! trajectory/depth evaluation toolkit, verified end to end against a
//! synthetic-scene oracle.

pub mod camera;
pub mod error;
pub mod features;
pub mod geometry;
pub mod scale;
pub mod trajectory;

pub use error::{Error, Result};
