//! Point-cloud registration and map merging for multi-robot mapping, with
//! an energy model for choosing where to split a robot's localization
//! pipeline between the robot and the cloud.
//!
//! Registration engines: classic point-to-point ICP, point-to-plane ICP and
//! FS-HICP, a coarse-to-fine ICP driven by the fitness score.

pub mod error;
pub mod evaluation;
pub mod filtering;
pub mod geometry;
pub mod io;
pub mod keyframe;
pub mod map_pipeline;
pub mod offload_planner;
pub mod registration;
pub mod spatial_index;
pub mod synthetic;

pub use error::{Error, Result};
pub use geometry::{Point3, PointCloud, RigidTransform};
pub use keyframe::{KeyPoint, KeyframePayload};
pub use registration::{Algorithm, FsHicpParams, IcpParams, RegistrationResult, RegistrationTrace};
pub use spatial_index::KdTree;
