//! Change detection between an outdated prior point cloud and a cloud
//! rebuilt from stereo depth and poses.
//!
//! The crate is `no_std` with `alloc`. Everything here is pure computation over
//! in-memory data; file formats and the command line live in the `cloudiff`
//! crate.
//!
//! Pipeline overview:
//!
//! 1. [`depth`] filters per-keyframe depth images over a window of neighbours.
//! 2. [`registration`] aligns local clouds against the prior map with GICP and
//!    extracts a covariance from the Gauss-Newton normal matrix.
//! 3. [`pose_graph`] fuses odometry with accepted prior localizations.
//! 4. [`occupancy`] ray casts the filtered depth into a three-state octree to
//!    obtain the observed area.
//! 5. [`change_detect`] classifies new and removed points.
//! 6. [`evaluation`] scores detections against ground truth.
//!
//! [`synthworld`] generates box-world scenes, trajectories and noisy sensor
//! streams to drive all of the above, and [`pipeline`] wires the stages
//! together.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod change_detect;
pub mod depth;
pub mod evaluation;
pub mod geometry;
pub mod occupancy;
pub mod par;
pub mod pipeline;
pub mod pose_graph;
pub mod registration;
pub mod synthworld;

pub use geometry::{Point3, PointCloud, Pose, SpatialIndex, Vector3};
