//! Points, clouds, rigid transforms and spatial queries.

mod cloud;
mod kdtree;
mod pose;
pub mod so3;
mod voxel;

pub use cloud::{transform_cloud, PointCloud};
pub use kdtree::{nearest_distance, SpatialIndex};
pub use pose::Pose;
pub use voxel::{voxel_downsample, voxel_key, VoxelKey};

/// A point in meters.
pub type Point3 = nalgebra::Point3<f64>;
/// A free vector in meters (or radians, for rotation vectors).
pub type Vector3 = nalgebra::Vector3<f64>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("point {index} has a non-finite coordinate")]
    NonFinitePoint { index: usize },
    #[error("voxel resolution must be positive, got {0}")]
    NonPositiveResolution(f64),
    #[error("nearest-neighbour query on an empty cloud")]
    EmptyIndex,
}

#[inline]
pub(crate) fn is_finite_point(p: &Point3) -> bool {
    p.x.is_finite() && p.y.is_finite() && p.z.is_finite()
}

#[inline]
pub(crate) fn distance_squared(a: &Point3, b: &Point3) -> f64 {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    let dz = a.z - b.z;
    dx * dx + dy * dy + dz * dz
}
