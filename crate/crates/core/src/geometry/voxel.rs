use alloc::vec::Vec;

use super::{GeometryError, Point3, PointCloud, Vector3};

/// Integer voxel coordinates: `floor(coord / resolution)` per axis.
pub type VoxelKey = [i64; 3];

/// Points on a voxel boundary belong to the higher-index voxel.
#[inline]
pub fn voxel_key(p: &Point3, resolution: f64) -> VoxelKey {
    [
        libm::floor(p.x / resolution) as i64,
        libm::floor(p.y / resolution) as i64,
        libm::floor(p.z / resolution) as i64,
    ]
}

/// Replaces the points of every occupied voxel of edge `resolution` by their
/// centroid. Output is ordered by ascending voxel key.
pub fn voxel_downsample(cloud: &PointCloud, resolution: f64) -> Result<PointCloud, GeometryError> {
    if !(resolution > 0.0) || !resolution.is_finite() {
        return Err(GeometryError::NonPositiveResolution(resolution));
    }
    let mut keyed: Vec<(VoxelKey, u32)> = cloud
        .points()
        .iter()
        .enumerate()
        .map(|(i, p)| (voxel_key(p, resolution), i as u32))
        .collect();
    keyed.sort_unstable();

    let pts = cloud.points();
    let mut out = Vec::new();
    let mut start = 0;
    while start < keyed.len() {
        let key = keyed[start].0;
        let mut end = start;
        let mut sum = Vector3::zeros();
        while end < keyed.len() && keyed[end].0 == key {
            sum += pts[keyed[end].1 as usize].coords;
            end += 1;
        }
        out.push(Point3::from(sum / (end - start) as f64));
        start = end;
    }
    Ok(PointCloud::from_points_unchecked(out, cloud.frame_id()))
}
