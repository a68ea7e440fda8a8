use alloc::string::String;
use alloc::vec::Vec;

use super::{is_finite_point, GeometryError, Point3, Pose};

/// An ordered list of finite points tagged with the frame they live in.
///
/// Filters and transforms never reorder points; subsets keep the relative
/// order of the source.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    points: Vec<Point3>,
    frame_id: String,
}

impl PointCloud {
    pub fn new(frame_id: impl Into<String>) -> Self {
        Self { points: Vec::new(), frame_id: frame_id.into() }
    }

    /// Builds a cloud, rejecting any point with a NaN or infinite coordinate.
    pub fn from_points(
        points: Vec<Point3>,
        frame_id: impl Into<String>,
    ) -> Result<Self, GeometryError> {
        if let Some(index) = points.iter().position(|p| !is_finite_point(p)) {
            return Err(GeometryError::NonFinitePoint { index });
        }
        Ok(Self { points, frame_id: frame_id.into() })
    }

    /// Caller guarantees every point is finite.
    pub(crate) fn from_points_unchecked(points: Vec<Point3>, frame_id: impl Into<String>) -> Self {
        debug_assert!(points.iter().all(is_finite_point));
        Self { points, frame_id: frame_id.into() }
    }

    pub fn push(&mut self, p: Point3) -> Result<(), GeometryError> {
        if !is_finite_point(&p) {
            return Err(GeometryError::NonFinitePoint { index: self.points.len() });
        }
        self.points.push(p);
        Ok(())
    }

    pub fn extend_from(&mut self, other: &PointCloud) {
        self.points.extend_from_slice(&other.points);
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Point3> {
        self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn frame_id(&self) -> &str {
        &self.frame_id
    }

    pub fn with_frame_id(mut self, frame_id: impl Into<String>) -> Self {
        self.frame_id = frame_id.into();
        self
    }

    pub fn iter(&self) -> core::slice::Iter<'_, Point3> {
        self.points.iter()
    }

    /// Stable subset of the points for which `keep` returns true.
    pub fn filter(&self, mut keep: impl FnMut(&Point3) -> bool) -> PointCloud {
        let points = self.points.iter().filter(|p| keep(p)).copied().collect();
        Self { points, frame_id: self.frame_id.clone() }
    }

    /// Stable subset selected by a per-point mask of the same length.
    pub fn select(&self, mask: &[bool]) -> PointCloud {
        assert_eq!(mask.len(), self.points.len(), "mask length mismatch");
        let points = self
            .points
            .iter()
            .zip(mask)
            .filter_map(|(p, &m)| m.then_some(*p))
            .collect();
        Self { points, frame_id: self.frame_id.clone() }
    }
}

impl<'a> IntoIterator for &'a PointCloud {
    type Item = &'a Point3;
    type IntoIter = core::slice::Iter<'a, Point3>;

    fn into_iter(self) -> Self::IntoIter {
        self.points.iter()
    }
}

/// Applies `pose` to every point: `out[i] = q * cloud[i] + t`.
pub fn transform_cloud(cloud: &PointCloud, pose: &Pose) -> PointCloud {
    let points = cloud.points.iter().map(|p| pose.transform_point(p)).collect();
    PointCloud { points, frame_id: cloud.frame_id.clone() }
}
