//! Pinhole depth images, cross-keyframe re-projection and the temporal filter.
//!
//! Camera frames follow the usual vision convention: `x` right, `y` down, `z`
//! along the optical axis. Depth is the `z` coordinate of the observed point,
//! not the ray length. Pixel `(u, v)` refers to the ray through the pixel
//! center at image coordinates `(u, v)`.

mod filter;

pub use filter::{temporal_filter, temporal_filter_sequence, FilterConfig};

use alloc::vec;
use alloc::vec::Vec;

use crate::geometry::{Point3, PointCloud, Pose, Vector3};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DepthError {
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(&'static str),
    #[error("depth buffer has {got} values, expected {expected}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("depth value at pixel {index} is negative or not finite")]
    InvalidDepth { index: usize },
    #[error("keyframes use different intrinsics")]
    IntrinsicsMismatch,
    #[error("window does not contain keyframe {0}")]
    MissingCenter(u64),
    #[error("invalid filter config: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self, DepthError> {
        let k = Self { fx, fy, cx, cy, width, height };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), DepthError> {
        if !(self.fx > 0.0 && self.fy > 0.0) || !self.fx.is_finite() || !self.fy.is_finite() {
            return Err(DepthError::InvalidIntrinsics("focal lengths must be positive"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(DepthError::InvalidIntrinsics("image must be non-empty"));
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64 && self.cy >= 0.0 && self.cy < self.height as f64) {
            return Err(DepthError::InvalidIntrinsics("principal point outside the image"));
        }
        Ok(())
    }

    /// Camera-frame direction through pixel `(u, v)` with unit `z`.
    #[inline]
    pub fn ray(&self, u: usize, v: usize) -> Vector3 {
        Vector3::new((u as f64 - self.cx) / self.fx, (v as f64 - self.cy) / self.fy, 1.0)
    }

    /// Continuous image coordinates of a camera-frame point, if in front of the camera.
    #[inline]
    pub fn project(&self, p: &Point3) -> Option<(f64, f64)> {
        (p.z > 0.0).then(|| (self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy))
    }

    /// Nearest pixel for continuous coordinates, if inside the image.
    #[inline]
    pub fn pixel(&self, u: f64, v: f64) -> Option<(usize, usize)> {
        let (ur, vr) = (libm::round(u), libm::round(v));
        (ur >= 0.0 && vr >= 0.0 && ur < self.width as f64 && vr < self.height as f64)
            .then_some((ur as usize, vr as usize))
    }
}

/// Row-major depth grid. `0.0` marks a pixel without depth.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl DepthImage {
    pub const EMPTY: f64 = 0.0;

    pub fn empty(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![Self::EMPTY; width * height] }
    }

    /// Validates that every value is either `EMPTY` or a finite positive depth.
    pub fn from_data(width: usize, height: usize, data: Vec<f64>) -> Result<Self, DepthError> {
        if data.len() != width * height {
            return Err(DepthError::SizeMismatch { expected: width * height, got: data.len() });
        }
        if let Some(index) = data.iter().position(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(DepthError::InvalidDepth { index });
        }
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> Option<f64> {
        let d = self.data[v * self.width + u];
        (d > 0.0).then_some(d)
    }

    /// Stores `depth`; non-positive or non-finite values store `EMPTY`.
    #[inline]
    pub fn set(&mut self, u: usize, v: usize, depth: f64) {
        self.data[v * self.width + u] = if depth > 0.0 && depth.is_finite() { depth } else { Self::EMPTY };
    }

    pub fn valid_count(&self) -> usize {
        self.data.iter().filter(|d| **d > 0.0).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Keyframe {
    pub id: u64,
    pub timestamp: f64,
    /// Camera-in-world pose.
    pub pose: Pose,
    pub depth: DepthImage,
    pub intrinsics: CameraIntrinsics,
}

impl Keyframe {
    pub fn with_depth(&self, depth: DepthImage) -> Keyframe {
        Keyframe { depth, ..self.clone() }
    }

    pub fn with_pose(&self, pose: Pose) -> Keyframe {
        Keyframe { pose, ..self.clone() }
    }
}

/// Projects every valid pixel of `source` into `target`.
///
/// Returns a target-sized image holding the projected depth `d_j^i` at the
/// landing pixel. When several source pixels land on the same target pixel
/// the nearest one is kept.
pub fn reproject_depth(source: &Keyframe, target: &Keyframe) -> Result<DepthImage, DepthError> {
    if source.intrinsics != target.intrinsics {
        return Err(DepthError::IntrinsicsMismatch);
    }
    let k = &source.intrinsics;
    let rel = target.pose.inverse().compose(&source.pose);
    let mut out = DepthImage::empty(k.width, k.height);
    for v in 0..source.depth.height() {
        for u in 0..source.depth.width() {
            let Some(d) = source.depth.get(u, v) else { continue };
            let p = rel.transform_point(&Point3::from(k.ray(u, v) * d));
            let Some((pu, pv)) = k.project(&p) else { continue };
            let Some((tu, tv)) = k.pixel(pu, pv) else { continue };
            match out.get(tu, tv) {
                Some(existing) if existing <= p.z => {}
                _ => out.set(tu, tv, p.z),
            }
        }
    }
    Ok(out)
}

/// Back-projects every pixel with depth below `max_depth` into the world
/// frame, in row-major order.
pub fn depth_to_cloud(frame: &Keyframe, max_depth: f64) -> PointCloud {
    let k = &frame.intrinsics;
    let mut pts = Vec::new();
    for v in 0..frame.depth.height() {
        for u in 0..frame.depth.width() {
            if let Some(d) = frame.depth.get(u, v) {
                if d < max_depth {
                    pts.push(frame.pose.transform_point(&Point3::from(k.ray(u, v) * d)));
                }
            }
        }
    }
    PointCloud::from_points_unchecked(pts, "world")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn intrinsics() -> CameraIntrinsics {
        CameraIntrinsics::new(40.0, 40.0, 20.0, 15.0, 41, 31).unwrap()
    }

    fn wall(depth: f64, pose: Pose) -> Keyframe {
        let k = intrinsics();
        let img = DepthImage::from_data(k.width, k.height, vec![depth; k.width * k.height]).unwrap();
        Keyframe { id: 0, timestamp: 0.0, pose, depth: img, intrinsics: k }
    }

    #[test]
    fn intrinsics_validation() {
        assert!(CameraIntrinsics::new(0.0, 1.0, 0.0, 0.0, 4, 4).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 4.0, 0.0, 4, 4).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 3.9, 0.0, 4, 4).is_ok());
    }

    #[test]
    fn depth_image_validation() {
        assert!(DepthImage::from_data(2, 2, vec![1.0; 3]).is_err());
        assert_eq!(
            DepthImage::from_data(2, 1, vec![1.0, -1.0]),
            Err(DepthError::InvalidDepth { index: 1 })
        );
        assert!(DepthImage::from_data(2, 1, vec![0.0, f64::NAN]).is_err());
    }

    #[test]
    fn identity_reprojection() {
        let f = wall(5.0, Pose::identity());
        let out = reproject_depth(&f, &f).unwrap();
        assert_eq!(out, f.depth);
    }

    #[test]
    fn axial_translation() {
        let src = wall(5.0, Pose::identity());
        let tgt = wall(5.0, Pose::from_translation(Vector3::new(0.0, 0.0, 1.0)));
        let out = reproject_depth(&src, &tgt).unwrap();
        assert!(out.valid_count() > 0);
        for d in out.data().iter().filter(|d| **d > 0.0) {
            assert_relative_eq!(*d, 4.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn nearest_wins_on_collision() {
        let k = intrinsics();
        let mut img = DepthImage::empty(k.width, k.height);
        // Seen from 200 m behind, both points land on pixel (20, 15).
        img.set(20, 15, 2.0);
        img.set(21, 15, 10.0);
        let src = Keyframe { id: 0, timestamp: 0.0, pose: Pose::identity(), depth: img, intrinsics: k };
        let tgt = wall(1.0, Pose::from_translation(Vector3::new(0.0, 0.0, -200.0)));
        let out = reproject_depth(&src, &tgt).unwrap();
        assert_eq!(out.get(20, 15), Some(202.0));
    }

    #[test]
    fn mismatched_intrinsics() {
        let a = wall(5.0, Pose::identity());
        let mut b = a.clone();
        b.intrinsics.fx = 41.0;
        assert_eq!(reproject_depth(&a, &b), Err(DepthError::IntrinsicsMismatch));
    }

    #[test]
    fn empty_image_gives_empty_cloud() {
        let k = intrinsics();
        let f = Keyframe {
            id: 0,
            timestamp: 0.0,
            pose: Pose::identity(),
            depth: DepthImage::empty(k.width, k.height),
            intrinsics: k,
        };
        assert!(depth_to_cloud(&f, 30.0).is_empty());
    }

    #[test]
    fn center_pixel_back_projects_on_axis() {
        let k = intrinsics();
        let mut img = DepthImage::empty(k.width, k.height);
        img.set(20, 15, 2.0);
        let f = Keyframe { id: 0, timestamp: 0.0, pose: Pose::identity(), depth: img, intrinsics: k };
        let c = depth_to_cloud(&f, 30.0);
        assert_eq!(c.points(), &[Point3::new(0.0, 0.0, 2.0)]);
        assert!(depth_to_cloud(&f, 2.0).is_empty());
    }
}
