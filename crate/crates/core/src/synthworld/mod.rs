//! Synthetic box-world scenes, camera paths and sensor corruption.
//!
//! Scenes are axis-aligned boxes standing on a ground plane at `z = 0`. A
//! camera flies a rounded-rectangle loop, depth is rendered analytically, and
//! odometry and depth noise follow an IMU-style parameterization.

mod noise;
mod render;
mod sample;
mod trajectory;

pub use noise::{
    bias_trajectory, corrupt, corrupt_depth, odometry_from_poses, CorruptedStream, DepthCondition, NoiseSpec,
};
pub use render::{ray_box, render_depth, render_keyframes};
pub use sample::sample_surface;
pub use trajectory::{generate_trajectory, look_rotation, PathSpec, Trajectory, MIN_CLEARANCE};

use alloc::string::String;
use alloc::vec::Vec;

use crate::depth::CameraIntrinsics;
use crate::geometry::{Point3, Vector3};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SynthError {
    #[error("box {0} is degenerate or outside the scene bounds")]
    InvalidBox(usize),
    #[error("scene bounds are empty")]
    InvalidBounds,
    #[error("edit removes box {index} but the scene has {len} boxes")]
    NoSuchBox { index: usize, len: usize },
    #[error("path is degenerate: {0}")]
    DegeneratePath(&'static str),
    #[error("camera at sample {sample} is {clearance:.3} m from box {index}")]
    Collision { sample: usize, index: usize, clearance: f64 },
    #[error("invalid noise spec: {0}")]
    InvalidNoise(&'static str),
    #[error("density must be positive, got {0}")]
    InvalidDensity(f64),
}

/// Axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Point3,
    pub max: Point3,
}

impl Aabb {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Self {
        Self { min: Point3::from(min), max: Point3::from(max) }
    }

    pub fn is_valid(&self) -> bool {
        (0..3).all(|a| self.min[a].is_finite() && self.max[a].is_finite() && self.min[a] < self.max[a])
    }

    pub fn contains(&self, p: &Point3) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }

    /// Euclidean distance from `p` to the solid box (0 inside).
    pub fn distance(&self, p: &Point3) -> f64 {
        let d = Vector3::from_fn(|a, _| (self.min[a] - p[a]).max(0.0).max(p[a] - self.max[a]));
        d.norm()
    }

    pub fn extent(&self) -> Vector3 {
        self.max - self.min
    }
}

/// Boxes on a ground rectangle `[ground_min, ground_max]` at `z = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub name: String,
    pub boxes: Vec<Aabb>,
    /// `(x, y)` corners of the ground plane.
    pub ground_min: [f64; 2],
    pub ground_max: [f64; 2],
    /// Upper limit of the scene volume.
    pub height: f64,
}

impl Scene {
    pub fn validate(&self) -> Result<(), SynthError> {
        let [x0, y0] = self.ground_min;
        let [x1, y1] = self.ground_max;
        if !(x0 < x1 && y0 < y1 && self.height > 0.0) {
            return Err(SynthError::InvalidBounds);
        }
        let bounds = Aabb::new([x0, y0, 0.0], [x1, y1, self.height]);
        for (i, b) in self.boxes.iter().enumerate() {
            if !b.is_valid() || !bounds.contains(&b.min) || !bounds.contains(&b.max) {
                return Err(SynthError::InvalidBox(i));
            }
        }
        Ok(())
    }

    /// `(min, max)` of the scene volume, with `margin` added on every side.
    pub fn bounds(&self, margin: f64) -> (Point3, Point3) {
        (
            Point3::new(self.ground_min[0] - margin, self.ground_min[1] - margin, -margin),
            Point3::new(self.ground_max[0] + margin, self.ground_max[1] + margin, self.height + margin),
        )
    }

    /// Distance from `p` to the nearest scene surface: box faces and the
    /// ground rectangle.
    pub fn surface_distance(&self, p: &Point3) -> f64 {
        let ground = {
            let dx = (self.ground_min[0] - p.x).max(0.0).max(p.x - self.ground_max[0]);
            let dy = (self.ground_min[1] - p.y).max(0.0).max(p.y - self.ground_max[1]);
            libm::sqrt(dx * dx + dy * dy + p.z * p.z)
        };
        self.boxes.iter().map(|b| box_surface_distance(b, p)).fold(ground, f64::min)
    }
}

fn box_surface_distance(b: &Aabb, p: &Point3) -> f64 {
    if b.contains(p) {
        (0..3).map(|a| (p[a] - b.min[a]).min(b.max[a] - p[a])).fold(f64::INFINITY, f64::min)
    } else {
        b.distance(p)
    }
}

/// Boxes to remove (by index) and add.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SceneEdit {
    pub remove: Vec<usize>,
    pub add: Vec<Aabb>,
}

/// What an edit actually did.
#[derive(Debug, Clone, PartialEq)]
pub struct EditManifest {
    pub removed: Vec<Aabb>,
    pub added: Vec<Aabb>,
}

impl EditManifest {
    /// Edit that turns the changed scene back into the original box set.
    /// Added boxes sit at the end of the changed scene.
    pub fn inverse(&self, changed: &Scene) -> SceneEdit {
        let n = changed.boxes.len();
        SceneEdit { remove: (n - self.added.len()..n).collect(), add: self.removed.clone() }
    }
}

/// Applies `edit`: surviving original boxes keep their order and added boxes
/// are appended.
pub fn make_scene_pair(original: &Scene, edit: &SceneEdit) -> Result<(Scene, Scene, EditManifest), SynthError> {
    original.validate()?;
    let len = original.boxes.len();
    if let Some(&index) = edit.remove.iter().find(|&&i| i >= len) {
        return Err(SynthError::NoSuchBox { index, len });
    }
    let mut changed = original.clone();
    changed.name.push_str("_changed");
    changed.boxes = original
        .boxes
        .iter()
        .enumerate()
        .filter(|(i, _)| !edit.remove.contains(i))
        .map(|(_, b)| *b)
        .collect();
    changed.boxes.extend_from_slice(&edit.add);
    changed.validate()?;
    let mut removed_idx = edit.remove.clone();
    removed_idx.sort_unstable();
    removed_idx.dedup();
    let manifest = EditManifest { removed: removed_idx.iter().map(|&i| original.boxes[i]).collect(), added: edit.add.clone() };
    Ok((original.clone(), changed, manifest))
}

/// The default city block: 100 × 100 × 20 m with eight buildings around a
/// loop road, plus the edit that removes one building and adds a new one.
///
/// Every building stands at least 16 m from the road, which keeps it out of
/// reach of free-space probes cast from pixels without a filtered depth.
/// The side walls of the east and west lots extend past the road, so no
/// camera ever looks along them.
pub fn default_scene() -> (Scene, SceneEdit) {
    let b = |x0: f64, y0: f64, x1: f64, y1: f64, h: f64| Aabb::new([x0, y0, 0.0], [x1, y1, h]);
    let boxes = alloc::vec![
        // North side.
        b(-40.0, 26.0, -14.0, 44.0, 14.0),
        b(-6.0, 24.0, 6.0, 38.0, 11.0),
        b(16.0, 26.0, 40.0, 44.0, 17.0),
        // South side.
        b(-36.0, -44.0, -14.0, -26.0, 12.0),
        b(-8.0, -46.0, 10.0, -28.0, 16.0),
        b(18.0, -44.0, 40.0, -26.0, 10.0),
        // West, and a narrow block at the east edge.
        b(-46.0, -16.0, -30.0, 16.0, 15.0),
        b(44.0, -18.0, 48.0, 18.0, 13.0),
    ];
    let scene = Scene {
        name: "block".into(),
        boxes,
        ground_min: [-50.0, -50.0],
        ground_max: [50.0, 50.0],
        height: 20.0,
    };
    // Remove the north-middle building and build on the empty east lot.
    let edit = SceneEdit { remove: alloc::vec![1], add: alloc::vec![b(28.0, -16.0, 38.0, 16.0, 12.0)] };
    (scene, edit)
}

/// Default camera: 160 × 90 pixels, 77° horizontal field of view.
pub fn default_intrinsics() -> CameraIntrinsics {
    CameraIntrinsics { fx: 100.0, fy: 100.0, cx: 79.5, cy: 44.5, width: 160, height: 90 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn sorted(mut v: Vec<Aabb>) -> Vec<Aabb> {
        v.sort_by(|a, b| a.min.x.total_cmp(&b.min.x).then(a.min.y.total_cmp(&b.min.y)));
        v
    }

    #[test]
    fn default_scene_is_valid() {
        let (s, e) = default_scene();
        s.validate().unwrap();
        assert_eq!(s.boxes.len(), 8);
        make_scene_pair(&s, &e).unwrap();
    }

    #[test]
    fn empty_edit_is_identity() {
        let (s, _) = default_scene();
        let (o, c, m) = make_scene_pair(&s, &SceneEdit::default()).unwrap();
        assert_eq!(o.boxes, c.boxes);
        assert!(m.removed.is_empty() && m.added.is_empty());
    }

    #[test]
    fn edit_set_semantics_and_round_trip() {
        let (s, e) = default_scene();
        let (o, c, m) = make_scene_pair(&s, &e).unwrap();
        let mut expected: Vec<Aabb> =
            o.boxes.iter().enumerate().filter(|(i, _)| !e.remove.contains(i)).map(|(_, b)| *b).collect();
        expected.extend(e.add.iter().copied());
        assert_eq!(sorted(c.boxes.clone()), sorted(expected));
        let (_, back, _) = make_scene_pair(&c, &m.inverse(&c)).unwrap();
        assert_eq!(sorted(back.boxes), sorted(o.boxes));
    }

    #[test]
    fn removing_missing_box_is_rejected() {
        let (s, _) = default_scene();
        let edit = SceneEdit { remove: vec![8], add: vec![] };
        assert_eq!(make_scene_pair(&s, &edit).unwrap_err(), SynthError::NoSuchBox { index: 8, len: 8 });
    }

    #[test]
    fn box_outside_bounds_is_rejected() {
        let (mut s, _) = default_scene();
        s.boxes.push(Aabb::new([45.0, 45.0, 0.0], [55.0, 49.0, 3.0]));
        assert_eq!(s.validate(), Err(SynthError::InvalidBox(8)));
    }

    #[test]
    fn surface_distance_inside_and_outside() {
        let s = Scene {
            name: "t".into(),
            boxes: vec![Aabb::new([0.0, 0.0, 0.0], [2.0, 2.0, 2.0])],
            ground_min: [-5.0, -5.0],
            ground_max: [5.0, 5.0],
            height: 5.0,
        };
        assert_eq!(s.surface_distance(&Point3::new(1.0, 1.0, 1.5)), 0.5);
        assert_eq!(s.surface_distance(&Point3::new(-3.0, 1.0, 1.0)), 1.0);
        assert_eq!(s.surface_distance(&Point3::new(-4.0, 0.0, 3.0)), 3.0);
    }
}
