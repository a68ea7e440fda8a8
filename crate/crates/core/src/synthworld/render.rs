use alloc::vec::Vec;

use super::{Aabb, Scene, Trajectory};
use crate::depth::{CameraIntrinsics, DepthImage, Keyframe};
use crate::geometry::{Point3, Pose, Vector3};
use crate::par::Executor;

/// Smallest `t > 0` with `origin + t·dir` on the surface of `b` (slab test).
pub fn ray_box(origin: &Point3, dir: &Vector3, b: &Aabb) -> Option<f64> {
    let mut t0 = f64::NEG_INFINITY;
    let mut t1 = f64::INFINITY;
    for a in 0..3 {
        if dir[a] == 0.0 {
            if origin[a] < b.min[a] || origin[a] > b.max[a] {
                return None;
            }
            continue;
        }
        let inv = 1.0 / dir[a];
        let (mut near, mut far) = ((b.min[a] - origin[a]) * inv, (b.max[a] - origin[a]) * inv);
        if near > far {
            core::mem::swap(&mut near, &mut far);
        }
        t0 = t0.max(near);
        t1 = t1.min(far);
    }
    if t0 > t1 {
        return None;
    }
    if t0 > 0.0 {
        Some(t0)
    } else if t1 > 0.0 {
        Some(t1)
    } else {
        None
    }
}

fn ray_ground(origin: &Point3, dir: &Vector3, scene: &Scene) -> Option<f64> {
    if dir.z == 0.0 {
        return None;
    }
    let t = -origin.z / dir.z;
    if !(t > 0.0) {
        return None;
    }
    let x = origin.x + t * dir.x;
    let y = origin.y + t * dir.y;
    let inside = x >= scene.ground_min[0] && x <= scene.ground_max[0] && y >= scene.ground_min[1] && y <= scene.ground_max[1];
    inside.then_some(t)
}

/// Exact depth image of `scene` seen from a camera at `pose`. Pixels whose
/// ray hits nothing are empty.
pub fn render_depth(scene: &Scene, pose: &Pose, k: &CameraIntrinsics) -> DepthImage {
    let origin = Point3::from(pose.translation);
    let mut img = DepthImage::empty(k.width, k.height);
    for v in 0..k.height {
        for u in 0..k.width {
            // Camera rays have unit z, so the ray parameter is the depth.
            let dir = pose.transform_vector(&k.ray(u, v));
            let mut best = ray_ground(&origin, &dir, scene);
            for b in &scene.boxes {
                if let Some(t) = ray_box(&origin, &dir, b) {
                    best = Some(best.map_or(t, |x: f64| x.min(t)));
                }
            }
            if let Some(t) = best {
                img.set(u, v, t);
            }
        }
    }
    img
}

/// Renders one keyframe per trajectory pose, ids `0..n`.
pub fn render_keyframes(scene: &Scene, traj: &Trajectory, k: &CameraIntrinsics, exec: &Executor) -> Vec<Keyframe> {
    exec.map(traj.poses.len(), |i| Keyframe {
        id: i as u64,
        timestamp: traj.timestamps[i],
        pose: traj.poses[i],
        depth: render_depth(scene, &traj.poses[i], k),
        intrinsics: *k,
    })
}
