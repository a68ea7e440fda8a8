use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Matrix3, Rotation3, UnitQuaternion};

use super::{Scene, SynthError};
use crate::geometry::{Point3, Pose, Vector3};

/// Minimum distance between any camera sample and any box, m.
pub const MIN_CLEARANCE: f64 = 1.0;

/// Rounded-rectangle loop flown counter-clockwise at constant height.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSpec {
    pub center: [f64; 2],
    pub half_extents: [f64; 2],
    pub corner_radius: f64,
    pub height: f64,
    /// m/s
    pub speed: f64,
    /// Keyframes per second.
    pub rate: f64,
    /// Downward camera pitch, rad.
    pub pitch: f64,
}

impl Default for PathSpec {
    fn default() -> Self {
        Self {
            center: [0.0, 0.0],
            half_extents: [12.0, 8.0],
            corner_radius: 4.0,
            height: 4.0,
            speed: 2.0,
            rate: 5.0,
            pitch: 10f64.to_radians(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub timestamps: Vec<f64>,
    /// Camera-in-world poses.
    pub poses: Vec<Pose>,
    pub height: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    /// `(timestamp, pose)` pairs.
    pub fn stamped(&self) -> Vec<(f64, Pose)> {
        self.timestamps.iter().copied().zip(self.poses.iter().copied()).collect()
    }
}

/// Camera orientation looking along heading `yaw` (from +x, counter-clockwise)
/// and tilted down by `pitch`. Camera axes: x right, y down, z forward.
pub fn look_rotation(yaw: f64, pitch: f64) -> UnitQuaternion<f64> {
    let (sy, cy) = libm::sincos(yaw);
    let (sp, cp) = libm::sincos(pitch);
    let forward = Vector3::new(cy * cp, sy * cp, -sp);
    let right = Vector3::new(sy, -cy, 0.0);
    let down = forward.cross(&right);
    let m = Matrix3::from_columns(&[right, down, forward]);
    UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(m))
}

/// Position and heading at arc length `s` along the loop.
fn along(spec: &PathSpec, s: f64) -> ([f64; 2], f64) {
    let [a, b] = spec.half_extents;
    let r = spec.corner_radius;
    let (sx, sy) = (a - r, b - r);
    let arc = FRAC_PI_2 * r;
    // (start point, heading, length, turning): straights and quarter arcs.
    let segments = [
        ([0.0, -b], 0.0, sx, false),
        ([sx, -sy], 0.0, arc, true),
        ([a, -sy], FRAC_PI_2, 2.0 * sy, false),
        ([sx, sy], FRAC_PI_2, arc, true),
        ([sx, b], PI, 2.0 * sx, false),
        ([-sx, sy], PI, arc, true),
        ([-a, sy], -FRAC_PI_2, 2.0 * sy, false),
        ([-sx, -sy], -FRAC_PI_2, arc, true),
        ([-sx, -b], 0.0, sx, false),
    ];
    let mut rest = s;
    let last = segments.len() - 1;
    for (i, (start, heading, len, turning)) in segments.into_iter().enumerate() {
        if rest <= len || i == last {
            let [cx, cy] = spec.center;
            if turning {
                // `start` is the circle center; heading is the tangent at entry.
                let phi = if r > 0.0 { rest / r } else { 0.0 };
                let ang = heading - FRAC_PI_2 + phi;
                return ([cx + start[0] + r * libm::cos(ang), cy + start[1] + r * libm::sin(ang)], heading + phi);
            }
            let (sh, ch) = libm::sincos(heading);
            return ([cx + start[0] + rest * ch, cy + start[1] + rest * sh], heading);
        }
        rest -= len;
    }
    unreachable!()
}

fn loop_length(spec: &PathSpec) -> f64 {
    let [a, b] = spec.half_extents;
    let r = spec.corner_radius;
    4.0 * (a - r) + 4.0 * (b - r) + 2.0 * PI * r
}

/// One lap of the loop sampled at `rate`, starting at the middle of the
/// south side heading east.
pub fn generate_trajectory(scene: &Scene, spec: &PathSpec) -> Result<Trajectory, SynthError> {
    let positive = |v: f64| v > 0.0 && v.is_finite();
    if !positive(spec.speed) || !positive(spec.rate) {
        return Err(SynthError::DegeneratePath("speed and rate must be positive"));
    }
    if !positive(spec.half_extents[0]) || !positive(spec.half_extents[1]) {
        return Err(SynthError::DegeneratePath("zero-length path"));
    }
    let r = spec.corner_radius;
    if !(r >= 0.0) || r > spec.half_extents[0].min(spec.half_extents[1]) {
        return Err(SynthError::DegeneratePath("corner radius must fit the rectangle"));
    }
    if !(spec.height > 0.0 && spec.height < scene.height) {
        return Err(SynthError::DegeneratePath("height must lie inside the scene"));
    }
    let step = spec.speed / spec.rate;
    let length = loop_length(spec);
    let n = libm::floor(length / step) as usize;
    if n < 2 {
        return Err(SynthError::DegeneratePath("loop shorter than two samples"));
    }
    let mut timestamps = Vec::with_capacity(n);
    let mut poses = Vec::with_capacity(n);
    for k in 0..n {
        let ([x, y], yaw) = along(spec, k as f64 * step);
        if x < scene.ground_min[0] || x > scene.ground_max[0] || y < scene.ground_min[1] || y > scene.ground_max[1] {
            return Err(SynthError::DegeneratePath("path leaves the scene"));
        }
        let p = Point3::new(x, y, spec.height);
        for (index, b) in scene.boxes.iter().enumerate() {
            let clearance = b.distance(&p);
            if clearance < MIN_CLEARANCE {
                return Err(SynthError::Collision { sample: k, index, clearance });
            }
        }
        timestamps.push(k as f64 / spec.rate);
        poses.push(Pose::new(p.coords, look_rotation(yaw, spec.pitch)));
    }
    Ok(Trajectory { timestamps, poses, height: spec.height })
}
