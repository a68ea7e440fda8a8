use alloc::vec::Vec;

use nalgebra::{Matrix6, UnitQuaternion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{SynthError, Trajectory};
use crate::depth::{DepthImage, Keyframe};
use crate::geometry::{so3, Point3, Pose, Vector3};
use crate::pose_graph::{integrate_odometry, OdometryMeasurement};

/// IMU-style noise densities plus depth noise.
///
/// Odometry between consecutive keyframes `Δt` apart is corrupted by:
/// - rotation: white noise with std `σ_g·√Δt` plus a gyro bias that walks
///   with std `σ_bg·√Δt` per step and contributes `b_g·Δt`;
/// - translation: a velocity error that walks with std `σ_a·√Δt` plus an
///   accelerometer bias (walking with `σ_ba·√Δt`) integrated over `Δt`, and
///   contributing `v_err·Δt`.
///
/// Depth pixels get zero-mean Gaussian noise with std `σ_img · depth`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub sigma_g: f64,
    pub sigma_a: f64,
    pub sigma_bg: f64,
    pub sigma_ba: f64,
    pub sigma_img: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn zero(seed: u64) -> Self {
        Self { sigma_g: 0.0, sigma_a: 0.0, sigma_bg: 0.0, sigma_ba: 0.0, sigma_img: 0.0, seed }
    }

    pub fn small(seed: u64) -> Self {
        Self { sigma_g: 4.0e-4, sigma_a: 3.0e-3, sigma_bg: 4.0e-5, sigma_ba: 3.0e-4, sigma_img: 0.02, seed }
    }

    pub fn big(seed: u64) -> Self {
        Self { sigma_g: 4.0e-3, sigma_a: 3.0e-2, sigma_bg: 4.0e-4, sigma_ba: 3.0e-3, sigma_img: 0.04, seed }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let ok = |v: f64| v >= 0.0 && v.is_finite();
        if [self.sigma_g, self.sigma_a, self.sigma_bg, self.sigma_ba, self.sigma_img].iter().all(|&v| ok(v)) {
            Ok(())
        } else {
            Err(SynthError::InvalidNoise("noise densities must be finite and non-negative"))
        }
    }

    /// Information for one odometry step of length `dt` in a run of length
    /// `horizon`, from the per-step std of each error source at the end of
    /// the run. Floored so zero noise still gives a finite matrix.
    pub fn odometry_information(&self, dt: f64, horizon: f64) -> Matrix6<f64> {
        let sr = self.sigma_g * libm::sqrt(dt) + self.sigma_bg * libm::sqrt(horizon) * dt;
        let st = (self.sigma_a * libm::sqrt(horizon) + self.sigma_ba * horizon * libm::sqrt(horizon / 3.0)) * dt;
        let (sr, st) = (sr.max(1e-6), st.max(1e-6));
        let mut info = Matrix6::zeros();
        for i in 0..3 {
            info[(i, i)] = 1.0 / (sr * sr);
            info[(i + 3, i + 3)] = 1.0 / (st * st);
        }
        info
    }
}

/// Structured depth corruption emulating hard scenes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DepthCondition {
    Normal,
    /// A reflective patch per frame: depths inside a random rectangle covering
    /// `fraction` of each image side are pushed back by `factor`.
    Mirror { fraction: f64, factor: f64 },
    /// Each pixel independently loses its depth with probability `dropout`.
    Dark { dropout: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorruptedStream {
    pub odometry: Vec<OdometryMeasurement>,
    /// Odometry chained from the first true pose.
    pub odometry_poses: Vec<Pose>,
    /// Keyframes with noisy depth; poses are left at ground truth.
    pub keyframes: Vec<Keyframe>,
}

/// Exact relative poses between consecutive entries.
pub fn odometry_from_poses(poses: &[Pose], information: Matrix6<f64>) -> Vec<OdometryMeasurement> {
    poses
        .windows(2)
        .enumerate()
        .map(|(i, w)| OdometryMeasurement { from: i, to: i + 1, relative: w[0].between(&w[1]), information })
        .collect()
}

fn gaussian3(rng: &mut ChaCha8Rng, std: f64) -> Vector3 {
    let mut g = || -> f64 { StandardNormal.sample(rng) };
    Vector3::new(g(), g(), g()) * std
}

/// Corrupts odometry and depth. All randomness comes from one generator
/// seeded with `noise.seed`: odometry first, then depth frame by frame.
pub fn corrupt(
    traj: &Trajectory,
    keyframes: &[Keyframe],
    noise: &NoiseSpec,
    condition: DepthCondition,
) -> Result<CorruptedStream, SynthError> {
    noise.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let n = traj.poses.len();
    let horizon = match (traj.timestamps.first(), traj.timestamps.last()) {
        (Some(a), Some(b)) => b - a,
        _ => 0.0,
    };
    let mut odometry = Vec::with_capacity(n.saturating_sub(1));
    let (mut bg, mut ba, mut verr) = (Vector3::zeros(), Vector3::zeros(), Vector3::zeros());
    for k in 1..n {
        let dt = traj.timestamps[k] - traj.timestamps[k - 1];
        let sq = libm::sqrt(dt);
        bg += gaussian3(&mut rng, noise.sigma_bg * sq);
        let rot_err = gaussian3(&mut rng, noise.sigma_g * sq) + bg * dt;
        ba += gaussian3(&mut rng, noise.sigma_ba * sq);
        verr += gaussian3(&mut rng, noise.sigma_a * sq) + ba * dt;
        let truth = traj.poses[k - 1].between(&traj.poses[k]);
        let mut rotation = truth.rotation * so3::exp(&rot_err);
        rotation.renormalize();
        odometry.push(OdometryMeasurement {
            from: k - 1,
            to: k,
            relative: Pose::new(truth.translation + verr * dt, rotation),
            information: noise.odometry_information(dt, horizon),
        });
    }
    let odometry_poses = match traj.poses.first() {
        Some(start) => integrate_odometry(start, &odometry),
        None => Vec::new(),
    };
    let keyframes = keyframes
        .iter()
        .map(|kf| kf.with_depth(corrupt_depth(&kf.depth, noise.sigma_img, condition, &mut rng)))
        .collect();
    Ok(CorruptedStream { odometry, odometry_poses, keyframes })
}

/// Adds `N(0, (σ·d)²)` to every valid pixel, then applies `condition`.
/// Values that become non-positive are emptied.
pub fn corrupt_depth(img: &DepthImage, sigma_img: f64, condition: DepthCondition, rng: &mut ChaCha8Rng) -> DepthImage {
    let (w, h) = (img.width(), img.height());
    let mut out = img.clone();
    for v in 0..h {
        for u in 0..w {
            if let Some(d) = img.get(u, v) {
                let z: f64 = StandardNormal.sample(rng);
                out.set(u, v, d + sigma_img * d * z);
            }
        }
    }
    match condition {
        DepthCondition::Normal => {}
        DepthCondition::Mirror { fraction, factor } => {
            let pw = ((w as f64 * fraction) as usize).clamp(1, w);
            let ph = ((h as f64 * fraction) as usize).clamp(1, h);
            let u0 = rng.random_range(0..=w - pw);
            let v0 = rng.random_range(0..=h - ph);
            for v in v0..v0 + ph {
                for u in u0..u0 + pw {
                    if let Some(d) = out.get(u, v) {
                        out.set(u, v, d * factor);
                    }
                }
            }
        }
        DepthCondition::Dark { dropout } => {
            for v in 0..h {
                for u in 0..w {
                    if rng.random_bool(dropout.clamp(0.0, 1.0)) {
                        out.set(u, v, DepthImage::EMPTY);
                    }
                }
            }
        }
    }
    out
}

/// Applies a heading drift that grows linearly along the trajectory, rotating
/// each pose about the first position, scaled so that the largest position
/// error equals `max_error` (or as close as a half-turn allows).
pub fn bias_trajectory(poses: &[Pose], max_error: f64) -> Vec<Pose> {
    let n = poses.len();
    if n < 2 || !(max_error > 0.0) {
        return poses.to_vec();
    }
    let origin = Point3::from(poses[0].translation);
    let apply = |beta: f64| -> Vec<Pose> {
        poses
            .iter()
            .enumerate()
            .map(|(k, p)| {
                let yaw = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), beta * k as f64 / (n - 1) as f64);
                let t = origin.coords + yaw * (p.translation - origin.coords);
                Pose::new(t, yaw * p.rotation)
            })
            .collect()
    };
    let max_err = |beta: f64| -> f64 {
        apply(beta)
            .iter()
            .zip(poses)
            .map(|(a, b)| (a.translation - b.translation).norm())
            .fold(0.0, f64::max)
    };
    let (mut lo, mut hi) = (0.0, core::f64::consts::PI);
    if max_err(hi) <= max_error {
        return apply(hi);
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if max_err(mid) < max_error {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    apply(0.5 * (lo + hi))
}
