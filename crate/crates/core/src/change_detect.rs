//! New/removed point classification between a prior cloud and a cloud rebuilt
//! from filtered depth.
//!
//! The steps are: accumulate the global cloud from keyframes, align it to the
//! prior with GICP, restrict the prior to what the camera could have seen, and
//! compare the two clouds with a distance threshold `th_ch`.
//!
//! The observed-prior test keeps a point at exactly `th_ch` from the global
//! cloud, while the change test flags a point at exactly `th_ch` as changed.
//! Both inequalities are intentional and match the reference algorithms.

use alloc::vec::Vec;

use crate::depth::{depth_to_cloud, Keyframe};
use crate::geometry::{
    transform_cloud, voxel_downsample, GeometryError, Point3, PointCloud, Pose, SpatialIndex,
};
use crate::occupancy::{
    build_observed_area, ObservedArea, ObservedAreaConfig, OccupancyError, OccupancyOctree, TransformedArea,
};
use crate::par::{Executor, CHUNK};
use crate::registration::{register_gicp, RegistrationConfig, RegistrationError, RegistrationResult};

#[derive(Debug, Clone, PartialEq)]
pub struct ChangeConfig {
    /// Change distance threshold, m.
    pub th_ch: f64,
    /// Downsample resolution for all clouds, m.
    pub rho_p: f64,
    pub area: ObservedAreaConfig,
    /// Align the global cloud to the prior before classification.
    pub align: bool,
    pub registration: RegistrationConfig,
    pub thread_count: usize,
}

impl Default for ChangeConfig {
    fn default() -> Self {
        Self {
            th_ch: 3.2,
            rho_p: 0.8,
            area: ObservedAreaConfig::default(),
            align: true,
            registration: RegistrationConfig::default(),
            thread_count: 4,
        }
    }
}

impl ChangeConfig {
    pub fn validate(&self) -> Result<(), ChangeError> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.th_ch) || !positive(self.rho_p) {
            return Err(ChangeError::InvalidConfig("th_ch and rho_p must be positive"));
        }
        if self.th_ch <= self.rho_p {
            return Err(ChangeError::InvalidConfig("th_ch must exceed rho_p"));
        }
        if self.thread_count == 0 {
            return Err(ChangeError::InvalidConfig("thread_count must be at least 1"));
        }
        self.area.validate().map_err(ChangeError::ObservedArea)?;
        self.registration.validate().map_err(ChangeError::Alignment)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ChangeError {
    #[error("invalid change-detection config: {0}")]
    InvalidConfig(&'static str),
    #[error("{keyframes} keyframes but {poses} poses")]
    LengthMismatch { keyframes: usize, poses: usize },
    #[error("global cloud: {0}")]
    GlobalCloud(GeometryError),
    #[error("prior cloud: {0}")]
    Prior(GeometryError),
    #[error("alignment: {0}")]
    Alignment(RegistrationError),
    #[error("observed area: {0}")]
    ObservedArea(OccupancyError),
}

/// Output of [`detect`]. All clouds are in the prior frame.
#[derive(Debug, Clone)]
pub struct ChangeReport {
    /// Global cloud after alignment.
    pub global_cloud: PointCloud,
    /// Prior cloud as downsampled for comparison.
    pub prior_cloud: PointCloud,
    pub observed_prior: PointCloud,
    pub new_points: PointCloud,
    pub removed_points: PointCloud,
    /// Map built in the keyframe pose frame; see [`ChangeReport::observed_area`].
    pub occupancy: OccupancyOctree,
    /// Registration of the global cloud to the prior, when attempted.
    pub alignment: Option<RegistrationResult>,
    /// Transform applied to the global cloud (identity when unaligned).
    pub alignment_transform: Pose,
    /// Alignment was attempted but failed validation or errored.
    pub unaligned: bool,
}

impl ChangeReport {
    /// Observed area in the prior frame.
    pub fn observed_area(&self) -> TransformedArea<'_, OccupancyOctree> {
        TransformedArea { area: &self.occupancy, transform: self.alignment_transform }
    }
}

/// Union of the back-projected keyframes (pixels closer than `max_depth`),
/// downsampled at `rho_p`.
pub fn build_global_cloud(
    keyframes: &[Keyframe],
    poses: &[Pose],
    rho_p: f64,
    max_depth: f64,
) -> Result<PointCloud, ChangeError> {
    if keyframes.len() != poses.len() {
        return Err(ChangeError::LengthMismatch { keyframes: keyframes.len(), poses: poses.len() });
    }
    let mut all = PointCloud::new("world");
    for (frame, pose) in keyframes.iter().zip(poses) {
        all.extend_from(&depth_to_cloud(&frame.with_pose(*pose), max_depth));
    }
    voxel_downsample(&all, rho_p).map_err(ChangeError::GlobalCloud)
}

/// Registers `global` to `prior` from the identity. Returns the transformed
/// global cloud, the registration (if it ran) and whether it was rejected.
pub fn align_global_to_prior(
    global: &PointCloud,
    prior: &PointCloud,
    config: &RegistrationConfig,
) -> (PointCloud, Option<RegistrationResult>, bool) {
    match register_gicp(global, prior, &Pose::identity(), config) {
        Ok(r) if r.accepted => (transform_cloud(global, &r.transform), Some(r), false),
        Ok(r) => (global.clone(), Some(r), true),
        Err(_) => (global.clone(), None, true),
    }
}

/// Marks every point of `cloud` whose distance to `other` satisfies `keep`.
/// An empty `other` yields `None` for every point.
fn distance_mask(
    cloud: &PointCloud,
    other: &SpatialIndex,
    exec: &Executor,
    keep: impl Fn(Option<f64>, &Point3) -> bool + Sync,
) -> Vec<bool> {
    let pts = cloud.points();
    let parts = exec.map_chunks(pts.len(), CHUNK, |range| {
        range
            .map(|i| {
                let d = other.nearest(&pts[i]).ok().map(|(_, d)| d);
                keep(d, &pts[i])
            })
            .collect::<Vec<bool>>()
    });
    parts.concat()
}

/// Prior points that are inside the observed area or within `th_ch` of the
/// global cloud. Order is preserved.
pub fn build_observed_prior<A: ObservedArea + Sync + ?Sized>(
    prior: &PointCloud,
    global: &SpatialIndex,
    area: &A,
    th_ch: f64,
    exec: &Executor,
) -> PointCloud {
    let mask = distance_mask(prior, global, exec, |d, p| area.contains(p) || d.is_some_and(|d| d <= th_ch));
    prior.select(&mask)
}

/// Points of `cloud` at distance `>= th_ch` from `other` (all of them when
/// `other` is empty).
pub fn changed_points(cloud: &PointCloud, other: &SpatialIndex, th_ch: f64, exec: &Executor) -> PointCloud {
    let mask = distance_mask(cloud, other, exec, |d, _| d.is_none_or(|d| d >= th_ch));
    cloud.select(&mask)
}

/// Returns `(new, removed)`: global points far from the observed prior, and
/// observed prior points far from the global cloud.
pub fn classify_changes(
    global: &PointCloud,
    observed_prior: &PointCloud,
    th_ch: f64,
    exec: &Executor,
) -> (PointCloud, PointCloud) {
    let g_index = SpatialIndex::new(global);
    let p_index = SpatialIndex::new(observed_prior);
    (changed_points(global, &p_index, th_ch, exec), changed_points(observed_prior, &g_index, th_ch, exec))
}

/// Runs the full detection. `bounds` is the `(min, max)` region of the
/// occupancy map in the keyframe pose frame.
pub fn detect(
    keyframes: &[Keyframe],
    poses: &[Pose],
    prior: &PointCloud,
    bounds: (Point3, Point3),
    config: &ChangeConfig,
) -> Result<ChangeReport, ChangeError> {
    config.validate()?;
    let exec = Executor::new(config.thread_count);
    let raw_global = build_global_cloud(keyframes, poses, config.rho_p, config.area.th_d)?;
    let prior_cloud = voxel_downsample(prior, config.rho_p).map_err(ChangeError::Prior)?;

    let (global_cloud, alignment, unaligned) = if config.align {
        align_global_to_prior(&raw_global, &prior_cloud, &config.registration)
    } else {
        (raw_global, None, false)
    };
    let alignment_transform = match (&alignment, unaligned) {
        (Some(r), false) => r.transform,
        _ => Pose::identity(),
    };

    let occupancy =
        build_observed_area(keyframes, poses, &config.area, bounds.0, bounds.1).map_err(ChangeError::ObservedArea)?;
    let area = TransformedArea { area: &occupancy, transform: alignment_transform };
    let g_index = SpatialIndex::new(&global_cloud);
    let observed_prior = build_observed_prior(&prior_cloud, &g_index, &area, config.th_ch, &exec);
    let p_index = SpatialIndex::new(&observed_prior);
    let new_points = changed_points(&global_cloud, &p_index, config.th_ch, &exec);
    let removed_points = changed_points(&observed_prior, &g_index, config.th_ch, &exec);

    Ok(ChangeReport {
        global_cloud,
        prior_cloud,
        observed_prior,
        new_points,
        removed_points,
        occupancy,
        alignment,
        alignment_transform,
        unaligned,
    })
}
