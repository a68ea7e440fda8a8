//! Scoring of detected changes against ground truth, and trajectory error.
//!
//! Ground-truth new/removed clouds come from classifying the changed scene's
//! surface cloud against the original one. Both are then restricted to the
//! observed area exactly like the prior in detection, and true positives are
//! points within `th_ch` of their counterpart cloud (boundary included).
//! A metric whose denominator is zero is reported as `None`.

use alloc::vec::Vec;

use nalgebra::{Matrix3, SVD};

use crate::change_detect::{build_observed_prior, changed_points, ChangeReport};
use crate::geometry::{voxel_downsample, GeometryError, Point3, PointCloud, Pose, SpatialIndex, Vector3};
use crate::occupancy::ObservedArea;
use crate::par::{Executor, CHUNK};

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthChanges {
    pub prior_new: PointCloud,
    pub prior_removed: PointCloud,
    pub observed_new: PointCloud,
    pub observed_removed: PointCloud,
}

/// True-positive subsets.
#[derive(Debug, Clone, PartialEq)]
pub struct TpClouds {
    /// Observed ground-truth removed points near a detected removed point.
    pub observed_removed_tp: PointCloud,
    /// Observed ground-truth new points near a detected new point.
    pub observed_new_tp: PointCloud,
    /// Detected removed points near an observed ground-truth removed point.
    pub removed_tp: PointCloud,
    /// Detected new points near an observed ground-truth new point.
    pub new_tp: PointCloud,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MetricCounts {
    pub observed_new: usize,
    pub observed_new_tp: usize,
    pub detected_new: usize,
    pub detected_new_tp: usize,
    pub observed_removed: usize,
    pub observed_removed_tp: usize,
    pub detected_removed: usize,
    pub detected_removed_tp: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub r_new: Option<f64>,
    pub p_new: Option<f64>,
    pub r_rm: Option<f64>,
    pub p_rm: Option<f64>,
    pub counts: MetricCounts,
}

impl MetricsReport {
    /// `[R_new, P_new, R_rm, P_rm]`
    pub fn as_array(&self) -> [Option<f64>; 4] {
        [self.r_new, self.p_new, self.r_rm, self.p_rm]
    }
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Ground-truth `(new, removed)` from the original and changed scene clouds.
pub fn build_ground_truth(
    original_prior: &PointCloud,
    changed_prior: &PointCloud,
    th_ch: f64,
    exec: &Executor,
) -> (PointCloud, PointCloud) {
    let orig = SpatialIndex::new(original_prior);
    let changed = SpatialIndex::new(changed_prior);
    (changed_points(changed_prior, &orig, th_ch, exec), changed_points(original_prior, &changed, th_ch, exec))
}

/// Observed subsets of the ground-truth clouds, `(new, removed)`.
pub fn restrict_to_observed<A: ObservedArea + Sync + ?Sized>(
    prior_new: &PointCloud,
    prior_removed: &PointCloud,
    global: &SpatialIndex,
    area: &A,
    th_ch: f64,
    exec: &Executor,
) -> (PointCloud, PointCloud) {
    (
        build_observed_prior(prior_new, global, area, th_ch, exec),
        build_observed_prior(prior_removed, global, area, th_ch, exec),
    )
}

fn near(cloud: &PointCloud, other: &PointCloud, th_ch: f64, exec: &Executor) -> PointCloud {
    let index = SpatialIndex::new(other);
    let pts = cloud.points();
    let mask = exec
        .map_chunks(pts.len(), CHUNK, |r| {
            r.map(|i| index.nearest(&pts[i]).is_ok_and(|(_, d)| d <= th_ch)).collect::<Vec<bool>>()
        })
        .concat();
    cloud.select(&mask)
}

pub fn build_tp_clouds(
    observed_removed: &PointCloud,
    observed_new: &PointCloud,
    removed: &PointCloud,
    new: &PointCloud,
    th_ch: f64,
    exec: &Executor,
) -> TpClouds {
    TpClouds {
        observed_removed_tp: near(observed_removed, removed, th_ch, exec),
        observed_new_tp: near(observed_new, new, th_ch, exec),
        removed_tp: near(removed, observed_removed, th_ch, exec),
        new_tp: near(new, observed_new, th_ch, exec),
    }
}

pub fn compute_metrics(counts: MetricCounts) -> MetricsReport {
    MetricsReport {
        r_new: ratio(counts.observed_new_tp, counts.observed_new),
        p_new: ratio(counts.detected_new_tp, counts.detected_new),
        r_rm: ratio(counts.observed_removed_tp, counts.observed_removed),
        p_rm: ratio(counts.detected_removed_tp, counts.detected_removed),
        counts,
    }
}

pub fn count_metrics(
    observed_new: &PointCloud,
    observed_removed: &PointCloud,
    new: &PointCloud,
    removed: &PointCloud,
    tp: &TpClouds,
) -> MetricCounts {
    MetricCounts {
        observed_new: observed_new.len(),
        observed_new_tp: tp.observed_new_tp.len(),
        detected_new: new.len(),
        detected_new_tp: tp.new_tp.len(),
        observed_removed: observed_removed.len(),
        observed_removed_tp: tp.observed_removed_tp.len(),
        detected_removed: removed.len(),
        detected_removed_tp: tp.removed_tp.len(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub ground_truth: GroundTruthChanges,
    pub tp: TpClouds,
    pub metrics: MetricsReport,
}

/// Scores a detection. Every cloud is downsampled at `rho_p` first.
#[allow(clippy::too_many_arguments)]
pub fn evaluate<A: ObservedArea + Sync + ?Sized>(
    original_prior: &PointCloud,
    changed_prior: &PointCloud,
    global: &PointCloud,
    area: &A,
    new_points: &PointCloud,
    removed_points: &PointCloud,
    th_ch: f64,
    rho_p: f64,
    exec: &Executor,
) -> Result<Evaluation, GeometryError> {
    let ds = |c: &PointCloud| voxel_downsample(c, rho_p);
    let (original, changed, global) = (ds(original_prior)?, ds(changed_prior)?, ds(global)?);
    let (new, removed) = (ds(new_points)?, ds(removed_points)?);
    let (prior_new, prior_removed) = build_ground_truth(&original, &changed, th_ch, exec);
    let g_index = SpatialIndex::new(&global);
    let (observed_new, observed_removed) =
        restrict_to_observed(&prior_new, &prior_removed, &g_index, area, th_ch, exec);
    let tp = build_tp_clouds(&observed_removed, &observed_new, &removed, &new, th_ch, exec);
    let metrics = compute_metrics(count_metrics(&observed_new, &observed_removed, &new, &removed, &tp));
    Ok(Evaluation {
        ground_truth: GroundTruthChanges { prior_new, prior_removed, observed_new, observed_removed },
        tp,
        metrics,
    })
}

/// [`evaluate`] applied to a [`ChangeReport`].
pub fn evaluate_report(
    report: &ChangeReport,
    original_prior: &PointCloud,
    changed_prior: &PointCloud,
    th_ch: f64,
    rho_p: f64,
    exec: &Executor,
) -> Result<Evaluation, GeometryError> {
    evaluate(
        original_prior,
        changed_prior,
        &report.global_cloud,
        &report.observed_area(),
        &report.new_points,
        &report.removed_points,
        th_ch,
        rho_p,
        exec,
    )
}

/// Absolute trajectory error statistics over associated positions, m.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AteStats {
    pub rmse: f64,
    /// Population standard deviation of the per-pose error norms.
    pub std: f64,
    pub max: f64,
    pub pairs: usize,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AteError {
    #[error("only {0} poses could be associated; at least 2 are required")]
    TooFewPairs(usize),
    #[error("timestamps must be finite and increasing")]
    UnsortedTimestamps,
}

/// Pairs each estimated pose with the ground-truth pose nearest in time, if
/// within `max_dt` seconds. Both inputs must be sorted by time.
pub fn associate(
    estimated: &[(f64, Pose)],
    ground_truth: &[(f64, Pose)],
    max_dt: f64,
) -> Result<Vec<(Pose, Pose)>, AteError> {
    let sorted = |s: &[(f64, Pose)]| s.iter().all(|(t, _)| t.is_finite()) && s.windows(2).all(|w| w[0].0 < w[1].0);
    if !sorted(estimated) || !sorted(ground_truth) {
        return Err(AteError::UnsortedTimestamps);
    }
    let mut pairs = Vec::new();
    for (t, pose) in estimated {
        let i = ground_truth.partition_point(|(g, _)| g < t);
        let best = [i.checked_sub(1), Some(i)]
            .into_iter()
            .flatten()
            .filter(|&j| j < ground_truth.len())
            .min_by(|&a, &b| libm::fabs(ground_truth[a].0 - t).total_cmp(&libm::fabs(ground_truth[b].0 - t)));
        if let Some(j) = best {
            if libm::fabs(ground_truth[j].0 - t) <= max_dt {
                pairs.push((*pose, ground_truth[j].1));
            }
        }
    }
    Ok(pairs)
}

/// Rigid transform `T` minimizing `Σ ‖T·a_i − b_i‖²` (no scale).
pub fn umeyama(a: &[Vector3], b: &[Vector3]) -> Pose {
    let n = a.len().min(b.len());
    if n == 0 {
        return Pose::identity();
    }
    let mean = |v: &[Vector3]| v[..n].iter().fold(Vector3::zeros(), |s, x| s + x) / n as f64;
    let (ma, mb) = (mean(a), mean(b));
    let mut cov = Matrix3::zeros();
    for i in 0..n {
        cov += (b[i] - mb) * (a[i] - ma).transpose();
    }
    let svd = SVD::new(cov, true, true);
    let (Some(u), Some(v_t)) = (svd.u, svd.v_t) else { return Pose::identity() };
    let mut s = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        s[(2, 2)] = -1.0;
    }
    let r = u * s * v_t;
    let rotation = nalgebra::UnitQuaternion::from_matrix(&r);
    Pose::new(mb - rotation * ma, rotation)
}

/// ATE on positions. With `align`, the estimate is first rigidly aligned to
/// the ground truth.
pub fn absolute_trajectory_error(
    estimated: &[(f64, Pose)],
    ground_truth: &[(f64, Pose)],
    max_dt: f64,
    align: bool,
) -> Result<AteStats, AteError> {
    let pairs = associate(estimated, ground_truth, max_dt)?;
    if pairs.len() < 2 {
        return Err(AteError::TooFewPairs(pairs.len()));
    }
    let est: Vec<Vector3> = pairs.iter().map(|(e, _)| e.translation).collect();
    let gt: Vec<Vector3> = pairs.iter().map(|(_, g)| g.translation).collect();
    let t = if align { umeyama(&est, &gt) } else { Pose::identity() };
    let errors: Vec<f64> = est
        .iter()
        .zip(&gt)
        .map(|(e, g)| (t.transform_point(&Point3::from(*e)) - Point3::from(*g)).norm())
        .collect();
    Ok(ate_from_errors(&errors))
}

fn ate_from_errors(errors: &[f64]) -> AteStats {
    let n = errors.len() as f64;
    let mean = errors.iter().sum::<f64>() / n;
    let mean_sq = errors.iter().map(|e| e * e).sum::<f64>() / n;
    let var = errors.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / n;
    AteStats {
        rmse: libm::sqrt(mean_sq),
        std: libm::sqrt(var),
        max: errors.iter().copied().fold(0.0, f64::max),
        pairs: errors.len(),
    }
}

/// ATE between index-aligned pose lists.
pub fn ate_rmse(estimated: &[Pose], ground_truth: &[Pose]) -> f64 {
    let errors: Vec<f64> =
        estimated.iter().zip(ground_truth).map(|(e, g)| (e.translation - g.translation).norm()).collect();
    if errors.is_empty() {
        return 0.0;
    }
    ate_from_errors(&errors).rmse
}
