//! End-to-end runs on synthetic data: generate a scene pair, corrupt the
//! sensor stream, estimate poses, detect changes and score them.

use alloc::vec::Vec;

use nalgebra::{Matrix3, Matrix6};

use crate::change_detect::{detect, ChangeConfig, ChangeError, ChangeReport};
use crate::depth::{depth_to_cloud, temporal_filter_sequence, CameraIntrinsics, DepthError, FilterConfig, Keyframe};
use crate::evaluation::{ate_rmse, evaluate_report, Evaluation};
use crate::geometry::{transform_cloud, voxel_downsample, GeometryError, PointCloud, Pose};
use crate::par::Executor;
use crate::pose_graph::{optimize, Gauge, OptimizerConfig, PoseGraphError, PriorMeasurement};
use crate::registration::{register_gicp_with_target, GicpTarget, RegistrationConfig, RegistrationError};
use crate::synthworld::{
    bias_trajectory, corrupt, default_intrinsics, default_scene, generate_trajectory, make_scene_pair,
    render_keyframes, sample_surface, CorruptedStream, DepthCondition, EditManifest, NoiseSpec, PathSpec, Scene,
    SceneEdit, SynthError, Trajectory,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Depth(#[from] DepthError),
    #[error(transparent)]
    Registration(#[from] RegistrationError),
    #[error(transparent)]
    PoseGraph(#[from] PoseGraphError),
    #[error(transparent)]
    Change(#[from] ChangeError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub scene: Scene,
    pub edit: SceneEdit,
    pub path: PathSpec,
    pub intrinsics: CameraIntrinsics,
    /// Prior sampling density, points per m².
    pub prior_density: f64,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        let (scene, edit) = default_scene();
        Self { scene, edit, path: PathSpec::default(), intrinsics: default_intrinsics(), prior_density: 4.0, seed: 0 }
    }
}

/// A scene pair with sampled clouds and exact depth rendered in the changed
/// scene along the trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub original: Scene,
    pub changed: Scene,
    pub manifest: EditManifest,
    /// Sampled from the original scene; the outdated prior map.
    pub prior: PointCloud,
    /// Sampled from the changed scene; used only for ground truth.
    pub changed_cloud: PointCloud,
    pub trajectory: Trajectory,
    pub keyframes: Vec<Keyframe>,
}

pub fn generate_dataset(spec: &DatasetSpec, exec: &Executor) -> Result<Dataset, PipelineError> {
    let (original, changed, manifest) = make_scene_pair(&spec.scene, &spec.edit)?;
    let prior = sample_surface(&original, spec.prior_density, spec.seed)?;
    let changed_cloud = sample_surface(&changed, spec.prior_density, spec.seed.wrapping_add(1))?;
    // The path must clear the boxes of both scenes.
    generate_trajectory(&original, &spec.path)?;
    let trajectory = generate_trajectory(&changed, &spec.path)?;
    let keyframes = render_keyframes(&changed, &trajectory, &spec.intrinsics, exec);
    Ok(Dataset { original, changed, manifest, prior, changed_cloud, trajectory, keyframes })
}

/// Which poses drive the detection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PoseSource {
    GroundTruth,
    Odometry,
    /// Odometry fused with prior localizations.
    Fused,
    /// Ground truth with a heading drift whose largest position error is this many meters.
    Biased(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalizationConfig {
    /// Keyframes per local cloud.
    pub window: usize,
    /// Voxel size of each local cloud, m.
    pub local_rho: f64,
    /// Only pixels closer than this go into the local cloud, m.
    pub max_depth: f64,
    pub registration: RegistrationConfig,
    /// Treat the first odometry pose as exactly known: it is held fixed and
    /// becomes the reference of the relative rotation factors.
    pub fix_initial_pose: bool,
}

impl Default for LocalizationConfig {
    fn default() -> Self {
        Self {
            window: 5,
            local_rho: 0.4,
            max_depth: 60.0,
            registration: RegistrationConfig::default(),
            fix_initial_pose: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub noise: NoiseSpec,
    pub condition: DepthCondition,
    pub filter: FilterConfig,
    pub localization: LocalizationConfig,
    pub optimizer: OptimizerConfig,
    pub change: ChangeConfig,
    pub source: PoseSource,
    /// Occupancy bounds margin around the scene, m.
    pub margin: f64,
    pub thread_count: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            noise: NoiseSpec::zero(0),
            condition: DepthCondition::Normal,
            filter: FilterConfig::default(),
            localization: LocalizationConfig::default(),
            optimizer: OptimizerConfig::default(),
            change: ChangeConfig::default(),
            source: PoseSource::GroundTruth,
            margin: 5.0,
            thread_count: 4,
        }
    }
}

/// Re-expresses a registration normal matrix, which is in the left-perturbation
/// frame about the world origin, as information on a keyframe at `pose` in the
/// graph's `(δθ body, δp)` tangent.
pub fn prior_information(hessian: &Matrix6<f64>, pose: &Pose) -> Matrix6<f64> {
    // δp = δt − [p]× δθ, so x_world = A⁻¹ y with A⁻¹ = [[I, 0], [[p]×, I]].
    let p = pose.translation;
    let skew = Matrix3::new(0.0, -p.z, p.y, p.z, 0.0, -p.x, -p.y, p.x, 0.0);
    let mut a_inv = Matrix6::identity();
    a_inv.fixed_view_mut::<3, 3>(3, 0).copy_from(&skew);
    // δθ_world = R δθ_body.
    let mut rot = Matrix6::identity();
    rot.fixed_view_mut::<3, 3>(0, 0).copy_from(&pose.rotation_matrix());
    let m = a_inv * rot;
    let info = m.transpose() * hessian * m;
    0.5 * (info + info.transpose())
}

/// Outcome of localizing windows of keyframes against the prior.
#[derive(Debug, Clone, PartialEq)]
pub struct Localization {
    pub priors: Vec<PriorMeasurement>,
    /// Windows that were registered.
    pub attempted: usize,
}

/// Splits the trajectory into consecutive windows, registers each local
/// cloud to the prior and emits a prior measurement for the last keyframe of
/// every accepted window. A running correction carries earlier accepted
/// alignments into later windows.
pub fn localize(
    keyframes: &[Keyframe],
    odometry_poses: &[Pose],
    prior: &PointCloud,
    config: &LocalizationConfig,
) -> Result<Localization, PipelineError> {
    config.registration.validate()?;
    let target = GicpTarget::new(prior, config.registration.knn_for_covariance)?;
    let mut correction = Pose::identity();
    let mut priors = Vec::new();
    let mut attempted = 0;
    let window = config.window.max(1);
    for start in (0..keyframes.len()).step_by(window) {
        let end = (start + window).min(keyframes.len());
        let mut local = PointCloud::new("world");
        for k in start..end {
            let pose = correction.compose(&odometry_poses[k]);
            local.extend_from(&depth_to_cloud(&keyframes[k].with_pose(pose), config.max_depth));
        }
        let local = voxel_downsample(&local, config.local_rho)?;
        attempted += 1;
        let Ok(result) = register_gicp_with_target(&local, &target, &Pose::identity(), &config.registration) else {
            continue;
        };
        let Some(hessian) = result.information().filter(|_| result.accepted) else {
            continue;
        };
        correction = result.transform.compose(&correction);
        let last = end - 1;
        let pose = correction.compose(&odometry_poses[last]);
        priors.push(PriorMeasurement {
            index: last,
            position: pose.translation,
            orientation: pose.rotation,
            information: prior_information(&hessian, &pose),
        });
    }
    Ok(Localization { priors, attempted })
}

/// Fuses odometry with priors. Falls back to fixing the first pose when the
/// priors alone leave the graph under-determined.
pub fn fuse(
    stream: &CorruptedStream,
    priors: &[PriorMeasurement],
    config: &OptimizerConfig,
) -> Result<Vec<Pose>, PipelineError> {
    let initial = crate::pose_graph::GraphState { poses: stream.odometry_poses.clone() };
    match optimize(&initial, &stream.odometry, priors, config) {
        Ok(o) => Ok(o.state.poses),
        Err(PoseGraphError::RankDeficient { .. }) => {
            let fixed = OptimizerConfig { gauge: Gauge::FixFirst, ..config.clone() };
            Ok(optimize(&initial, &stream.odometry, priors, &fixed)?.state.poses)
        }
        Err(e) => Err(e.into()),
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub poses: Vec<Pose>,
    /// ATE RMSE of `poses` against ground truth, m.
    pub ate: f64,
    /// ATE RMSE of raw odometry, m.
    pub odometry_ate: f64,
    pub priors: usize,
    pub report: ChangeReport,
    pub evaluation: Evaluation,
}

/// Sensor stream after corruption and temporal filtering.
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub stream: CorruptedStream,
    /// Filtered keyframes; their stored poses are the odometry estimates used
    /// for filtering.
    pub filtered: Vec<Keyframe>,
}

/// Corrupts the dataset stream and filters the noisy depth using odometry
/// poses (ground truth when the noise is zero).
pub fn prepare(dataset: &Dataset, config: &RunConfig) -> Result<Prepared, PipelineError> {
    let stream = corrupt(&dataset.trajectory, &dataset.keyframes, &config.noise, config.condition)?;
    filter_stream(stream, &config.filter, config.thread_count)
}

/// Filters the depth of an already corrupted stream at its odometry poses.
pub fn filter_stream(
    stream: CorruptedStream,
    filter: &FilterConfig,
    thread_count: usize,
) -> Result<Prepared, PipelineError> {
    let exec = Executor::new(thread_count);
    let with_odom: Vec<Keyframe> =
        stream.keyframes.iter().zip(&stream.odometry_poses).map(|(k, p)| k.with_pose(*p)).collect();
    let depth = temporal_filter_sequence(&with_odom, filter, &exec)?;
    let filtered = with_odom.iter().zip(depth).map(|(k, d)| k.with_depth(d)).collect();
    Ok(Prepared { stream, filtered })
}

/// Poses for `source`, plus the number of accepted priors.
pub fn estimate_poses(
    dataset: &Dataset,
    prepared: &Prepared,
    config: &RunConfig,
) -> Result<(Vec<Pose>, usize), PipelineError> {
    Ok(match config.source {
        PoseSource::GroundTruth => (dataset.trajectory.poses.clone(), 0),
        PoseSource::Odometry => (prepared.stream.odometry_poses.clone(), 0),
        PoseSource::Biased(e) => (bias_trajectory(&dataset.trajectory.poses, e), 0),
        PoseSource::Fused => {
            let odometry = &prepared.stream.odometry_poses;
            let loc = localize(&prepared.filtered, odometry, &dataset.prior, &config.localization)?;
            let count = loc.priors.len();
            let mut priors = loc.priors;
            let mut optimizer = config.optimizer.clone();
            if config.localization.fix_initial_pose && !odometry.is_empty() {
                priors.retain(|p| p.index != 0);
                priors.insert(
                    0,
                    PriorMeasurement {
                        index: 0,
                        position: odometry[0].translation,
                        orientation: odometry[0].rotation,
                        information: Matrix6::identity(),
                    },
                );
                optimizer.gauge = Gauge::FixFirst;
            }
            (fuse(&prepared.stream, &priors, &optimizer)?, count)
        }
    })
}

/// Detection and scoring for a given set of poses.
pub fn detect_and_evaluate(
    dataset: &Dataset,
    filtered: &[Keyframe],
    poses: &[Pose],
    change: &ChangeConfig,
    margin: f64,
) -> Result<(ChangeReport, Evaluation), PipelineError> {
    let bounds = dataset.changed.bounds(margin);
    let report = detect(filtered, poses, &dataset.prior, bounds, change)?;
    let exec = Executor::new(change.thread_count);
    let evaluation =
        evaluate_report(&report, &dataset.prior, &dataset.changed_cloud, change.th_ch, change.rho_p, &exec)?;
    Ok((report, evaluation))
}

pub fn run(dataset: &Dataset, config: &RunConfig) -> Result<RunOutput, PipelineError> {
    let prepared = prepare(dataset, config)?;
    let (poses, priors) = estimate_poses(dataset, &prepared, config)?;
    let (report, evaluation) = detect_and_evaluate(dataset, &prepared.filtered, &poses, &config.change, config.margin)?;
    Ok(RunOutput {
        ate: ate_rmse(&poses, &dataset.trajectory.poses),
        odometry_ate: ate_rmse(&prepared.stream.odometry_poses, &dataset.trajectory.poses),
        poses,
        priors,
        report,
        evaluation,
    })
}

/// Global cloud of `keyframes` at `poses` mapped back by `correction`; a
/// convenience for exporting intermediate clouds.
pub fn corrected_cloud(keyframes: &[Keyframe], poses: &[Pose], correction: &Pose, max_depth: f64) -> PointCloud {
    let mut all = PointCloud::new("world");
    for (k, p) in keyframes.iter().zip(poses) {
        all.extend_from(&depth_to_cloud(&k.with_pose(*p), max_depth));
    }
    transform_cloud(&all, correction)
}

/// Fraction of points flagged as changed in a report: new points over the
/// global cloud and removed points over the prior cloud they were drawn from.
pub fn changed_fraction(report: &ChangeReport) -> (f64, f64) {
    let frac = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    (
        frac(report.new_points.len(), report.global_cloud.len()),
        frac(report.removed_points.len(), report.prior_cloud.len()),
    )
}
