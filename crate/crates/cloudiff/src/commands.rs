//! Subcommand implementations. Each returns the text printed on success.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use cloudiff_core::evaluation::{absolute_trajectory_error, AteStats, Evaluation};
use cloudiff_core::change_detect::ChangeReport;
use cloudiff_core::par::Executor;
use cloudiff_core::pipeline::{
    detect_and_evaluate, estimate_poses, filter_stream, generate_dataset, DatasetSpec, PipelineError, PoseSource,
    RunConfig,
};
use cloudiff_core::registration::register_gicp;
use cloudiff_core::synthworld::{corrupt, default_intrinsics, default_scene, PathSpec, SceneEdit};
use cloudiff_core::Pose;
use serde::Serialize;

use crate::config::{unknown_knob, ConfigError, Settings, SWEEP_KNOBS};
use crate::io::dataset::{read_dataset, write_dataset, LoadedDataset, SceneFile, SceneFileParts};
use crate::io::depth::write_depth;
use crate::io::ply::{read_ply, write_ply};
use crate::io::report::{format_csv, format_voxels, pose_array, AteJson, CsvRow, Summary};
use crate::io::trajectory::{read_trajectory, write_trajectory};
use crate::io::FormatError;
use crate::plot::line_plot;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Synth,
    Filter,
    Register,
    Optimize,
    Detect,
    Evaluate,
    Sweep,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    /// Unusable input files or output location.
    #[error("{0}")]
    Input(String),
    /// A pipeline stage failed after validation.
    #[error("{stage} failed: {message}")]
    Stage { stage: &'static str, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Input(_) => 2,
            Self::Stage { .. } => 3,
        }
    }
}

fn stage<E: std::fmt::Display>(stage: &'static str) -> impl Fn(E) -> CliError {
    move |e| CliError::Stage { stage, message: e.to_string() }
}

fn write_err(e: impl std::fmt::Display) -> CliError {
    CliError::Stage { stage: "write", message: e.to_string() }
}

pub fn run(command: Command, settings: &Settings) -> Result<String, CliError> {
    match command {
        Command::Synth => synth(settings),
        Command::Filter => filter(settings),
        Command::Register => register(settings),
        Command::Optimize => optimize(settings),
        Command::Detect => detect(settings),
        Command::Evaluate => evaluate(settings),
        Command::Sweep => sweep(settings),
    }
}

fn required<'a, T>(v: &'a Option<T>, name: &'static str) -> Result<&'a T, CliError> {
    v.as_ref().ok_or(CliError::Config(ConfigError::Missing(name)))
}

/// Creates `dir`, refusing to reuse a non-empty directory unless `overwrite`.
pub fn prepare_output(dir: &Path, overwrite: bool) -> Result<(), CliError> {
    if dir.exists() {
        if !dir.is_dir() {
            return Err(CliError::Input(format!("{} exists and is not a directory", dir.display())));
        }
        let non_empty = fs::read_dir(dir).map_err(write_err)?.next().is_some();
        if non_empty && !overwrite {
            return Err(CliError::Input(format!("{} is not empty; pass --overwrite to replace its contents", dir.display())));
        }
    }
    fs::create_dir_all(dir).map_err(write_err)
}

fn clear_subdir(dir: &Path, name: &str) -> Result<(), CliError> {
    let sub = dir.join(name);
    if sub.is_dir() {
        fs::remove_dir_all(&sub).map_err(write_err)?;
    }
    Ok(())
}

pub fn load(settings: &Settings) -> Result<LoadedDataset, CliError> {
    let dir = required(&settings.dataset, "dataset")?;
    read_dataset(dir).map_err(|e| CliError::Input(format!("dataset {}: {e}", dir.display())))
}

fn synth(settings: &Settings) -> Result<String, CliError> {
    let out = required(&settings.output, "output")?;
    let cfg = settings.run_config()?;
    if !(settings.prior_density > 0.0) || !(settings.height > 0.0) {
        return Err(ConfigError::Invalid("prior_density and height must be positive".into()).into());
    }
    prepare_output(out, settings.overwrite)?;
    clear_subdir(out, "depth")?;

    let (scene, default_edit) = default_scene();
    let edit = if settings.unchanged { SceneEdit::default() } else { default_edit };
    let path = PathSpec { height: settings.height, ..PathSpec::default() };
    let spec = DatasetSpec {
        scene: scene.clone(),
        edit: edit.clone(),
        path,
        intrinsics: default_intrinsics(),
        prior_density: settings.prior_density,
        seed: settings.seed,
    };
    let dataset = generate_dataset(&spec, &Executor::new(settings.threads)).map_err(stage("synth"))?;
    let stream = corrupt(&dataset.trajectory, &dataset.keyframes, &cfg.noise, cfg.condition).map_err(stage("corrupt"))?;
    let meta = SceneFile::new(SceneFileParts {
        scene: &scene,
        edit: &edit,
        dataset: &dataset,
        path: &path,
        noise: &cfg.noise,
        noise_name: settings.noise.name(),
        condition: cfg.condition,
        prior_density: settings.prior_density,
        seed: settings.seed,
    });
    write_dataset(out, &meta, &dataset, &stream).map_err(write_err)?;
    Ok(format!(
        "wrote {} keyframes, {} prior points and {} changed-scene points to {}",
        dataset.keyframes.len(),
        dataset.prior.len(),
        dataset.changed_cloud.len(),
        out.display()
    ))
}

#[derive(Serialize)]
struct FilterStats {
    keyframes: usize,
    raw_valid: usize,
    filtered_valid: usize,
}

fn filter(settings: &Settings) -> Result<String, CliError> {
    let out = required(&settings.output, "output")?;
    let cfg = settings.run_config()?;
    let loaded = load(settings)?;
    prepare_output(out, settings.overwrite)?;
    clear_subdir(out, "depth")?;
    let prepared = filter_stream(loaded.stream, &cfg.filter, cfg.thread_count).map_err(stage("filter"))?;
    fs::create_dir_all(out.join("depth")).map_err(write_err)?;
    for (i, kf) in prepared.filtered.iter().enumerate() {
        write_depth(&crate::io::dataset::depth_path(out, i), &kf.depth).map_err(write_err)?;
    }
    let stats = FilterStats {
        keyframes: prepared.filtered.len(),
        raw_valid: prepared.stream.keyframes.iter().map(|k| k.depth.valid_count()).sum(),
        filtered_valid: prepared.filtered.iter().map(|k| k.depth.valid_count()).sum(),
    };
    let json = serde_json::to_string_pretty(&stats).map_err(write_err)?;
    fs::write(out.join("filter.json"), format!("{json}\n")).map_err(write_err)?;
    Ok(json)
}

#[derive(Serialize)]
struct RegistrationJson {
    transform: [f64; 7],
    converged: bool,
    accepted: bool,
    fitness: f64,
    iterations: usize,
    covariance: Option<[[f64; 6]; 6]>,
}

fn register(settings: &Settings) -> Result<String, CliError> {
    let read = |p: &Option<PathBuf>, name: &'static str| -> Result<_, CliError> {
        let p = required(p, name)?;
        read_ply(p).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))
    };
    let cfg = settings.registration();
    cfg.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
    let (local, prior) = (read(&settings.local, "local")?, read(&settings.prior, "prior")?);
    if let Some(out) = &settings.output {
        prepare_output(out, settings.overwrite)?;
    }
    let r = register_gicp(&local, &prior, &Pose::identity(), &cfg).map_err(stage("registration"))?;
    let json = RegistrationJson {
        transform: pose_array(&r.transform),
        converged: r.converged,
        accepted: r.accepted,
        fitness: r.fitness,
        iterations: r.iterations,
        covariance: r.covariance.map(|c| std::array::from_fn(|i| std::array::from_fn(|j| c[(i, j)]))),
    };
    let text = serde_json::to_string_pretty(&json).map_err(write_err)?;
    if let Some(out) = &settings.output {
        fs::write(out.join("registration.json"), format!("{text}\n")).map_err(write_err)?;
    }
    Ok(text)
}

fn stamped(times: &[f64], poses: &[Pose]) -> Vec<(f64, Pose)> {
    times.iter().copied().zip(poses.iter().copied()).collect()
}

fn ate(loaded: &LoadedDataset, poses: &[Pose]) -> Result<AteStats, CliError> {
    let t = &loaded.dataset.trajectory;
    absolute_trajectory_error(&stamped(&t.timestamps, poses), &t.stamped(), 0.01, false).map_err(stage("evaluate"))
}

#[derive(Serialize)]
struct OptimizeJson {
    priors: usize,
    odometry: AteJson,
    fused: AteJson,
}

fn optimize(settings: &Settings) -> Result<String, CliError> {
    let out = required(&settings.output, "output")?;
    let cfg = RunConfig { source: PoseSource::Fused, ..settings.run_config()? };
    let loaded = load(settings)?;
    prepare_output(out, settings.overwrite)?;
    let prepared = filter_stream(loaded.stream.clone(), &cfg.filter, cfg.thread_count).map_err(stage("filter"))?;
    let (poses, priors) = estimate_poses(&loaded.dataset, &prepared, &cfg).map_err(pose_stage)?;
    write_trajectory(&out.join("traj_fused.txt"), &stamped(&loaded.dataset.trajectory.timestamps, &poses))
        .map_err(write_err)?;
    let json = OptimizeJson {
        priors,
        odometry: ate(&loaded, &loaded.stream.odometry_poses)?.into(),
        fused: ate(&loaded, &poses)?.into(),
    };
    let text = serde_json::to_string_pretty(&json).map_err(write_err)?;
    fs::write(out.join("ate.json"), format!("{text}\n")).map_err(write_err)?;
    Ok(text)
}

fn pose_stage(e: PipelineError) -> CliError {
    let name = match e {
        PipelineError::Registration(_) => "registration",
        PipelineError::PoseGraph(_) => "pose optimization",
        _ => "pose estimation",
    };
    CliError::Stage { stage: name, message: e.to_string() }
}

/// Everything produced by one detection run.
pub struct DetectRun {
    pub poses: Vec<Pose>,
    pub priors: usize,
    pub report: ChangeReport,
    pub evaluation: Evaluation,
    pub ate: AteStats,
    pub odometry_ate: AteStats,
}

pub fn detect_run(loaded: &LoadedDataset, cfg: &RunConfig) -> Result<DetectRun, CliError> {
    let prepared = filter_stream(loaded.stream.clone(), &cfg.filter, cfg.thread_count).map_err(stage("filter"))?;
    let (poses, priors) = estimate_poses(&loaded.dataset, &prepared, cfg).map_err(pose_stage)?;
    let (report, evaluation) =
        detect_and_evaluate(&loaded.dataset, &prepared.filtered, &poses, &cfg.change, cfg.margin).map_err(stage("detect"))?;
    Ok(DetectRun {
        ate: ate(loaded, &poses)?,
        odometry_ate: ate(loaded, &loaded.stream.odometry_poses)?,
        poses,
        priors,
        report,
        evaluation,
    })
}

fn label(settings: &Settings, loaded: &LoadedDataset) -> String {
    settings.label.clone().unwrap_or_else(|| {
        settings
            .dataset
            .as_deref()
            .and_then(|p| p.file_name())
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| loaded.meta.scene.name.clone())
    })
}

fn csv_row(settings: &Settings, loaded: &LoadedDataset, run: &DetectRun) -> CsvRow {
    CsvRow::new(
        &label(settings, loaded),
        &loaded.meta.noise_name,
        settings.poses.name(),
        settings.th_f,
        settings.th_ch,
        &run.evaluation.metrics,
    )
}

fn write_detect(dir: &Path, settings: &Settings, loaded: &LoadedDataset, run: &DetectRun) -> Result<CsvRow, FormatError> {
    let r = &run.report;
    write_ply(&dir.join("global.ply"), &r.global_cloud)?;
    write_ply(&dir.join("prior.ply"), &r.prior_cloud)?;
    write_ply(&dir.join("observed_prior.ply"), &r.observed_prior)?;
    write_ply(&dir.join("new.ply"), &r.new_points)?;
    write_ply(&dir.join("removed.ply"), &r.removed_points)?;
    write_trajectory(&dir.join("traj_est.txt"), &stamped(&loaded.dataset.trajectory.timestamps, &run.poses))?;
    let summary = Summary::new(settings.poses.name(), run.priors, run.ate, run.odometry_ate, r, &run.evaluation.metrics);
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    let row = csv_row(settings, loaded, run);
    fs::write(dir.join("metrics.csv"), format_csv(std::slice::from_ref(&row)))?;
    if settings.export_voxels {
        fs::write(dir.join("voxels.txt"), format_voxels(&r.occupancy))?;
    }
    Ok(row)
}

fn detect(settings: &Settings) -> Result<String, CliError> {
    let out = required(&settings.output, "output")?;
    let cfg = settings.run_config()?;
    let loaded = load(settings)?;
    prepare_output(out, settings.overwrite)?;
    let run = detect_run(&loaded, &cfg)?;
    let row = write_detect(out, settings, &loaded, &run).map_err(write_err)?;
    Ok(format_csv(&[row]).trim_end().to_string())
}

fn evaluate(settings: &Settings) -> Result<String, CliError> {
    let read = |p: &Option<PathBuf>, name: &'static str| -> Result<_, CliError> {
        let p = required(p, name)?;
        read_trajectory(p).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))
    };
    if !(settings.max_dt >= 0.0) {
        return Err(ConfigError::Invalid("max_dt must be non-negative".into()).into());
    }
    let est = read(&settings.estimated, "estimated")?;
    let gt = read(&settings.ground_truth, "ground_truth")?;
    let stats = absolute_trajectory_error(&est, &gt, settings.max_dt, settings.ate_align).map_err(stage("evaluate"))?;
    let text = serde_json::to_string_pretty(&AteJson::from(stats)).map_err(write_err)?;
    if let Some(out) = &settings.output {
        prepare_output(out, settings.overwrite)?;
        fs::write(out.join("ate.json"), format!("{text}\n")).map_err(write_err)?;
    }
    Ok(text)
}

/// Directory name of one sweep point.
pub fn sweep_dir(param: &str, value: f64) -> String {
    format!("{param}_{value}")
}

fn sweep(settings: &Settings) -> Result<String, CliError> {
    let out = required(&settings.output, "output")?;
    let param = required(&settings.param, "param")?.clone();
    if !SWEEP_KNOBS.contains(&param.as_str()) {
        return Err(unknown_knob(&param).into());
    }
    if settings.values.is_empty() {
        return Err(ConfigError::Missing("values").into());
    }
    let workers = settings.threads.min(settings.values.len()).max(1);
    let mut points = Vec::with_capacity(settings.values.len());
    for &v in &settings.values {
        let mut s = settings.clone();
        s.set_knob(&param, v)?;
        s.threads = (settings.threads / workers).max(1);
        let cfg = s.run_config()?;
        points.push((v, s, cfg));
    }
    let loaded = load(settings)?;
    prepare_output(out, settings.overwrite)?;

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<CsvRow, CliError>>>> = Mutex::new((0..points.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some((v, s, cfg)) = points.get(i) else { break };
                let result = (|| {
                    let run = detect_run(&loaded, cfg)?;
                    let dir = out.join(sweep_dir(&param, *v));
                    fs::create_dir_all(&dir).map_err(write_err)?;
                    write_detect(&dir, s, &loaded, &run).map_err(write_err)
                })();
                results.lock().unwrap()[i] = Some(result);
            });
        }
    });
    let rows: Vec<CsvRow> = results.into_inner().unwrap().into_iter().map(|r| r.expect("every point ran")).collect::<Result<_, _>>()?;

    let csv = format_csv(&rows);
    fs::write(out.join("metrics.csv"), &csv).map_err(write_err)?;
    let names = ["R_new", "P_new", "R_rm", "P_rm"];
    let series: Vec<(&str, Vec<Option<f64>>)> =
        names.iter().enumerate().map(|(k, n)| (*n, rows.iter().map(|r| r.metrics[k]).collect())).collect();
    let svg = line_plot(&format!("{} sweep", param), &param, &settings.values, &series);
    fs::write(out.join("plot.svg"), svg).map_err(write_err)?;
    Ok(csv.trim_end().to_string())
}
