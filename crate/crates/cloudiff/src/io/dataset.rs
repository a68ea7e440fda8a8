//! Synthetic dataset directories.
//!
//! ```text
//! scene.json          scene, edit, camera, path, noise and seed (format version 1)
//! prior.ply           cloud sampled from the original scene
//! changed.ply         cloud sampled from the changed scene (ground truth only)
//! traj_gt.txt         ground-truth keyframe poses
//! odometry.txt        keyframe poses chained from noisy odometry
//! depth/NNNNNN.bin    noisy depth per keyframe
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use cloudiff_core::depth::{CameraIntrinsics, Keyframe};
use cloudiff_core::pipeline::Dataset;
use cloudiff_core::pose_graph::OdometryMeasurement;
use cloudiff_core::synthworld::{
    make_scene_pair, Aabb, CorruptedStream, DepthCondition, NoiseSpec, PathSpec, Scene, SceneEdit, Trajectory,
};
use cloudiff_core::{Point3, Pose};
use serde::{Deserialize, Serialize};

use super::depth::{read_depth, write_depth};
use super::ply::{read_ply, write_ply};
use super::trajectory::{read_trajectory, write_trajectory};
use super::FormatError;

pub const DATASET_FORMAT: &str = "cloudiff-dataset";
pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxJson {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl From<&Aabb> for BoxJson {
    fn from(b: &Aabb) -> Self {
        Self { min: b.min.into(), max: b.max.into() }
    }
}

impl From<BoxJson> for Aabb {
    fn from(b: BoxJson) -> Self {
        Aabb { min: Point3::from(b.min), max: Point3::from(b.max) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneJson {
    pub name: String,
    pub boxes: Vec<BoxJson>,
    pub ground_min: [f64; 2],
    pub ground_max: [f64; 2],
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditJson {
    /// Indices into the original boxes.
    pub remove: Vec<usize>,
    pub add: Vec<BoxJson>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraJson {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathJson {
    pub center: [f64; 2],
    pub half_extents: [f64; 2],
    pub corner_radius: f64,
    pub height: f64,
    pub speed: f64,
    pub rate: f64,
    pub pitch: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseJson {
    pub sigma_g: f64,
    pub sigma_a: f64,
    pub sigma_bg: f64,
    pub sigma_ba: f64,
    pub sigma_img: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ConditionJson {
    Normal,
    Mirror { fraction: f64, factor: f64 },
    Dark { dropout: f64 },
}

/// Contents of `scene.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneFile {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    /// Noise regime name the dataset was generated with, for reports.
    pub noise_name: String,
    pub scene: SceneJson,
    pub edit: EditJson,
    /// Boxes removed from and added to the original scene.
    pub removed: Vec<BoxJson>,
    pub added: Vec<BoxJson>,
    pub camera: CameraJson,
    pub path: PathJson,
    pub noise: NoiseJson,
    pub condition: ConditionJson,
    pub prior_density: f64,
    pub keyframes: usize,
}

impl SceneFile {
    pub fn scene(&self) -> Scene {
        let s = &self.scene;
        Scene {
            name: s.name.clone(),
            boxes: s.boxes.iter().map(|&b| b.into()).collect(),
            ground_min: s.ground_min,
            ground_max: s.ground_max,
            height: s.height,
        }
    }

    pub fn edit(&self) -> SceneEdit {
        SceneEdit { remove: self.edit.remove.clone(), add: self.edit.add.iter().map(|&b| b.into()).collect() }
    }

    pub fn intrinsics(&self) -> Result<CameraIntrinsics, FormatError> {
        let c = self.camera;
        CameraIntrinsics::new(c.fx, c.fy, c.cx, c.cy, c.width, c.height).map_err(|e| FormatError::Invalid(e.to_string()))
    }

    pub fn path_spec(&self) -> PathSpec {
        let p = self.path;
        PathSpec {
            center: p.center,
            half_extents: p.half_extents,
            corner_radius: p.corner_radius,
            height: p.height,
            speed: p.speed,
            rate: p.rate,
            pitch: p.pitch,
        }
    }

    pub fn noise(&self) -> NoiseSpec {
        let n = self.noise;
        NoiseSpec {
            sigma_g: n.sigma_g,
            sigma_a: n.sigma_a,
            sigma_bg: n.sigma_bg,
            sigma_ba: n.sigma_ba,
            sigma_img: n.sigma_img,
            seed: n.seed,
        }
    }

    pub fn condition(&self) -> DepthCondition {
        match self.condition {
            ConditionJson::Normal => DepthCondition::Normal,
            ConditionJson::Mirror { fraction, factor } => DepthCondition::Mirror { fraction, factor },
            ConditionJson::Dark { dropout } => DepthCondition::Dark { dropout },
        }
    }
}

/// Everything needed to describe a generated dataset in `scene.json`.
pub struct SceneFileParts<'a> {
    pub scene: &'a Scene,
    pub edit: &'a SceneEdit,
    pub dataset: &'a Dataset,
    pub path: &'a PathSpec,
    pub noise: &'a NoiseSpec,
    pub noise_name: &'a str,
    pub condition: DepthCondition,
    pub prior_density: f64,
    pub seed: u64,
}

impl SceneFile {
    pub fn new(p: SceneFileParts<'_>) -> Self {
        let k = p.dataset.keyframes.first().map(|k| k.intrinsics);
        let k = k.unwrap_or_else(cloudiff_core::synthworld::default_intrinsics);
        let n = p.noise;
        Self {
            format: DATASET_FORMAT.into(),
            version: DATASET_VERSION,
            seed: p.seed,
            noise_name: p.noise_name.into(),
            scene: SceneJson {
                name: p.scene.name.clone(),
                boxes: p.scene.boxes.iter().map(BoxJson::from).collect(),
                ground_min: p.scene.ground_min,
                ground_max: p.scene.ground_max,
                height: p.scene.height,
            },
            edit: EditJson { remove: p.edit.remove.clone(), add: p.edit.add.iter().map(BoxJson::from).collect() },
            removed: p.dataset.manifest.removed.iter().map(BoxJson::from).collect(),
            added: p.dataset.manifest.added.iter().map(BoxJson::from).collect(),
            camera: CameraJson { fx: k.fx, fy: k.fy, cx: k.cx, cy: k.cy, width: k.width, height: k.height },
            path: PathJson {
                center: p.path.center,
                half_extents: p.path.half_extents,
                corner_radius: p.path.corner_radius,
                height: p.path.height,
                speed: p.path.speed,
                rate: p.path.rate,
                pitch: p.path.pitch,
            },
            noise: NoiseJson {
                sigma_g: n.sigma_g,
                sigma_a: n.sigma_a,
                sigma_bg: n.sigma_bg,
                sigma_ba: n.sigma_ba,
                sigma_img: n.sigma_img,
                seed: n.seed,
            },
            condition: match p.condition {
                DepthCondition::Normal => ConditionJson::Normal,
                DepthCondition::Mirror { fraction, factor } => ConditionJson::Mirror { fraction, factor },
                DepthCondition::Dark { dropout } => ConditionJson::Dark { dropout },
            },
            prior_density: p.prior_density,
            keyframes: p.dataset.keyframes.len(),
        }
    }
}

pub fn depth_path(dir: &Path, index: usize) -> PathBuf {
    dir.join("depth").join(format!("{index:06}.bin"))
}

/// Writes a dataset; `stream` supplies the odometry and the noisy depth.
pub fn write_dataset(dir: &Path, meta: &SceneFile, dataset: &Dataset, stream: &CorruptedStream) -> Result<(), FormatError> {
    fs::create_dir_all(dir.join("depth"))?;
    fs::write(dir.join("scene.json"), serde_json::to_string_pretty(meta)? + "\n")?;
    write_ply(&dir.join("prior.ply"), &dataset.prior)?;
    write_ply(&dir.join("changed.ply"), &dataset.changed_cloud)?;
    write_trajectory(&dir.join("traj_gt.txt"), &dataset.trajectory.stamped())?;
    let odom: Vec<(f64, Pose)> =
        dataset.trajectory.timestamps.iter().copied().zip(stream.odometry_poses.iter().copied()).collect();
    write_trajectory(&dir.join("odometry.txt"), &odom)?;
    for (i, kf) in stream.keyframes.iter().enumerate() {
        write_depth(&depth_path(dir, i), &kf.depth)?;
    }
    Ok(())
}

/// A dataset read back from disk. `dataset.keyframes` and `stream.keyframes`
/// both hold the stored noisy depth at ground-truth poses.
#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub meta: SceneFile,
    pub dataset: Dataset,
    pub stream: CorruptedStream,
}

fn invalid(file: &str, e: impl std::fmt::Display) -> FormatError {
    FormatError::Invalid(format!("{file}: {e}"))
}

fn in_file<T>(file: &str, r: Result<T, FormatError>) -> Result<T, FormatError> {
    r.map_err(|e| match e {
        FormatError::Io(e) => invalid(file, e),
        FormatError::Invalid(m) => invalid(file, m),
    })
}

/// Reads and structurally validates a dataset directory.
pub fn read_dataset(dir: &Path) -> Result<LoadedDataset, FormatError> {
    if !dir.is_dir() {
        return Err(FormatError::Invalid(format!("{} is not a dataset directory", dir.display())));
    }
    let text = in_file("scene.json", fs::read_to_string(dir.join("scene.json")).map_err(Into::into))?;
    let meta: SceneFile = serde_json::from_str(&text).map_err(|e| invalid("scene.json", e))?;
    if meta.format != DATASET_FORMAT || meta.version != DATASET_VERSION {
        return Err(invalid("scene.json", format!("unsupported format {} version {}", meta.format, meta.version)));
    }
    let (original, changed, manifest) = make_scene_pair(&meta.scene(), &meta.edit()).map_err(|e| invalid("scene.json", e))?;
    let intrinsics = in_file("scene.json", meta.intrinsics())?;
    let noise = meta.noise();
    noise.validate().map_err(|e| invalid("scene.json", e))?;

    let prior = in_file("prior.ply", read_ply(&dir.join("prior.ply")))?;
    let changed_cloud = in_file("changed.ply", read_ply(&dir.join("changed.ply")))?;
    let gt = in_file("traj_gt.txt", read_trajectory(&dir.join("traj_gt.txt")))?;
    let odom = in_file("odometry.txt", read_trajectory(&dir.join("odometry.txt")))?;
    if gt.len() != meta.keyframes || odom.len() != gt.len() {
        return Err(FormatError::Invalid(format!(
            "expected {} keyframes, traj_gt.txt has {} and odometry.txt has {}",
            meta.keyframes,
            gt.len(),
            odom.len()
        )));
    }
    if gt.windows(2).any(|w| !(w[1].0 > w[0].0)) || gt.iter().zip(&odom).any(|(a, b)| a.0 != b.0) {
        return Err(invalid("odometry.txt", "timestamps must be increasing and match traj_gt.txt"));
    }

    let mut keyframes = Vec::with_capacity(gt.len());
    for (i, (t, pose)) in gt.iter().enumerate() {
        let name = format!("depth/{i:06}.bin");
        let depth = in_file(&name, read_depth(&depth_path(dir, i)))?;
        if depth.width() != intrinsics.width || depth.height() != intrinsics.height {
            return Err(invalid(&name, "image size does not match the camera"));
        }
        keyframes.push(Keyframe { id: i as u64, timestamp: *t, pose: *pose, depth, intrinsics });
    }
    let extra = fs::read_dir(dir.join("depth"))?.count();
    if extra != keyframes.len() {
        return Err(invalid("depth", format!("{extra} files for {} keyframes", keyframes.len())));
    }

    let timestamps: Vec<f64> = gt.iter().map(|(t, _)| *t).collect();
    let horizon = timestamps.last().unwrap_or(&0.0) - timestamps.first().unwrap_or(&0.0);
    let odometry_poses: Vec<Pose> = odom.iter().map(|(_, p)| *p).collect();
    let odometry = odometry_poses
        .windows(2)
        .enumerate()
        .map(|(i, w)| OdometryMeasurement {
            from: i,
            to: i + 1,
            relative: w[0].between(&w[1]),
            information: noise.odometry_information(timestamps[i + 1] - timestamps[i], horizon),
        })
        .collect();
    let trajectory = Trajectory { timestamps, poses: gt.iter().map(|(_, p)| *p).collect(), height: meta.path.height };
    let stream = CorruptedStream { odometry, odometry_poses, keyframes: keyframes.clone() };
    let dataset = Dataset { original, changed, manifest, prior, changed_cloud, trajectory, keyframes };
    Ok(LoadedDataset { meta, dataset, stream })
}
