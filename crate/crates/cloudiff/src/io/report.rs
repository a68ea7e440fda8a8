//! Metric CSV rows, run summaries and voxel exports.

use std::fmt::Write as _;

use cloudiff_core::change_detect::ChangeReport;
use cloudiff_core::evaluation::{AteStats, MetricCounts, MetricsReport};
use cloudiff_core::occupancy::{OccupancyOctree, VoxelState};
use cloudiff_core::Pose;
use serde::{Deserialize, Serialize};

use super::FormatError;

pub const CSV_HEADER: &str = "trajectory,noise,poses,th_f,th_ch,R_new,P_new,R_rm,P_rm,\
observed_new,observed_new_tp,detected_new,detected_new_tp,\
observed_removed,observed_removed_tp,detected_removed,detected_removed_tp";

/// One detection run. Undefined metrics (empty denominators) are written as `NA`.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub trajectory: String,
    pub noise: String,
    pub poses: String,
    pub th_f: f64,
    pub th_ch: f64,
    pub metrics: [Option<f64>; 4],
    pub counts: MetricCounts,
}

impl CsvRow {
    pub fn new(trajectory: &str, noise: &str, poses: &str, th_f: f64, th_ch: f64, m: &MetricsReport) -> Self {
        let clean = |s: &str| s.replace([',', '\n', '\r'], "_");
        Self {
            trajectory: clean(trajectory),
            noise: clean(noise),
            poses: clean(poses),
            th_f,
            th_ch,
            metrics: m.as_array(),
            counts: m.counts,
        }
    }

    pub fn format(&self) -> String {
        let c = &self.counts;
        let mut s = format!("{},{},{},{},{}", self.trajectory, self.noise, self.poses, self.th_f, self.th_ch);
        for m in self.metrics {
            match m {
                Some(v) => write!(s, ",{v}"),
                None => write!(s, ",NA"),
            }
            .unwrap();
        }
        for n in [
            c.observed_new,
            c.observed_new_tp,
            c.detected_new,
            c.detected_new_tp,
            c.observed_removed,
            c.observed_removed_tp,
            c.detected_removed,
            c.detected_removed_tp,
        ] {
            write!(s, ",{n}").unwrap();
        }
        s
    }

    pub fn parse(line: &str) -> Result<Self, FormatError> {
        let f: Vec<&str> = line.trim_end().split(',').collect();
        let bad = |what: &str| FormatError::Invalid(format!("bad CSV row ({what}): {line}"));
        if f.len() != 17 {
            return Err(bad("field count"));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(s));
        let metric = |s: &str| if s == "NA" { Ok(None) } else { num(s).map(Some) };
        let count = |i: usize| f[i].parse::<usize>().map_err(|_| bad(f[i]));
        Ok(Self {
            trajectory: f[0].into(),
            noise: f[1].into(),
            poses: f[2].into(),
            th_f: num(f[3])?,
            th_ch: num(f[4])?,
            metrics: [metric(f[5])?, metric(f[6])?, metric(f[7])?, metric(f[8])?],
            counts: MetricCounts {
                observed_new: count(9)?,
                observed_new_tp: count(10)?,
                detected_new: count(11)?,
                detected_new_tp: count(12)?,
                observed_removed: count(13)?,
                observed_removed_tp: count(14)?,
                detected_removed: count(15)?,
                detected_removed_tp: count(16)?,
            },
        })
    }
}

pub fn format_csv(rows: &[CsvRow]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.format());
        s.push('\n');
    }
    s
}

pub fn parse_csv(text: &str) -> Result<Vec<CsvRow>, FormatError> {
    let mut lines = text.lines();
    if lines.next().map(str::trim_end) != Some(CSV_HEADER) {
        return Err(FormatError::Invalid("unexpected CSV header".into()));
    }
    lines.filter(|l| !l.trim().is_empty()).map(CsvRow::parse).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AteJson {
    pub rmse: f64,
    pub std: f64,
    pub max: f64,
    pub pairs: usize,
}

impl From<AteStats> for AteJson {
    fn from(s: AteStats) -> Self {
        Self { rmse: s.rmse, std: s.std, max: s.max, pairs: s.pairs }
    }
}

/// `[tx, ty, tz, qx, qy, qz, qw]`
pub fn pose_array(p: &Pose) -> [f64; 7] {
    let q = p.rotation.quaternion();
    [p.translation.x, p.translation.y, p.translation.z, q.i, q.j, q.k, q.w]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentJson {
    pub attempted: bool,
    pub accepted: bool,
    pub unaligned: bool,
    pub fitness: Option<f64>,
    pub transform: [f64; 7],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloudSizes {
    pub global: usize,
    pub prior: usize,
    pub observed_prior: usize,
    pub new: usize,
    pub removed: usize,
    pub observed_voxels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsJson {
    pub r_new: Option<f64>,
    pub p_new: Option<f64>,
    pub r_rm: Option<f64>,
    pub p_rm: Option<f64>,
}

/// Contents of `summary.json` written by `detect`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub poses: String,
    pub priors: usize,
    pub ate: AteJson,
    pub odometry_ate: AteJson,
    pub sizes: CloudSizes,
    /// `(new / global, removed / prior)`
    pub changed_fraction: [f64; 2],
    pub metrics: MetricsJson,
    pub alignment: AlignmentJson,
}

impl Summary {
    pub fn new(poses: &str, priors: usize, ate: AteStats, odometry_ate: AteStats, report: &ChangeReport, m: &MetricsReport) -> Self {
        let (f_new, f_rm) = cloudiff_core::pipeline::changed_fraction(report);
        Self {
            poses: poses.into(),
            priors,
            ate: ate.into(),
            odometry_ate: odometry_ate.into(),
            sizes: CloudSizes {
                global: report.global_cloud.len(),
                prior: report.prior_cloud.len(),
                observed_prior: report.observed_prior.len(),
                new: report.new_points.len(),
                removed: report.removed_points.len(),
                observed_voxels: report.occupancy.observed_count(),
            },
            changed_fraction: [f_new, f_rm],
            metrics: MetricsJson { r_new: m.r_new, p_new: m.p_new, r_rm: m.r_rm, p_rm: m.p_rm },
            alignment: AlignmentJson {
                attempted: report.alignment.is_some() || report.unaligned,
                accepted: report.alignment.as_ref().is_some_and(|a| a.accepted) && !report.unaligned,
                unaligned: report.unaligned,
                fitness: report.alignment.as_ref().map(|a| a.fitness),
                transform: pose_array(&report.alignment_transform),
            },
        }
    }
}

/// Observed voxels as `x y z state` lines at voxel centres; state is `free` or `occupied`.
pub fn format_voxels(octree: &OccupancyOctree) -> String {
    let (min, res) = (octree.min(), octree.resolution());
    let mut s = String::from("# x y z state\n");
    for (k, state) in octree.voxels() {
        let name = match state {
            VoxelState::Free => "free",
            VoxelState::Occupied => "occupied",
            VoxelState::Unknown => continue,
        };
        let c = |a: usize| min[a] + (k[a] as f64 + 0.5) * res;
        writeln!(s, "{} {} {} {name}", c(0), c(1), c(2)).unwrap();
    }
    s
}
