//! Flat `key = value` run configuration.
//!
//! Settings come from an optional config file and then from `--key value`
//! pairs on the command line, later entries overriding earlier ones. Keys
//! accept `-` or `_` interchangeably. `#` starts a comment.

use std::path::PathBuf;

use cloudiff_core::change_detect::ChangeConfig;
use cloudiff_core::depth::FilterConfig;
use cloudiff_core::occupancy::ObservedAreaConfig;
use cloudiff_core::pipeline::{LocalizationConfig, PoseSource, RunConfig};
use cloudiff_core::pose_graph::OptimizerConfig;
use cloudiff_core::registration::RegistrationConfig;
use cloudiff_core::synthworld::{DepthCondition, NoiseSpec};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("unknown setting `{0}`")]
    UnknownKey(String),
    #[error("invalid value `{value}` for `{key}`: {reason}")]
    BadValue { key: String, value: String, reason: String },
    #[error("config line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("`{0}` is required")]
    Missing(&'static str),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseLevel {
    Zero,
    Small,
    Big,
}

impl NoiseLevel {
    pub fn name(self) -> &'static str {
        match self {
            Self::Zero => "zero",
            Self::Small => "small",
            Self::Big => "big",
        }
    }

    pub fn spec(self, seed: u64) -> NoiseSpec {
        match self {
            Self::Zero => NoiseSpec::zero(seed),
            Self::Small => NoiseSpec::small(seed),
            Self::Big => NoiseSpec::big(seed),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConditionKind {
    Normal,
    Mirror,
    Dark,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoseKind {
    GroundTruth,
    Odometry,
    Fused,
    Biased,
}

impl PoseKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::GroundTruth => "ground-truth",
            Self::Odometry => "odometry",
            Self::Fused => "fused",
            Self::Biased => "biased",
        }
    }
}

/// Knobs accepted by `sweep`.
pub const SWEEP_KNOBS: [&str; 8] = ["th_f", "th_d", "th_ch", "rho_o", "rho_p", "delta_d", "alpha", "fitness_threshold"];

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub dataset: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub overwrite: bool,
    pub seed: u64,
    pub label: Option<String>,
    pub threads: usize,

    // Synthesis.
    pub noise: NoiseLevel,
    pub condition: ConditionKind,
    pub mirror_fraction: f64,
    pub mirror_factor: f64,
    pub dark_dropout: f64,
    pub unchanged: bool,
    pub height: f64,
    pub prior_density: f64,

    // Poses.
    pub poses: PoseKind,
    pub bias: f64,
    pub local_window: usize,
    pub local_rho: f64,
    pub local_max_depth: f64,

    // Filtering, occupancy and detection.
    pub delta_d: f64,
    pub alpha: usize,
    pub window: u64,
    pub th_d: f64,
    pub th_f: f64,
    pub th_ch: f64,
    pub rho_o: f64,
    pub rho_p: f64,
    pub align: bool,
    pub margin: f64,
    pub export_voxels: bool,

    // Registration.
    pub fitness_threshold: f64,
    pub max_translation: f64,
    pub max_iterations: usize,
    pub correspondence_distance: f64,
    pub knn: usize,

    // Sweep.
    pub param: Option<String>,
    pub values: Vec<f64>,

    // Trajectory evaluation and standalone registration.
    pub estimated: Option<PathBuf>,
    pub ground_truth: Option<PathBuf>,
    pub max_dt: f64,
    pub ate_align: bool,
    pub local: Option<PathBuf>,
    pub prior: Option<PathBuf>,
}

impl Default for Settings {
    fn default() -> Self {
        let change = ChangeConfig::default();
        let filter = FilterConfig::default();
        let reg = RegistrationConfig::default();
        let loc = LocalizationConfig::default();
        Self {
            dataset: None,
            output: None,
            overwrite: false,
            seed: 0,
            label: None,
            threads: 4,
            noise: NoiseLevel::Small,
            condition: ConditionKind::Normal,
            mirror_fraction: 0.25,
            mirror_factor: 1.5,
            dark_dropout: 0.3,
            unchanged: false,
            height: 4.0,
            prior_density: 4.0,
            poses: PoseKind::GroundTruth,
            bias: 2.0,
            local_window: loc.window,
            local_rho: loc.local_rho,
            local_max_depth: loc.max_depth,
            delta_d: filter.depth_threshold,
            alpha: filter.min_successes,
            window: filter.window,
            th_d: change.area.th_d,
            th_f: change.area.th_f,
            th_ch: change.th_ch,
            rho_o: change.area.resolution,
            rho_p: change.rho_p,
            align: change.align,
            margin: 5.0,
            export_voxels: false,
            fitness_threshold: reg.fitness_threshold,
            max_translation: reg.max_translation,
            max_iterations: reg.max_iterations,
            correspondence_distance: reg.correspondence_distance,
            knn: reg.knn_for_covariance,
            param: None,
            values: Vec::new(),
            estimated: None,
            ground_truth: None,
            max_dt: 0.01,
            ate_align: false,
            local: None,
            prior: None,
        }
    }
}

pub fn normalize_key(key: &str) -> String {
    key.trim().trim_start_matches("--").replace('-', "_")
}

/// Parses a config file into `(key, value)` pairs.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax { line: i + 1, reason: "expected `key = value`".into() })?;
        let k = normalize_key(k);
        if k.is_empty() {
            return Err(ConfigError::Syntax { line: i + 1, reason: "empty key".into() });
        }
        out.push((k, v.trim().to_string()));
    }
    Ok(out)
}

/// Parses `--key value` pairs. A key directly followed by another key, or
/// at the end, is a boolean flag set to `true`.
pub fn parse_cli_pairs(args: &[String]) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < args.len() {
        let a = &args[i];
        let Some(stripped) = a.strip_prefix("--") else {
            return Err(ConfigError::Invalid(format!("expected `--key value`, found `{a}`")));
        };
        if let Some((k, v)) = stripped.split_once('=') {
            out.push((normalize_key(k), v.to_string()));
            i += 1;
            continue;
        }
        let key = normalize_key(stripped);
        match args.get(i + 1) {
            Some(v) if !v.starts_with("--") => {
                out.push((key, v.clone()));
                i += 2;
            }
            _ => {
                out.push((key, "true".into()));
                i += 1;
            }
        }
    }
    Ok(out)
}

fn bad(key: &str, value: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::BadValue { key: key.into(), value: value.into(), reason: reason.into() }
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| bad(key, v, e.to_string()))
}

fn float(key: &str, v: &str) -> Result<f64, ConfigError> {
    let x: f64 = num(key, v)?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(bad(key, v, "must be finite"))
    }
}

fn boolean(key: &str, v: &str) -> Result<bool, ConfigError> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(bad(key, v, "expected true or false")),
    }
}

impl Settings {
    /// Applies one setting.
    pub fn set(&mut self, key: &str, v: &str) -> Result<(), ConfigError> {
        let key = normalize_key(key);
        let k = key.as_str();
        let path = |v: &str| Some(PathBuf::from(v));
        match k {
            "dataset" => self.dataset = path(v),
            "output" => self.output = path(v),
            "overwrite" => self.overwrite = boolean(k, v)?,
            "seed" => self.seed = num(k, v)?,
            "label" | "trajectory" => self.label = Some(v.to_string()),
            "threads" | "thread_count" => self.threads = num(k, v)?,
            "noise" => {
                self.noise = match v {
                    "zero" | "none" => NoiseLevel::Zero,
                    "small" => NoiseLevel::Small,
                    "big" => NoiseLevel::Big,
                    _ => return Err(bad(k, v, "expected zero, small or big")),
                }
            }
            "condition" => {
                self.condition = match v {
                    "normal" => ConditionKind::Normal,
                    "mirror" => ConditionKind::Mirror,
                    "dark" => ConditionKind::Dark,
                    _ => return Err(bad(k, v, "expected normal, mirror or dark")),
                }
            }
            "mirror_fraction" => self.mirror_fraction = float(k, v)?,
            "mirror_factor" => self.mirror_factor = float(k, v)?,
            "dark_dropout" => self.dark_dropout = float(k, v)?,
            "unchanged" => self.unchanged = boolean(k, v)?,
            "height" => self.height = float(k, v)?,
            "prior_density" => self.prior_density = float(k, v)?,
            "poses" => {
                self.poses = match v {
                    "ground-truth" | "ground_truth" | "gt" => PoseKind::GroundTruth,
                    "odometry" => PoseKind::Odometry,
                    "fused" => PoseKind::Fused,
                    "biased" => PoseKind::Biased,
                    _ => return Err(bad(k, v, "expected ground-truth, odometry, fused or biased")),
                }
            }
            "bias" => self.bias = float(k, v)?,
            "local_window" => self.local_window = num(k, v)?,
            "local_rho" => self.local_rho = float(k, v)?,
            "local_max_depth" => self.local_max_depth = float(k, v)?,
            "delta_d" => self.delta_d = float(k, v)?,
            "alpha" => self.alpha = num(k, v)?,
            "window" => self.window = num(k, v)?,
            "th_d" => self.th_d = float(k, v)?,
            "th_f" => self.th_f = float(k, v)?,
            "th_ch" => self.th_ch = float(k, v)?,
            "rho_o" => self.rho_o = float(k, v)?,
            "rho_p" => self.rho_p = float(k, v)?,
            "align" => self.align = boolean(k, v)?,
            "margin" => self.margin = float(k, v)?,
            "export_voxels" => self.export_voxels = boolean(k, v)?,
            "fitness_threshold" => self.fitness_threshold = float(k, v)?,
            "max_translation" => self.max_translation = float(k, v)?,
            "max_iterations" => self.max_iterations = num(k, v)?,
            "correspondence_distance" => self.correspondence_distance = float(k, v)?,
            "knn" => self.knn = num(k, v)?,
            "param" => self.param = Some(normalize_key(v)),
            "values" => {
                self.values = v
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| float(k, s))
                    .collect::<Result<_, _>>()?;
            }
            "estimated" => self.estimated = path(v),
            "ground_truth" | "reference" => self.ground_truth = path(v),
            "max_dt" => self.max_dt = float(k, v)?,
            "ate_align" => self.ate_align = boolean(k, v)?,
            "local" => self.local = path(v),
            "prior" => self.prior = path(v),
            _ => return Err(ConfigError::UnknownKey(key)),
        }
        Ok(())
    }

    pub fn apply(&mut self, pairs: &[(String, String)]) -> Result<(), ConfigError> {
        pairs.iter().try_for_each(|(k, v)| self.set(k, v))
    }

    /// Sets a sweep knob to `value`.
    pub fn set_knob(&mut self, knob: &str, value: f64) -> Result<(), ConfigError> {
        if !SWEEP_KNOBS.contains(&knob) {
            return Err(unknown_knob(knob));
        }
        if knob == "alpha" && (value.fract() != 0.0 || value < 0.0) {
            return Err(bad(knob, &value.to_string(), "must be a non-negative integer"));
        }
        self.set(knob, &value.to_string())
    }

    pub fn condition_spec(&self) -> DepthCondition {
        match self.condition {
            ConditionKind::Normal => DepthCondition::Normal,
            ConditionKind::Mirror => DepthCondition::Mirror { fraction: self.mirror_fraction, factor: self.mirror_factor },
            ConditionKind::Dark => DepthCondition::Dark { dropout: self.dark_dropout },
        }
    }

    pub fn pose_source(&self) -> PoseSource {
        match self.poses {
            PoseKind::GroundTruth => PoseSource::GroundTruth,
            PoseKind::Odometry => PoseSource::Odometry,
            PoseKind::Fused => PoseSource::Fused,
            PoseKind::Biased => PoseSource::Biased(self.bias),
        }
    }

    pub fn registration(&self) -> RegistrationConfig {
        RegistrationConfig {
            fitness_threshold: self.fitness_threshold,
            max_translation: self.max_translation,
            max_iterations: self.max_iterations,
            correspondence_distance: self.correspondence_distance,
            knn_for_covariance: self.knn,
            thread_count: self.threads,
            ..RegistrationConfig::default()
        }
    }

    /// Builds the pipeline configuration and checks every stage's preconditions.
    pub fn run_config(&self) -> Result<RunConfig, ConfigError> {
        let invalid = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        if self.threads == 0 {
            return Err(bad("threads", "0", "must be at least 1"));
        }
        let registration = self.registration();
        let change = ChangeConfig {
            th_ch: self.th_ch,
            rho_p: self.rho_p,
            area: ObservedAreaConfig { resolution: self.rho_o, th_d: self.th_d, th_f: self.th_f },
            align: self.align,
            registration: registration.clone(),
            thread_count: self.threads,
        };
        let filter = FilterConfig { depth_threshold: self.delta_d, min_successes: self.alpha, window: self.window };
        let noise = self.noise.spec(self.seed);
        registration.validate().map_err(|e| invalid(&e))?;
        change.validate().map_err(|e| invalid(&e))?;
        change.area.validate().map_err(|e| invalid(&e))?;
        filter.validate().map_err(|e| invalid(&e))?;
        noise.validate().map_err(|e| invalid(&e))?;
        if !(self.local_rho > 0.0) || self.local_window == 0 || !(self.local_max_depth > 0.0) {
            return Err(ConfigError::Invalid("local_rho, local_window and local_max_depth must be positive".into()));
        }
        if !(self.margin >= 0.0) {
            return Err(bad("margin", &self.margin.to_string(), "must be non-negative"));
        }
        if self.poses == PoseKind::Biased && !(self.bias >= 0.0) {
            return Err(bad("bias", &self.bias.to_string(), "must be non-negative"));
        }
        match self.condition_spec() {
            DepthCondition::Mirror { fraction, factor } if !(fraction > 0.0 && fraction <= 1.0 && factor > 0.0) => {
                return Err(ConfigError::Invalid("mirror_fraction must be in (0, 1] and mirror_factor positive".into()));
            }
            DepthCondition::Dark { dropout } if !(0.0..=1.0).contains(&dropout) => {
                return Err(bad("dark_dropout", &dropout.to_string(), "must be in [0, 1]"));
            }
            _ => {}
        }
        Ok(RunConfig {
            noise,
            condition: self.condition_spec(),
            filter,
            localization: LocalizationConfig {
                window: self.local_window,
                local_rho: self.local_rho,
                max_depth: self.local_max_depth,
                registration,
                fix_initial_pose: true,
            },
            optimizer: OptimizerConfig::default(),
            change,
            source: self.pose_source(),
            margin: self.margin,
            thread_count: self.threads,
        })
    }
}

pub fn unknown_knob(knob: &str) -> ConfigError {
    ConfigError::BadValue {
        key: "param".into(),
        value: knob.into(),
        reason: format!("unknown sweep parameter; valid names are {}", SWEEP_KNOBS.join(", ")),
    }
}
