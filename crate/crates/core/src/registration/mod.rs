//! Generalized-ICP alignment of a local cloud against the prior map.
//!
//! The Gauss-Newton normal matrix at convergence is the Fisher information of
//! the plane-to-plane likelihood; its inverse is reported as the registration
//! covariance and later weights prior factors in the pose graph. The 6-vector
//! ordering everywhere is `(rotation, translation)`, with perturbations applied
//! on the left: `T ← Exp(δ) T`.

mod covariance;
mod gicp;

pub use covariance::{estimate_point_covariances, COVARIANCE_EPSILON};
pub use gicp::{register_gicp, register_gicp_with_target, GicpTarget};

use nalgebra::Matrix6;

use crate::geometry::Pose;

/// Keyframes aggregated into one local cloud before registering to the prior.
pub const LOCAL_CLOUD_WINDOW: usize = 5;

/// Minimum cloud size accepted by [`register_gicp`].
pub const MIN_REGISTRATION_POINTS: usize = 50;

/// Condition number above which the normal matrix is treated as degenerate.
pub const MAX_CONDITION_NUMBER: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationConfig {
    pub max_iterations: usize,
    /// Convergence threshold on the translation part of the last increment, m.
    pub translation_epsilon: f64,
    /// Convergence threshold on the rotation part of the last increment, rad.
    pub rotation_epsilon: f64,
    /// Correspondences farther apart than this are dropped each iteration, m.
    pub correspondence_distance: f64,
    pub knn_for_covariance: usize,
    /// Upper bound on mean local→prior distance for an accepted result, m.
    pub fitness_threshold: f64,
    /// Upper bound on the norm of the recovered translation, m.
    pub max_translation: f64,
    pub thread_count: usize,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        Self {
            max_iterations: 64,
            translation_epsilon: 1e-4,
            rotation_epsilon: 1e-4,
            correspondence_distance: 1.0,
            knn_for_covariance: 10,
            fitness_threshold: 0.5,
            max_translation: 1.0,
            thread_count: 4,
        }
    }
}

impl RegistrationConfig {
    pub fn validate(&self) -> Result<(), RegistrationError> {
        let positive = [
            ("translation_epsilon", self.translation_epsilon),
            ("rotation_epsilon", self.rotation_epsilon),
            ("correspondence_distance", self.correspondence_distance),
            ("fitness_threshold", self.fitness_threshold),
            ("max_translation", self.max_translation),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(RegistrationError::InvalidConfig(name));
            }
        }
        if self.max_iterations == 0 {
            return Err(RegistrationError::InvalidConfig("max_iterations"));
        }
        if self.knn_for_covariance < 4 {
            return Err(RegistrationError::InvalidConfig("knn_for_covariance"));
        }
        if self.thread_count == 0 {
            return Err(RegistrationError::InvalidConfig("thread_count"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationResult {
    /// Maps local-cloud coordinates onto the prior.
    pub transform: Pose,
    pub converged: bool,
    /// Mean distance from each transformed local point to its nearest prior point, m.
    pub fitness: f64,
    /// Gauss-Newton normal matrix `Σ Jᵀ M J` at the final transform.
    pub hessian: Matrix6<f64>,
    /// Inverse of `hessian`; absent when the normal matrix is degenerate.
    pub covariance: Option<Matrix6<f64>>,
    pub iterations: usize,
    pub accepted: bool,
}

impl RegistrationResult {
    /// Information matrix for a prior factor (inverse covariance).
    pub fn information(&self) -> Option<Matrix6<f64>> {
        self.covariance.is_some().then_some(self.hessian)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RegistrationError {
    #[error("invalid registration config: {0}")]
    InvalidConfig(&'static str),
    #[error("{which} cloud has {len} points, at least {min} required")]
    TooFewPoints { which: &'static str, len: usize, min: usize },
    #[error("initial guess is not finite")]
    NonFiniteGuess,
}

/// Applies the three acceptance rules: converged, fitness under threshold,
/// translation shorter than the limit.
pub fn validate_registration(result: &RegistrationResult, config: &RegistrationConfig) -> bool {
    result.converged
        && result.fitness < config.fitness_threshold
        && result.transform.translation.norm() < config.max_translation
}
