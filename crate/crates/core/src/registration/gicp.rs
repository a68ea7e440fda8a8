use alloc::vec::Vec;

use nalgebra::{Matrix3, Matrix3x6, Matrix6, SymmetricEigen, Vector6};

use super::covariance::estimate_with_index;
use super::{
    validate_registration, RegistrationConfig, RegistrationError, RegistrationResult,
    MAX_CONDITION_NUMBER, MIN_REGISTRATION_POINTS,
};
use crate::geometry::{so3, Point3, PointCloud, Pose, SpatialIndex, Vector3};
use crate::par::{Executor, CHUNK};

/// Prior cloud with its kd-tree and per-point covariances, reusable across
/// many registrations.
pub struct GicpTarget {
    index: SpatialIndex,
    covariances: Vec<Matrix3<f64>>,
}

impl GicpTarget {
    pub fn new(prior: &PointCloud, k: usize) -> Result<Self, RegistrationError> {
        Self::build(prior, k, &Executor::sequential())
    }

    fn build(prior: &PointCloud, k: usize, exec: &Executor) -> Result<Self, RegistrationError> {
        if prior.len() < MIN_REGISTRATION_POINTS {
            return Err(RegistrationError::TooFewPoints {
                which: "prior",
                len: prior.len(),
                min: MIN_REGISTRATION_POINTS,
            });
        }
        let index = SpatialIndex::new(prior);
        let covariances = estimate_with_index(&index, k, exec)?;
        Ok(Self { index, covariances })
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn index(&self) -> &SpatialIndex {
        &self.index
    }
}

#[derive(Clone, Copy)]
struct Normal {
    h: Matrix6<f64>,
    g: Vector6<f64>,
    count: usize,
}

impl Normal {
    fn zero() -> Self {
        Self { h: Matrix6::zeros(), g: Vector6::zeros(), count: 0 }
    }
}

/// Registers `local` onto `prior`, starting from `initial_guess`.
pub fn register_gicp(
    local: &PointCloud,
    prior: &PointCloud,
    initial_guess: &Pose,
    config: &RegistrationConfig,
) -> Result<RegistrationResult, RegistrationError> {
    config.validate()?;
    let exec = Executor::new(config.thread_count);
    let target = GicpTarget::build(prior, config.knn_for_covariance, &exec)?;
    run(local, &target, initial_guess, config, &exec)
}

/// Same as [`register_gicp`] with a precomputed target.
pub fn register_gicp_with_target(
    local: &PointCloud,
    target: &GicpTarget,
    initial_guess: &Pose,
    config: &RegistrationConfig,
) -> Result<RegistrationResult, RegistrationError> {
    config.validate()?;
    run(local, target, initial_guess, config, &Executor::new(config.thread_count))
}

fn run(
    local: &PointCloud,
    target: &GicpTarget,
    initial_guess: &Pose,
    config: &RegistrationConfig,
    exec: &Executor,
) -> Result<RegistrationResult, RegistrationError> {
    if local.len() < MIN_REGISTRATION_POINTS {
        return Err(RegistrationError::TooFewPoints {
            which: "local",
            len: local.len(),
            min: MIN_REGISTRATION_POINTS,
        });
    }
    if !initial_guess.is_finite() {
        return Err(RegistrationError::NonFiniteGuess);
    }
    let local_index = SpatialIndex::new(local);
    let local_cov = estimate_with_index(&local_index, config.knn_for_covariance, exec)?;
    let src = local.points();

    let mut transform = *initial_guess;
    let mut converged = false;
    let mut degenerate = false;
    let mut iterations = 0;
    for _ in 0..config.max_iterations {
        iterations += 1;
        let normal = accumulate(src, &local_cov, target, &transform, config, exec);
        let Some(delta) = solve(&normal) else {
            degenerate = true;
            break;
        };
        let rot = Vector3::new(delta[0], delta[1], delta[2]);
        let trans = Vector3::new(delta[3], delta[4], delta[5]);
        transform = Pose::new(trans, so3::exp(&rot)).compose(&transform);
        if rot.norm() < config.rotation_epsilon && trans.norm() < config.translation_epsilon {
            converged = true;
            break;
        }
    }

    let normal = accumulate(src, &local_cov, target, &transform, config, exec);
    let hessian = 0.5 * (normal.h + normal.h.transpose());
    let covariance = if degenerate || !well_conditioned(&hessian) || normal.count < 6 {
        degenerate = true;
        None
    } else {
        hessian.try_inverse().map(|c| 0.5 * (c + c.transpose()))
    };
    let converged = converged && !degenerate && covariance.is_some();
    let fitness = fitness(src, &target.index, &transform, exec);
    let mut result = RegistrationResult {
        transform,
        converged,
        fitness,
        hessian,
        covariance,
        iterations,
        accepted: false,
    };
    result.accepted = validate_registration(&result, config);
    Ok(result)
}

fn accumulate(
    src: &[Point3],
    src_cov: &[Matrix3<f64>],
    target: &GicpTarget,
    transform: &Pose,
    config: &RegistrationConfig,
    exec: &Executor,
) -> Normal {
    let rot = transform.rotation_matrix();
    let max_d = config.correspondence_distance;
    let partial = exec.map_chunks(src.len(), CHUNK, |range| {
        let mut acc = Normal::zero();
        for i in range {
            let p = transform.transform_point(&src[i]);
            let Ok((j, d)) = target.index.nearest(&p) else { continue };
            if d > max_d {
                continue;
            }
            let combined = target.covariances[j] + rot * src_cov[i] * rot.transpose();
            let Some(m) = combined.try_inverse() else { continue };
            let e = target.index.points()[j] - p;
            let mut jac = Matrix3x6::zeros();
            jac.fixed_view_mut::<3, 3>(0, 0).copy_from(&so3::skew(&p.coords));
            jac.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-Matrix3::identity()));
            let jt_m = jac.transpose() * m;
            acc.h += jt_m * jac;
            acc.g += jt_m * e;
            acc.count += 1;
        }
        acc
    });
    let mut total = Normal::zero();
    for p in partial {
        total.h += p.h;
        total.g += p.g;
        total.count += p.count;
    }
    total
}

fn solve(normal: &Normal) -> Option<Vector6<f64>> {
    if normal.count < 6 {
        return None;
    }
    let h = 0.5 * (normal.h + normal.h.transpose());
    if !well_conditioned(&h) {
        return None;
    }
    h.cholesky().map(|c| -c.solve(&normal.g))
}

fn well_conditioned(h: &Matrix6<f64>) -> bool {
    let eig = SymmetricEigen::new(*h);
    let min = eig.eigenvalues.min();
    let max = eig.eigenvalues.max();
    min > 0.0 && max / min <= MAX_CONDITION_NUMBER
}

fn fitness(src: &[Point3], index: &SpatialIndex, transform: &Pose, exec: &Executor) -> f64 {
    let sums = exec.map_chunks(src.len(), CHUNK, |range| {
        range
            .map(|i| index.nearest(&transform.transform_point(&src[i])).map_or(0.0, |(_, d)| d))
            .sum::<f64>()
    });
    sums.into_iter().sum::<f64>() / src.len() as f64
}
