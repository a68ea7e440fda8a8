use alloc::vec::Vec;

use nalgebra::{Matrix3, SymmetricEigen};

use super::RegistrationError;
use crate::geometry::{PointCloud, SpatialIndex, Vector3};
use crate::par::Executor;

/// Variance assigned along the surface normal after regularization.
pub const COVARIANCE_EPSILON: f64 = 1e-3;

/// Per-point plane covariances from the `k` nearest neighbours (the point
/// itself included).
///
/// The sample covariance is eigen-decomposed and its eigenvalues replaced by
/// `(1, 1, ε)`, the smallest one becoming `ε`. Only the local surface
/// orientation survives.
pub fn estimate_point_covariances(
    cloud: &PointCloud,
    k: usize,
) -> Result<Vec<Matrix3<f64>>, RegistrationError> {
    let index = SpatialIndex::new(cloud);
    estimate_with_index(&index, k, &Executor::sequential())
}

pub(crate) fn estimate_with_index(
    index: &SpatialIndex,
    k: usize,
    exec: &Executor,
) -> Result<Vec<Matrix3<f64>>, RegistrationError> {
    if index.len() < k || k < 2 {
        return Err(RegistrationError::TooFewPoints { which: "covariance", len: index.len(), min: k.max(2) });
    }
    let pts = index.points();
    Ok(exec.map(pts.len(), |i| {
        let nn = index.knn(&pts[i], k);
        let mut mean = Vector3::zeros();
        for &(j, _) in &nn {
            mean += pts[j].coords;
        }
        mean /= nn.len() as f64;
        let mut cov = Matrix3::zeros();
        for &(j, _) in &nn {
            let d = pts[j].coords - mean;
            cov += d * d.transpose();
        }
        cov /= nn.len() as f64;
        regularize(&cov)
    }))
}

fn regularize(cov: &Matrix3<f64>) -> Matrix3<f64> {
    let eig = SymmetricEigen::new(*cov);
    let smallest = (0..3)
        .min_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]))
        .unwrap();
    let mut out = Matrix3::zeros();
    for i in 0..3 {
        let v = eig.eigenvectors.column(i);
        let w = if i == smallest { COVARIANCE_EPSILON } else { 1.0 };
        out += w * v * v.transpose();
    }
    0.5 * (out + out.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point3;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(points: Vec<Point3>) -> PointCloud {
        PointCloud::from_points(points, "w").unwrap()
    }

    fn sorted_eigen(m: &Matrix3<f64>) -> (Vector3, Matrix3<f64>) {
        let e = SymmetricEigen::new(*m);
        let mut idx = [0usize, 1, 2];
        idx.sort_by(|&a, &b| e.eigenvalues[a].total_cmp(&e.eigenvalues[b]));
        let vals = Vector3::new(e.eigenvalues[idx[0]], e.eigenvalues[idx[1]], e.eigenvalues[idx[2]]);
        let vecs = Matrix3::from_columns(&[
            e.eigenvectors.column(idx[0]).into_owned(),
            e.eigenvectors.column(idx[1]).into_owned(),
            e.eigenvectors.column(idx[2]).into_owned(),
        ]);
        (vals, vecs)
    }

    #[test]
    fn planar_normal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<Point3> = (0..200)
            .map(|_| Point3::new(rng.random_range(0.0..5.0), rng.random_range(0.0..5.0), 0.0))
            .collect();
        let covs = estimate_point_covariances(&cloud(pts), 10).unwrap();
        for c in &covs {
            let (vals, vecs) = sorted_eigen(c);
            assert_relative_eq!(vals, Vector3::new(COVARIANCE_EPSILON, 1.0, 1.0), epsilon = 1e-9);
            assert_relative_eq!(vecs.column(0).z.abs(), 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn isotropic_ball_is_still_regularized() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts: Vec<Point3> = (0..300)
            .map(|_| {
                Point3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                )
            })
            .collect();
        for c in estimate_point_covariances(&cloud(pts), 12).unwrap() {
            let (vals, _) = sorted_eigen(&c);
            assert_relative_eq!(vals, Vector3::new(COVARIANCE_EPSILON, 1.0, 1.0), epsilon = 1e-9);
        }
    }

    #[test]
    fn collinear_points_lead_along_line() {
        // Brute-force oracle: the raw covariance of the k nearest points,
        // decomposed independently. Its leading eigenvector must be one of
        // the unit-variance directions of the regularized covariance.
        let dir = Vector3::new(1.0, 2.0, -0.5).normalize();
        let pts: Vec<Point3> = (0..40).map(|i| Point3::from(dir * (i as f64 * 0.1))).collect();
        let k = 6;
        let covs = estimate_point_covariances(&cloud(pts.clone()), k).unwrap();
        for (i, c) in covs.iter().enumerate() {
            let mut d: Vec<(f64, usize)> =
                pts.iter().enumerate().map(|(j, p)| ((p - pts[i]).norm_squared(), j)).collect();
            d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let nb: Vec<Vector3> = d[..k].iter().map(|&(_, j)| pts[j].coords).collect();
            let mean = nb.iter().sum::<Vector3>() / k as f64;
            let raw = nb.iter().map(|p| (p - mean) * (p - mean).transpose()).sum::<Matrix3<f64>>() / k as f64;
            let (_, raw_vecs) = sorted_eigen(&raw);
            let lead = raw_vecs.column(2).into_owned();
            assert_relative_eq!(lead.dot(&dir).abs(), 1.0, epsilon = 1e-9);
            // Variance of the regularized covariance along the line is 1.
            assert_relative_eq!((lead.transpose() * c * lead)[0], 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn too_few_points() {
        let pts = (0..5).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect();
        assert!(matches!(
            estimate_point_covariances(&cloud(pts), 10),
            Err(RegistrationError::TooFewPoints { .. })
        ));
    }
}
