//! Rotation-vector maps on SO(3) and their Jacobians.

use nalgebra::{Matrix3, Quaternion, UnitQuaternion};

use super::Vector3;

pub fn skew(v: &Vector3) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rotation vector (axis · angle) to unit quaternion.
pub fn exp(phi: &Vector3) -> UnitQuaternion<f64> {
    let theta = phi.norm();
    let half = 0.5 * theta;
    let (w, k) = if theta < 1e-8 {
        // sin(θ/2)/θ ≈ 1/2 − θ²/48
        (1.0 - theta * theta / 8.0, 0.5 - theta * theta / 48.0)
    } else {
        (libm::cos(half), libm::sin(half) / theta)
    };
    UnitQuaternion::new_normalize(Quaternion::new(w, k * phi.x, k * phi.y, k * phi.z))
}

/// Unit quaternion to rotation vector with angle in `[0, π]`.
pub fn log(q: &UnitQuaternion<f64>) -> Vector3 {
    let q = q.quaternion();
    let (w, v) = if q.w < 0.0 { (-q.w, -q.vector()) } else { (q.w, q.vector().into_owned()) };
    let n = v.norm();
    if n < 1e-12 {
        return v * (2.0 / w);
    }
    let angle = 2.0 * libm::atan2(n, w);
    v * (angle / n)
}

fn small_angle_coeff(theta: f64) -> f64 {
    // 1/θ² − (1 + cos θ) / (2 θ sin θ)
    if theta < 1e-4 {
        1.0 / 12.0 + theta * theta / 720.0
    } else {
        1.0 / (theta * theta) - (1.0 + libm::cos(theta)) / (2.0 * theta * libm::sin(theta))
    }
}

/// Inverse of the right Jacobian: `Log(Exp(φ) Exp(δ)) ≈ φ + Jr⁻¹(φ) δ`.
pub fn right_jacobian_inverse(phi: &Vector3) -> Matrix3<f64> {
    let k = skew(phi);
    Matrix3::identity() + 0.5 * k + small_angle_coeff(phi.norm()) * k * k
}

/// Inverse of the left Jacobian: `Log(Exp(δ) Exp(φ)) ≈ φ + Jl⁻¹(φ) δ`.
pub fn left_jacobian_inverse(phi: &Vector3) -> Matrix3<f64> {
    let k = skew(phi);
    Matrix3::identity() - 0.5 * k + small_angle_coeff(phi.norm()) * k * k
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn exp_log_round_trip() {
        for v in [
            Vector3::new(0.1, -0.2, 0.3),
            Vector3::new(1e-10, 0.0, -2e-10),
            Vector3::new(0.0, 3.0, 0.0),
            Vector3::zeros(),
        ] {
            assert_relative_eq!(log(&exp(&v)), v, epsilon = 1e-12);
        }
    }

    #[test]
    fn log_matches_nalgebra_scaled_axis() {
        let q = UnitQuaternion::from_euler_angles(0.7, -0.3, 2.0);
        assert_relative_eq!(log(&q), q.scaled_axis(), epsilon = 1e-12);
    }

    #[test]
    fn jacobian_inverses_match_finite_differences() {
        let phi = Vector3::new(0.4, -0.9, 0.3);
        let h = 1e-6;
        let jr = right_jacobian_inverse(&phi);
        let jl = left_jacobian_inverse(&phi);
        let q = exp(&phi);
        for axis in 0..3 {
            let mut d = Vector3::zeros();
            d[axis] = h;
            let r = (log(&(q * exp(&d))) - log(&(q * exp(&-d)))) / (2.0 * h);
            let l = (log(&(exp(&d) * q)) - log(&(exp(&-d) * q))) / (2.0 * h);
            assert_relative_eq!(r, jr.column(axis).into_owned(), epsilon = 1e-8);
            assert_relative_eq!(l, jl.column(axis).into_owned(), epsilon = 1e-8);
        }
    }
}
