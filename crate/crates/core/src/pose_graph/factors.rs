use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, Matrix3, UnitQuaternion};

use super::{OdometryMeasurement, PriorMeasurement};
use crate::geometry::{so3, Pose, Vector3};

/// Global position factor: `p_t^p − p_t`.
pub fn position_residual(x_t: &Pose, m: &PriorMeasurement) -> Vector3 {
    m.position - x_t.translation
}

/// Relative rotation factor from the anchor keyframe to keyframe `t`:
/// `Log( ((q_1)⁻¹ q_t)⁻¹ · (q_1^p)⁻¹ q_t^p )`.
pub fn relative_rotation_residual(
    x_1: &Pose,
    x_t: &Pose,
    m_1: &PriorMeasurement,
    m_t: &PriorMeasurement,
) -> Vector3 {
    let measured = m_1.orientation.inverse() * m_t.orientation;
    rotation_error(&measured, &x_1.rotation, &x_t.rotation)
}

fn rotation_error(
    measured: &UnitQuaternion<f64>,
    q_1: &UnitQuaternion<f64>,
    q_t: &UnitQuaternion<f64>,
) -> Vector3 {
    let state = q_1.inverse() * q_t;
    so3::log(&(state.inverse() * measured))
}

/// One term of the pose-graph cost. Each pose carries a 6-dim tangent
/// `(δθ, δp)` with `q ← q Exp(δθ)` and `p ← p + δp`.
#[derive(Debug, Clone, PartialEq)]
pub enum Factor {
    /// Relative pose between consecutive keyframes; residual `(rotation, translation)`.
    Odometry(OdometryMeasurement),
    Position {
        index: usize,
        position: Vector3,
        information: Matrix3<f64>,
    },
    RelativeRotation {
        anchor: usize,
        index: usize,
        /// `(q_anchor^p)⁻¹ q_index^p`
        measured: UnitQuaternion<f64>,
        information: Matrix3<f64>,
    },
}

impl Factor {
    pub fn dim(&self) -> usize {
        match self {
            Factor::Odometry(_) => 6,
            _ => 3,
        }
    }

    pub fn variables(&self) -> Vec<usize> {
        match self {
            Factor::Odometry(m) => vec![m.from, m.to],
            Factor::Position { index, .. } => vec![*index],
            Factor::RelativeRotation { anchor, index, .. } => vec![*anchor, *index],
        }
    }

    pub fn information(&self) -> DMatrix<f64> {
        match self {
            Factor::Odometry(m) => DMatrix::from_iterator(6, 6, m.information.iter().copied()),
            Factor::Position { information, .. } | Factor::RelativeRotation { information, .. } => {
                DMatrix::from_iterator(3, 3, information.iter().copied())
            }
        }
    }

    pub fn residual(&self, poses: &[Pose]) -> DVector<f64> {
        match self {
            Factor::Odometry(m) => {
                let (a, b) = (&poses[m.from], &poses[m.to]);
                let rot = so3::log(&(m.relative.rotation.inverse() * a.rotation.inverse() * b.rotation));
                let pos = a.rotation.inverse_transform_vector(&(b.translation - a.translation))
                    - m.relative.translation;
                DVector::from_column_slice(&[rot.x, rot.y, rot.z, pos.x, pos.y, pos.z])
            }
            Factor::Position { index, position, .. } => {
                let r = position - poses[*index].translation;
                DVector::from_column_slice(r.as_slice())
            }
            Factor::RelativeRotation { anchor, index, measured, .. } => {
                let r = rotation_error(measured, &poses[*anchor].rotation, &poses[*index].rotation);
                DVector::from_column_slice(r.as_slice())
            }
        }
    }

    /// Analytic Jacobians, one `dim × 6` block per variable in
    /// [`Factor::variables`] order.
    pub fn jacobians(&self, poses: &[Pose]) -> Vec<DMatrix<f64>> {
        match self {
            Factor::Odometry(m) => {
                let (a, b) = (&poses[m.from], &poses[m.to]);
                let ra_t = a.rotation_matrix().transpose();
                let r_meas_t = m.relative.rotation_matrix().transpose();
                let e = so3::log(&(m.relative.rotation.inverse() * a.rotation.inverse() * b.rotation));
                let local = ra_t * (b.translation - a.translation);
                let mut ja = DMatrix::zeros(6, 6);
                let mut jb = DMatrix::zeros(6, 6);
                ja.view_mut((0, 0), (3, 3)).copy_from(&(-so3::left_jacobian_inverse(&e) * r_meas_t));
                jb.view_mut((0, 0), (3, 3)).copy_from(&so3::right_jacobian_inverse(&e));
                ja.view_mut((3, 0), (3, 3)).copy_from(&so3::skew(&local));
                ja.view_mut((3, 3), (3, 3)).copy_from(&(-ra_t));
                jb.view_mut((3, 3), (3, 3)).copy_from(&ra_t);
                vec![ja, jb]
            }
            Factor::Position { .. } => {
                let mut j = DMatrix::zeros(3, 6);
                j.view_mut((0, 3), (3, 3)).copy_from(&(-Matrix3::identity()));
                vec![j]
            }
            Factor::RelativeRotation { anchor, index, measured, .. } => {
                let e = rotation_error(measured, &poses[*anchor].rotation, &poses[*index].rotation);
                let r_meas_t = measured.to_rotation_matrix().into_inner().transpose();
                let mut j_anchor = DMatrix::zeros(3, 6);
                let mut j_index = DMatrix::zeros(3, 6);
                j_anchor.view_mut((0, 0), (3, 3)).copy_from(&(so3::right_jacobian_inverse(&e) * r_meas_t));
                j_index.view_mut((0, 0), (3, 3)).copy_from(&(-so3::left_jacobian_inverse(&e)));
                vec![j_anchor, j_index]
            }
        }
    }

    /// `rᵀ Ω r`
    pub fn cost(&self, poses: &[Pose]) -> f64 {
        let r = self.residual(poses);
        (r.transpose() * self.information() * &r)[0]
    }
}

/// Builds odometry, position and relative-rotation factors. The rotation
/// factors are anchored at the earliest prior; the position factor uses the
/// translation block of each prior's information and the rotation factor the
/// rotation block.
pub fn build_factors(odometry: &[OdometryMeasurement], priors: &[PriorMeasurement]) -> Vec<Factor> {
    let mut factors: Vec<Factor> = odometry.iter().cloned().map(Factor::Odometry).collect();
    let Some(anchor) = priors.iter().min_by_key(|m| m.index) else {
        return factors;
    };
    for m in priors {
        factors.push(Factor::Position {
            index: m.index,
            position: m.position,
            information: m.information.fixed_view::<3, 3>(3, 3).into_owned(),
        });
        if m.index != anchor.index {
            factors.push(Factor::RelativeRotation {
                anchor: anchor.index,
                index: m.index,
                measured: anchor.orientation.inverse() * m.orientation,
                information: m.information.fixed_view::<3, 3>(0, 0).into_owned(),
            });
        }
    }
    factors
}

/// Applies a tangent increment `(δθ, δp)` to a pose.
pub fn retract(pose: &Pose, delta: &[f64]) -> Pose {
    let dtheta = Vector3::new(delta[0], delta[1], delta[2]);
    let mut rotation = pose.rotation * so3::exp(&dtheta);
    rotation.renormalize();
    Pose::new(pose.translation + Vector3::new(delta[3], delta[4], delta[5]), rotation)
}
