use nalgebra::{Isometry3, Matrix3, Translation3, UnitQuaternion};

use super::{Point3, Vector3};

/// Rigid transform of a body frame expressed in a parent frame.
///
/// `transform_point(p) = rotation * p + translation`. Composition renormalizes
/// the quaternion so long chains do not drift off the unit sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub translation: Vector3,
    pub rotation: UnitQuaternion<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self { translation: Vector3::zeros(), rotation: UnitQuaternion::identity() }
    }

    pub fn new(translation: Vector3, rotation: UnitQuaternion<f64>) -> Self {
        Self { translation, rotation }
    }

    pub fn from_translation(translation: Vector3) -> Self {
        Self { translation, rotation: UnitQuaternion::identity() }
    }

    pub fn from_rotation(rotation: UnitQuaternion<f64>) -> Self {
        Self { translation: Vector3::zeros(), rotation }
    }

    /// Builds a pose from a quaternion given as `(w, x, y, z)`, normalizing it.
    pub fn from_wxyz(translation: Vector3, w: f64, x: f64, y: f64, z: f64) -> Self {
        let q = nalgebra::Quaternion::new(w, x, y, z);
        Self { translation, rotation: UnitQuaternion::from_quaternion(q) }
    }

    pub fn is_finite(&self) -> bool {
        let q = self.rotation.quaternion();
        self.translation.iter().all(|v| v.is_finite())
            && q.coords.iter().all(|v| v.is_finite())
    }

    #[inline]
    pub fn transform_point(&self, p: &Point3) -> Point3 {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    #[inline]
    pub fn transform_vector(&self, v: &Vector3) -> Vector3 {
        self.rotation * v
    }

    #[inline]
    pub fn inverse_transform_point(&self, p: &Point3) -> Point3 {
        Point3::from(self.rotation.inverse_transform_vector(&(p.coords - self.translation)))
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        let mut rotation = self.rotation * other.rotation;
        rotation.renormalize();
        Pose { translation: self.rotation * other.translation + self.translation, rotation }
    }

    pub fn inverse(&self) -> Pose {
        let rotation = self.rotation.inverse();
        Pose { translation: -(rotation * self.translation), rotation }
    }

    /// Relative transform `self⁻¹ ∘ other`.
    pub fn between(&self, other: &Pose) -> Pose {
        self.inverse().compose(other)
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.rotation.to_rotation_matrix().into_inner()
    }

    pub fn to_isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(Translation3::from(self.translation), self.rotation)
    }

    pub fn from_isometry(iso: &Isometry3<f64>) -> Self {
        Self { translation: iso.translation.vector, rotation: iso.rotation }
    }
}

impl core::ops::Mul for Pose {
    type Output = Pose;

    fn mul(self, rhs: Pose) -> Pose {
        self.compose(&rhs)
    }
}

impl core::ops::Mul<&Pose> for &Pose {
    type Output = Pose;

    fn mul(self, rhs: &Pose) -> Pose {
        self.compose(rhs)
    }
}
