//! Scalar/vector aliases and rigid-body transforms.

use nalgebra::{Matrix3, Point3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::Result;

/// 3D vector, `f64` components, meters.
pub type Vec3 = Vector3<f64>;
/// 2D vector, `f64` components.
pub type Vec2 = Vector2<f64>;
/// 3D point, `f64` coordinates, meters.
pub type Pt3 = Point3<f64>;
/// 3x3 matrix, `f64` entries.
pub type Mat3 = Matrix3<f64>;

/// Max absolute deviation of `R^T R` from the identity.
pub fn orthonormality_error(r: &Mat3) -> f64 {
    let d = r.transpose() * r - Mat3::identity();
    d.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Rigid world transform: rotation followed by translation.
///
/// The rotation must be orthonormal with determinant +1 (checked to 1e-9 at
/// construction). Composition and inversion stay within the type.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RigidTransformRepr", into = "RigidTransformRepr")]
pub struct RigidTransform {
    rotation: Mat3,
    translation: Vec3,
}

#[derive(Serialize, Deserialize)]
struct RigidTransformRepr {
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
}

impl From<RigidTransform> for RigidTransformRepr {
    fn from(t: RigidTransform) -> Self {
        let r = &t.rotation;
        RigidTransformRepr {
            rotation: [
                [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
                [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
                [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
            ],
            translation: [t.translation.x, t.translation.y, t.translation.z],
        }
    }
}

impl TryFrom<RigidTransformRepr> for RigidTransform {
    type Error = CoreError;
    fn try_from(r: RigidTransformRepr) -> Result<Self> {
        let m = Mat3::from_fn(|i, j| r.rotation[i][j]);
        RigidTransform::new(m, Vec3::new(r.translation[0], r.translation[1], r.translation[2]))
    }
}

const ROTATION_TOL: f64 = 1e-9;

impl RigidTransform {
    /// Build a transform, checking that `rotation` is a proper rotation.
    pub fn new(rotation: Mat3, translation: Vec3) -> Result<Self> {
        let ortho = orthonormality_error(&rotation);
        if ortho >= ROTATION_TOL {
            return Err(CoreError::InvalidParameter(format!(
                "rotation not orthonormal (|R^T R - I| = {ortho:.3e})"
            )));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() >= 1e-6 {
            return Err(CoreError::InvalidParameter(format!(
                "rotation determinant {det} != +1"
            )));
        }
        Ok(Self { rotation, translation })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
        }
    }

    /// Pure translation.
    pub fn from_translation(t: Vec3) -> Self {
        Self {
            rotation: Mat3::identity(),
            translation: t,
        }
    }

    /// Rotation about the world Y axis (right-handed, radians).
    pub fn from_rotation_y(angle: f64) -> Self {
        Self {
            rotation: rotation_y(angle),
            translation: Vec3::zeros(),
        }
    }

    pub fn rotation(&self) -> &Mat3 {
        &self.rotation
    }

    pub fn translation(&self) -> Vec3 {
        self.translation
    }

    /// Apply to a point: `R p + t`.
    pub fn apply(&self, p: &Pt3) -> Pt3 {
        Pt3::from(self.rotation * p.coords + self.translation)
    }

    /// Apply to a direction (rotation only).
    pub fn apply_vec(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Largest absolute entry of `self ∘ other⁻¹ − I` over rotation and
    /// translation; zero iff the transforms are identical.
    pub fn deviation_from(&self, other: &RigidTransform) -> f64 {
        let d = self.compose(&other.inverse());
        let rot_dev = (d.rotation - Mat3::identity())
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        rot_dev.max(d.translation.amax())
    }
}

/// Right-handed rotation matrix about the Y axis.
pub fn rotation_y(angle: f64) -> Mat3 {
    let (s, c) = angle.sin_cos();
    Mat3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_round_trip() {
        let t = RigidTransform::new(rotation_y(0.7), Vec3::new(1.0, -2.0, 3.0)).unwrap();
        let p = Pt3::new(0.3, 0.4, 0.5);
        let q = t.inverse().apply(&t.apply(&p));
        assert!((q - p).norm() < 1e-12);
        assert!(t.compose(&t.inverse()).deviation_from(&RigidTransform::identity()) < 1e-9);
    }

    #[test]
    fn composition_is_associative() {
        let a = RigidTransform::new(rotation_y(0.3), Vec3::new(1.0, 0.0, 0.0)).unwrap();
        let b = RigidTransform::new(rotation_y(-1.1), Vec3::new(0.0, 2.0, 0.0)).unwrap();
        let c = RigidTransform::new(rotation_y(2.0), Vec3::new(0.0, 0.0, -3.0)).unwrap();
        let lhs = a.compose(&b).compose(&c);
        let rhs = a.compose(&b.compose(&c));
        assert!(lhs.deviation_from(&rhs) < 1e-9);
    }

    #[test]
    fn rejects_improper_rotation() {
        let mut m = Mat3::identity();
        m[(0, 0)] = -1.0; // reflection
        assert!(RigidTransform::new(m, Vec3::zeros()).is_err());
        let skew = Mat3::new(1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(RigidTransform::new(skew, Vec3::zeros()).is_err());
    }

    #[test]
    fn rotation_y_quarter_turn() {
        // (1,0,0) -> (0,0,-1) under a right-handed +90 degree yaw.
        let r = rotation_y(std::f64::consts::FRAC_PI_2);
        let v = r * Vec3::new(1.0, 0.0, 0.0);
        assert!((v - Vec3::new(0.0, 0.0, -1.0)).norm() < 1e-12);
    }
}
