//! Rigid transforms shared by assets, cameras, instances and sensors.

use nalgebra::{Isometry3, Matrix3, Point3, Quaternion, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance used when checking that a rotation is orthonormal or a quaternion is unit length.
pub const RIGID_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("quaternion norm {0} is not 1")]
    NonUnitQuaternion(f64),
    #[error("rotation matrix is not orthonormal with determinant +1 (max deviation {0:e})")]
    NonRigidRotation(f64),
    #[error("transform contains non-finite values")]
    NonFinite,
    #[error("zero-length quaternion")]
    ZeroQuaternion,
}

/// A proper rigid transform (rotation + translation), mapping points from a
/// source frame into a target frame: `x_target = R x_source + t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidTransform {
    iso: Isometry3<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self { iso: Isometry3::identity() }
    }

    pub fn from_isometry(iso: Isometry3<f64>) -> Self {
        Self { iso }
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self { iso: Isometry3::from_parts(Translation3::from(t), UnitQuaternion::identity()) }
    }

    pub fn from_rotation(rotation: UnitQuaternion<f64>) -> Self {
        Self { iso: Isometry3::from_parts(Translation3::identity(), rotation) }
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self { iso: Isometry3::from_parts(Translation3::from(translation), rotation) }
    }

    /// Builds a transform from a unit quaternion given as `(w, x, y, z)`.
    /// The quaternion must already be unit length within [`RIGID_TOLERANCE`].
    pub fn from_wxyz(translation: [f64; 3], wxyz: [f64; 4]) -> Result<Self, GeometryError> {
        if translation.iter().chain(wxyz.iter()).any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let q = Quaternion::new(wxyz[0], wxyz[1], wxyz[2], wxyz[3]);
        let norm = q.norm();
        if (norm - 1.0).abs() > RIGID_TOLERANCE {
            return Err(GeometryError::NonUnitQuaternion(norm));
        }
        Ok(Self::new(UnitQuaternion::new_normalize(q), Vector3::from(translation)))
    }

    /// Like [`RigidTransform::from_wxyz`] but normalizes any non-zero quaternion.
    pub fn from_wxyz_normalizing(
        translation: [f64; 3],
        wxyz: [f64; 4],
    ) -> Result<Self, GeometryError> {
        if translation.iter().chain(wxyz.iter()).any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let q = Quaternion::new(wxyz[0], wxyz[1], wxyz[2], wxyz[3]);
        if q.norm() < 1e-12 {
            return Err(GeometryError::ZeroQuaternion);
        }
        Ok(Self::new(UnitQuaternion::new_normalize(q), Vector3::from(translation)))
    }

    /// Builds a transform from an explicit rotation matrix, rejecting anything
    /// that is not orthonormal with determinant +1.
    pub fn from_matrix(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        if rotation.iter().chain(translation.iter()).any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let deviation = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        let det = rotation.determinant();
        if deviation > RIGID_TOLERANCE || (det - 1.0).abs() > RIGID_TOLERANCE {
            return Err(GeometryError::NonRigidRotation(deviation.max((det - 1.0).abs())));
        }
        let rot = nalgebra::Rotation3::from_matrix_unchecked(rotation);
        Ok(Self::new(UnitQuaternion::from_rotation_matrix(&rot), translation))
    }

    pub fn isometry(&self) -> &Isometry3<f64> {
        &self.iso
    }

    pub fn rotation(&self) -> UnitQuaternion<f64> {
        self.iso.rotation
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.iso.rotation.to_rotation_matrix().into_inner()
    }

    pub fn translation(&self) -> Vector3<f64> {
        self.iso.translation.vector
    }

    /// `(w, x, y, z)` quaternion components.
    pub fn wxyz(&self) -> [f64; 4] {
        let q = self.iso.rotation.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    pub fn inverse(&self) -> Self {
        Self { iso: self.iso.inverse() }
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Self) -> Self {
        Self { iso: self.iso * other.iso }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.iso.transform_point(&Point3::from(*p)).coords
    }

    pub fn transform_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.iso.rotation * v
    }

    pub fn is_finite(&self) -> bool {
        self.translation().iter().all(|v| v.is_finite())
            && self.wxyz().iter().all(|v| v.is_finite())
    }
}

/// Serialized pose: translation plus `(w, x, y, z)` quaternion.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub translation: [f64; 3],
    pub rotation: [f64; 4],
}

impl From<&RigidTransform> for PoseRecord {
    fn from(t: &RigidTransform) -> Self {
        let v = t.translation();
        Self { translation: [v.x, v.y, v.z], rotation: t.wxyz() }
    }
}

impl PoseRecord {
    /// Strict conversion: the quaternion must be unit length.
    pub fn to_transform(&self) -> Result<RigidTransform, GeometryError> {
        RigidTransform::from_wxyz(self.translation, self.rotation)
    }

    /// Lenient conversion used for human-edited files: normalizes the quaternion.
    pub fn to_transform_normalizing(&self) -> Result<RigidTransform, GeometryError> {
        RigidTransform::from_wxyz_normalizing(self.translation, self.rotation)
    }
}

/// Parses the textual pose form `"tx ty tz qw qx qy qz"` (whitespace or comma separated).
/// The quaternion is normalized.
pub fn parse_pose(text: &str) -> Result<RigidTransform, String> {
    let values: Vec<f64> = text
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|e| format!("invalid number {s:?}: {e}")))
        .collect::<Result<_, _>>()?;
    if values.len() != 7 {
        return Err(format!("expected 7 values \"tx ty tz qw qx qy qz\", got {}", values.len()));
    }
    RigidTransform::from_wxyz_normalizing(
        [values[0], values[1], values[2]],
        [values[3], values[4], values[5], values[6]],
    )
    .map_err(|e| e.to_string())
}
