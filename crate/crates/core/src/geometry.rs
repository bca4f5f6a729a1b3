//! Small 3D geometry helpers shared by the mesh, noise and registration code.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Cross-product matrix: `skew(a) * b == a.cross(&b)`.
pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rotation matrix for an axis-angle vector.
pub fn exp_so3(omega: &Vec3) -> Mat3 {
    Rotation3::new(*omega).into_inner()
}

/// Axis-angle vector of a rotation matrix.
pub fn log_so3(r: &Mat3) -> Vec3 {
    Rotation3::from_matrix_unchecked(*r).scaled_axis()
}

/// Left Jacobian of SO(3): `exp(omega + d) ~= exp(J_l(omega) d) exp(omega)`.
pub fn left_jacobian(omega: &Vec3) -> Mat3 {
    let theta2 = omega.norm_squared();
    let k = skew(omega);
    if theta2 < 1e-12 {
        return Mat3::identity() + 0.5 * k + (k * k) / 6.0;
    }
    let theta = theta2.sqrt();
    Mat3::identity()
        + ((1.0 - theta.cos()) / theta2) * k
        + ((theta - theta.sin()) / (theta2 * theta)) * (k * k)
}

/// Rotation angle (radians) of a rotation matrix.
pub fn rotation_angle(r: &Mat3) -> f64 {
    let c = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    // acos loses precision near identity; the skew part is better conditioned there.
    let s = 0.5
        * Vec3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]).norm();
    s.atan2(c)
}

/// Projects a near-orthogonal matrix back onto SO(3).
pub fn orthonormalize(r: &Mat3) -> Mat3 {
    let q = UnitQuaternion::from_matrix(r);
    q.to_rotation_matrix().into_inner()
}

/// Similarity transform `x -> a R x + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityTransform {
    pub scale: f64,
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl Default for SimilarityTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl SimilarityTransform {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn new(scale: f64, rotation: Mat3, translation: Vec3) -> Self {
        Self {
            scale,
            rotation,
            translation,
        }
    }

    pub fn apply_point(&self, p: &Vec3) -> Vec3 {
        self.scale * (self.rotation * p) + self.translation
    }

    pub fn apply_normal(&self, n: &Vec3) -> Vec3 {
        self.rotation * n
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            scale: 1.0 / self.scale,
            rotation: rt,
            translation: -(rt * self.translation) / self.scale,
        }
    }

    /// `self.compose(other)` applies `other` first, then `self`.
    pub fn compose(&self, other: &Self) -> Self {
        Self {
            scale: self.scale * other.scale,
            rotation: self.rotation * other.rotation,
            translation: self.scale * (self.rotation * other.translation) + self.translation,
        }
    }

    /// Unit quaternion `[w, x, y, z]` of the rotation part.
    pub fn quaternion(&self) -> [f64; 4] {
        let q = UnitQuaternion::from_matrix(&self.rotation);
        let q = if q.w < 0.0 { -q.into_inner() } else { q.into_inner() };
        [q.w, q.i, q.j, q.k]
    }

    pub fn rotation_row_major(&self) -> [f64; 9] {
        let r = &self.rotation;
        [
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
        ]
    }

    /// Checks `R^T R = I` and `det R = +1` within `tol`.
    pub fn is_proper(&self, tol: f64) -> bool {
        let e = self.rotation.transpose() * self.rotation - Mat3::identity();
        e.abs().max() <= tol && (self.rotation.determinant() - 1.0).abs() <= tol
    }
}
