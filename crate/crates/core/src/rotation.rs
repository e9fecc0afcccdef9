//! Angle conventions and the rotation underlying the cube projection.
//!
//! The rotation is defined by its first two rows, which are the scaled
//! projected cube axes:
//!
//! ```text
//! row 0 = ( cos y cos r,                      -cos y sin r,                       sin y      )
//! row 1 = ( cos p sin r + sin p sin y cos r,   cos p cos r - sin p sin y sin r,  -cos y sin p )
//! row 2 = row 0 x row 1
//! ```
//!
//! This is `Rx(pitch) * Ry(yaw) * Rz(roll)`, so yaw is the middle angle and
//! the extraction locks at |yaw| = 90. Canonical poses keep pitch in
//! [-90, 90] (cos pitch >= 0) and let yaw and roll span (-180, 180].

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::GeomError;

/// |cos yaw| below which extraction treats the matrix as gimbal-locked.
pub const GIMBAL_EPS: f64 = 1e-9;

/// Accepted orthonormality residual for [`Rotation3::new`].
pub const ORTHO_TOL: f64 = 1e-6;

/// Yaw, pitch and roll in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EulerPose {
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
}

impl EulerPose {
    pub const fn new(yaw: f64, pitch: f64, roll: f64) -> Self {
        Self { yaw, pitch, roll }
    }

    pub fn is_finite(&self) -> bool {
        self.yaw.is_finite() && self.pitch.is_finite() && self.roll.is_finite()
    }

    /// Maps the pose onto the canonical ranges without changing the rotation
    /// it describes.
    ///
    /// Angles are wrapped into (-180, 180]; if |pitch| then exceeds 90 the
    /// two-fold Euler ambiguity `(y, p, r) ~ (180 - y, p + 180, r + 180)` is
    /// applied.
    pub fn canonical(&self) -> Self {
        let (mut y, mut p, mut r) = (
            wrap_unchecked(self.yaw),
            wrap_unchecked(self.pitch),
            wrap_unchecked(self.roll),
        );
        if p.abs() > 90.0 {
            y = wrap_unchecked(180.0 - y);
            p = wrap_unchecked(p + 180.0);
            r = wrap_unchecked(r + 180.0);
        }
        Self::new(y, p, r)
    }

    pub fn is_canonical(&self) -> bool {
        let in_half_open = |a: f64| a > -180.0 && a <= 180.0;
        in_half_open(self.yaw) && in_half_open(self.roll) && self.pitch.abs() <= 90.0
    }

    /// Largest wrap-aware per-angle difference to `other`, in degrees.
    pub fn max_angle_diff(&self, other: &EulerPose) -> f64 {
        angle_diff_unchecked(self.yaw, other.yaw)
            .max(angle_diff_unchecked(self.pitch, other.pitch))
            .max(angle_diff_unchecked(self.roll, other.roll))
    }

    /// Per-angle differences (yaw, pitch, roll).
    pub fn angle_diffs(&self, other: &EulerPose) -> [f64; 3] {
        [
            angle_diff_unchecked(self.yaw, other.yaw),
            angle_diff_unchecked(self.pitch, other.pitch),
            angle_diff_unchecked(self.roll, other.roll),
        ]
    }
}

/// A proper rotation matrix (orthonormal, det = +1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation3(Matrix3<f64>);

impl Rotation3 {
    /// Validates `m` against [`ORTHO_TOL`].
    pub fn new(m: Matrix3<f64>) -> Result<Self, GeomError> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(GeomError::NonFinite("rotation matrix"));
        }
        let residual = (m.transpose() * m - Matrix3::identity()).abs().max();
        let det = m.determinant();
        if residual > ORTHO_TOL || (det - 1.0).abs() > ORTHO_TOL {
            return Err(GeomError::NotRotation { residual, det });
        }
        Ok(Self(m))
    }

    /// Builds a rotation from two orthonormal rows; the third is their cross
    /// product.
    pub fn from_rows(r0: Vector3<f64>, r1: Vector3<f64>) -> Result<Self, GeomError> {
        let r2 = r0.cross(&r1);
        Self::new(Matrix3::from_rows(&[
            r0.transpose(),
            r1.transpose(),
            r2.transpose(),
        ]))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }
}

/// Wraps an angle into (-180, 180].
pub fn wrap_angle(a: f64) -> Result<f64, GeomError> {
    if !a.is_finite() {
        return Err(GeomError::NonFinite("angle"));
    }
    Ok(wrap_unchecked(a))
}

pub(crate) fn wrap_unchecked(a: f64) -> f64 {
    let r = a.rem_euclid(360.0);
    if r > 180.0 {
        r - 360.0
    } else {
        r
    }
}

/// Absolute wrap-aware difference `|wrap(a - b)|`, in [0, 180].
pub fn angle_diff(a: f64, b: f64) -> Result<f64, GeomError> {
    if !a.is_finite() || !b.is_finite() {
        return Err(GeomError::NonFinite("angle"));
    }
    Ok(angle_diff_unchecked(a, b))
}

pub(crate) fn angle_diff_unchecked(a: f64, b: f64) -> f64 {
    wrap_unchecked(a - b).abs()
}

pub fn euler_to_matrix(p: &EulerPose) -> Result<Rotation3, GeomError> {
    if !p.is_finite() {
        return Err(GeomError::NonFinite("euler pose"));
    }
    let (sy, cy) = p.yaw.to_radians().sin_cos();
    let (sp, cp) = p.pitch.to_radians().sin_cos();
    let (sr, cr) = p.roll.to_radians().sin_cos();
    let r0 = Vector3::new(cy * cr, -cy * sr, sy);
    let r1 = Vector3::new(cp * sr + sp * sy * cr, cp * cr - sp * sy * sr, -cy * sp);
    let r2 = r0.cross(&r1);
    Ok(Rotation3(Matrix3::from_rows(&[
        r0.transpose(),
        r1.transpose(),
        r2.transpose(),
    ])))
}

/// Angle of the relative rotation between two poses, in degrees [0, 180].
///
/// Unlike per-angle differences this does not depend on which Euler triple
/// represents a rotation, so it stays continuous across the pitch fold and
/// gimbal lock.
pub fn rotation_distance(a: &EulerPose, b: &EulerPose) -> Result<f64, GeomError> {
    let m = euler_to_matrix(a)?.matrix().transpose() * euler_to_matrix(b)?.matrix();
    let axis = Vector3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]);
    Ok((axis.norm() / 2.0).atan2((m.trace() - 1.0) / 2.0).to_degrees())
}

/// Inverse of [`euler_to_matrix`], returning a canonical pose.
///
/// At gimbal lock (|cos yaw| < [`GIMBAL_EPS`]) only `roll + sign(yaw) * pitch`
/// is observable; roll is fixed to 0 and the free angle is assigned to pitch,
/// folded back into [-90, 90] if needed.
pub fn matrix_to_euler(r: &Rotation3) -> EulerPose {
    let m = r.matrix();
    let sy = m[(0, 2)].clamp(-1.0, 1.0);
    let cy_abs = m[(0, 0)].hypot(m[(0, 1)]);

    if cy_abs < GIMBAL_EPS {
        let yaw = if sy >= 0.0 { 90.0 } else { -90.0 };
        let free = m[(1, 0)].atan2(m[(1, 1)]).to_degrees();
        let pitch = sy.signum() * free;
        return EulerPose::new(yaw, pitch, 0.0).canonical();
    }

    // cos(pitch) >= 0 in canonical form, so R[2][2] = cos p cos y carries the
    // sign of cos y.
    let s = if m[(2, 2)] >= 0.0 { 1.0 } else { -1.0 };
    let yaw = sy.atan2(s * cy_abs).to_degrees();
    let pitch = (-s * m[(1, 2)]).atan2(s * m[(2, 2)]).to_degrees();
    let roll = (-s * m[(0, 1)]).atan2(s * m[(0, 0)]).to_degrees();
    // atan2 already lands in [-180, 180]; canonical() maps -180 to 180.
    EulerPose::new(yaw, pitch, roll).canonical()
}
