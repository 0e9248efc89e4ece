//! Rigid-frame algebra: rotations, poses and frame changes.
//!
//! Every [`Pose`] is named `parent_from_child`: it maps coordinates expressed
//! in the child frame into the parent frame, `p_parent = R * p_child + t`.
//! Composition therefore chains left to right, `a_from_c = a_from_b ∘ b_from_c`.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

pub type Vec3 = Vector3<f64>;

const ROTATION_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("matrix is not orthonormal (max |RᵀR - I| = {0:e})")]
    NotOrthonormal(f64),
    #[error("matrix is not a proper rotation (det = {0})")]
    Improper(f64),
    #[error("non-finite pose component")]
    NonFinite,
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(angle: f64) -> f64 {
    let mut a = angle.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// A proper orthonormal 3×3 matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotationMatrix(Matrix3<f64>);

impl RotationMatrix {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// Checked construction: rejects matrices that are not orthonormal with
    /// determinant +1 (both within 1e-9).
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self, GeometryError> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let dev = (m.transpose() * m - Matrix3::identity()).abs().max();
        if dev > ROTATION_TOL {
            return Err(GeometryError::NotOrthonormal(dev));
        }
        let det = m.determinant();
        if (det - 1.0).abs() > ROTATION_TOL {
            return Err(GeometryError::Improper(det));
        }
        Ok(Self(m))
    }

    /// Projects an almost-rotation back onto SO(3) (via polar decomposition).
    pub fn orthonormalized(m: Matrix3<f64>) -> Self {
        let svd = m.svd(true, true);
        let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
        let mut r = u * v_t;
        if r.determinant() < 0.0 {
            let mut u = u;
            u.column_mut(2).neg_mut();
            r = u * v_t;
        }
        Self(r)
    }

    pub fn about_x(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self(Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c))
    }

    pub fn about_y(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self(Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c))
    }

    pub fn about_z(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self(Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0))
    }

    /// Z-Y-X (yaw, pitch, roll) intrinsic rotation.
    pub fn from_yaw_pitch_roll(yaw: f64, pitch: f64, roll: f64) -> Self {
        Self(Self::about_z(yaw).0 * Self::about_y(pitch).0 * Self::about_x(roll).0)
    }

    /// Rodrigues' formula for an axis-angle vector.
    pub fn from_axis_angle(omega: &Vec3) -> Self {
        let theta = omega.norm();
        let k = skew(omega);
        if theta < 1e-8 {
            // second-order series, re-projected
            return Self::orthonormalized(Matrix3::identity() + k + 0.5 * k * k);
        }
        let a = theta.sin() / theta;
        let b = (1.0 - theta.cos()) / (theta * theta);
        Self(Matrix3::identity() + a * k + b * k * k)
    }

    /// Rotation angle in radians, in `[0, π]`.
    pub fn angle(&self) -> f64 {
        // atan2 keeps full precision near 0 and π, where acos of the trace does not
        let m = &self.0;
        let s = Vec3::new(
            m[(2, 1)] - m[(1, 2)],
            m[(0, 2)] - m[(2, 0)],
            m[(1, 0)] - m[(0, 1)],
        )
        .norm()
            / 2.0;
        s.atan2((m.trace() - 1.0) / 2.0)
    }

    /// Heading of the rotated x axis in the parent's horizontal plane.
    pub fn yaw(&self) -> f64 {
        self.0[(1, 0)].atan2(self.0[(0, 0)])
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    pub fn inverse_rotate(&self, v: &Vec3) -> Vec3 {
        self.0.tr_mul(v)
    }

    pub fn compose(&self, other: &RotationMatrix) -> Self {
        Self(self.0 * other.0)
    }

    /// Angle of the relative rotation `selfᵀ · other`.
    pub fn angle_to(&self, other: &RotationMatrix) -> f64 {
        self.transpose().compose(other).angle()
    }
}

impl Default for RotationMatrix {
    fn default() -> Self {
        Self::identity()
    }
}

pub fn skew(v: &Vec3) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Position and orientation of a child frame expressed in its parent frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec3,
    pub orientation: RotationMatrix,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn new(position: Vec3, orientation: RotationMatrix) -> Result<Self, GeometryError> {
        if position.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        Ok(Self {
            position,
            orientation,
        })
    }

    pub fn identity() -> Self {
        Self {
            position: Vec3::zeros(),
            orientation: RotationMatrix::identity(),
        }
    }

    pub fn from_translation(position: Vec3) -> Self {
        Self {
            position,
            orientation: RotationMatrix::identity(),
        }
    }

    pub fn from_position_yaw(position: Vec3, yaw: f64) -> Self {
        Self {
            position,
            orientation: RotationMatrix::about_z(yaw),
        }
    }

    /// `self ∘ other`: if `self` is `a_from_b` and `other` is `b_from_c`,
    /// the result is `a_from_c`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            position: self.orientation.rotate(&other.position) + self.position,
            orientation: self.orientation.compose(&other.orientation),
        }
    }

    pub fn inverse(&self) -> Pose {
        let r_t = self.orientation.transpose();
        Pose {
            position: -r_t.rotate(&self.position),
            orientation: r_t,
        }
    }

    /// Maps a point from the child frame into the parent frame.
    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.orientation.rotate(p) + self.position
    }

    /// Maps a point from the parent frame into the child frame.
    pub fn inverse_transform_point(&self, p: &Vec3) -> Vec3 {
        self.orientation.inverse_rotate(&(p - self.position))
    }
}

/// Position of the vehicle's reference point expressed in the target frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelativePosition {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl RelativePosition {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    /// Position of `point_world` in the frame described by `world_from_target`.
    pub fn of_point(point_world: &Vec3, world_from_target: &Pose) -> Self {
        Self::from(world_from_target.inverse_transform_point(point_world))
    }

    /// Distance from the target x axis, `√(y² + z²)`.
    pub fn lateral(&self) -> f64 {
        self.y.hypot(self.z)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_vec(&self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }
}

impl From<Vec3> for RelativePosition {
    fn from(v: Vec3) -> Self {
        Self::new(v.x, v.y, v.z)
    }
}

/// Re-expresses a free vector given in world coordinates in the target frame.
pub fn to_target_frame(u_world: &Vec3, world_from_target: &Pose) -> Vec3 {
    world_from_target.orientation.inverse_rotate(u_world)
}

/// Inverse of [`to_target_frame`].
pub fn from_target_frame(u_target: &Vec3, world_from_target: &Pose) -> Vec3 {
    world_from_target.orientation.rotate(u_target)
}
