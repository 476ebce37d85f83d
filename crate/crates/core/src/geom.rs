//! Points, rotation matrices and rigid transforms, all in millimeters.
//!
//! The repo-wide convention is a right-handed frame with z toward the sensor:
//! depth increases toward the viewer.

use core::fmt;
use core::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::fmath;

/// A 3D point or direction in millimeters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

pub const fn vec3(x: f64, y: f64, z: f64) -> Vec3 {
    Vec3 { x, y, z }
}

impl Vec3 {
    pub const ZERO: Vec3 = vec3(0.0, 0.0, 0.0);

    #[inline]
    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[inline]
    pub fn cross(self, o: Vec3) -> Vec3 {
        vec3(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    #[inline]
    pub fn norm(self) -> f64 {
        fmath::sqrt(self.dot(self))
    }

    pub fn normalized(self) -> Vec3 {
        let n = self.norm();
        vec3(self.x / n, self.y / n, self.z / n)
    }

    #[inline]
    pub fn scale(self, s: f64) -> Vec3 {
        vec3(self.x * s, self.y * s, self.z * s)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    #[inline]
    fn add(self, o: Vec3) -> Vec3 {
        vec3(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    #[inline]
    fn sub(self, o: Vec3) -> Vec3 {
        vec3(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    #[inline]
    fn neg(self) -> Vec3 {
        vec3(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    #[inline]
    fn mul(self, s: f64) -> Vec3 {
        self.scale(s)
    }
}

/// Row-major 3x3 matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mat3(pub [[f64; 3]; 3]);

impl Mat3 {
    pub const IDENTITY: Mat3 = Mat3([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);

    /// Rotation about the x axis by `a` radians.
    pub fn rot_x(a: f64) -> Mat3 {
        let (s, c) = (fmath::sin(a), fmath::cos(a));
        Mat3([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])
    }

    /// Rotation about the y axis by `a` radians.
    pub fn rot_y(a: f64) -> Mat3 {
        let (s, c) = (fmath::sin(a), fmath::cos(a));
        Mat3([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
    }

    /// Rotation about the z axis by `a` radians.
    pub fn rot_z(a: f64) -> Mat3 {
        let (s, c) = (fmath::sin(a), fmath::cos(a));
        Mat3([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    }

    pub fn transpose(self) -> Mat3 {
        let m = self.0;
        Mat3([
            [m[0][0], m[1][0], m[2][0]],
            [m[0][1], m[1][1], m[2][1]],
            [m[0][2], m[1][2], m[2][2]],
        ])
    }

    pub fn det(self) -> f64 {
        let m = self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    #[inline]
    pub fn mul_vec(self, v: Vec3) -> Vec3 {
        let m = self.0;
        vec3(
            m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z,
        )
    }

    pub fn mul_mat(self, o: Mat3) -> Mat3 {
        let mut r = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                r[i][j] =
                    self.0[i][0] * o.0[0][j] + self.0[i][1] * o.0[1][j] + self.0[i][2] * o.0[2][j];
            }
        }
        Mat3(r)
    }

    /// Largest absolute deviation of `R^T R` from the identity, plus the
    /// deviation of the determinant from +1.
    pub fn orthonormality_error(self) -> f64 {
        let g = self.transpose().mul_mat(self);
        let mut e: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let target = if i == j { 1.0 } else { 0.0 };
                e = e.max(fmath::abs(g.0[i][j] - target));
            }
        }
        e.max(fmath::abs(self.det() - 1.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeomError {
    /// Rotation part is not orthonormal with determinant +1 within 1e-9.
    NotARotation,
}

impl fmt::Display for GeomError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GeomError::NotARotation => {
                write!(f, "rotation matrix is not orthonormal with det +1 within 1e-9")
            }
        }
    }
}

impl core::error::Error for GeomError {}

/// Proper rigid motion: `p -> R p + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    rotation: Mat3,
    translation: Vec3,
}

pub const ROTATION_TOL: f64 = 1e-9;

impl RigidTransform {
    pub const IDENTITY: RigidTransform = RigidTransform {
        rotation: Mat3::IDENTITY,
        translation: Vec3::ZERO,
    };

    pub fn new(rotation: Mat3, translation: Vec3) -> Result<RigidTransform, GeomError> {
        if rotation.orthonormality_error() > ROTATION_TOL {
            return Err(GeomError::NotARotation);
        }
        Ok(RigidTransform { rotation, translation })
    }

    /// Builds a transform from parts already known to be a proper rotation
    /// (compositions of library rotations). Debug-checked only.
    pub(crate) fn from_parts(rotation: Mat3, translation: Vec3) -> RigidTransform {
        debug_assert!(rotation.orthonormality_error() <= 1e-7);
        RigidTransform { rotation, translation }
    }

    pub fn rotation(&self) -> Mat3 {
        self.rotation
    }

    pub fn translation(&self) -> Vec3 {
        self.translation
    }

    #[inline]
    pub fn apply(&self, p: Vec3) -> Vec3 {
        self.rotation.mul_vec(p) + self.translation
    }

    /// Composition: applying the result equals applying `b`, then `a`.
    pub fn compose(a: &RigidTransform, b: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: a.rotation.mul_mat(b.rotation),
            translation: a.rotation.mul_vec(b.translation) + a.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -rt.mul_vec(self.translation),
        }
    }

    /// Yaw about y, then pitch about x, then roll about z: `Rz Ry Rx`.
    pub fn from_euler_deg(yaw: f64, pitch: f64, roll: f64, translation: Vec3) -> RigidTransform {
        let r = Mat3::rot_z(fmath::rad(roll))
            .mul_mat(Mat3::rot_y(fmath::rad(yaw)))
            .mul_mat(Mat3::rot_x(fmath::rad(pitch)));
        RigidTransform { rotation: r, translation }
    }
}
