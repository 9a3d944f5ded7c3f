//! Unit quaternions as the orientation representation.
//!
//! `q` and `-q` describe the same rotation, so every distance here is
//! antipodally invariant. Components are ordered `[w, x, y, z]` wherever a
//! quaternion is serialized.

use std::f64::consts::PI;
use std::ops::{Mul, Neg};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Norm below which a 4-vector cannot be normalized.
pub const MIN_NORM: f64 = 1e-12;

/// Accepted deviation from unit norm when reading quaternions from files.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "[f64; 4]", try_from = "[f64; 4]")]
pub struct UnitQuaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

/// A rotation drawn as a point in axis-angle space: direction is the axis,
/// length is the angle in radians (in `[0, π]`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisAnglePoint {
    pub ax: f64,
    pub ay: f64,
    pub az: f64,
}

impl AxisAnglePoint {
    pub fn angle(&self) -> f64 {
        (self.ax * self.ax + self.ay * self.ay + self.az * self.az).sqrt()
    }
}

impl UnitQuaternion {
    pub const IDENTITY: UnitQuaternion = UnitQuaternion {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    /// Normalizes an arbitrary 4-vector `[w, x, y, z]`.
    pub fn normalize(v: [f64; 4]) -> Result<Self> {
        let n = norm4(&v);
        if !n.is_finite() || n <= MIN_NORM {
            return Err(Error::InvalidInput(format!(
                "cannot normalize quaternion with norm {n:e}"
            )));
        }
        Ok(Self::from_array_unchecked([
            v[0] / n,
            v[1] / n,
            v[2] / n,
            v[3] / n,
        ]))
    }

    /// Accepts a quaternion that is already unit length within
    /// [`UNIT_NORM_TOLERANCE`], renormalizing away the residual.
    pub fn from_unit_array(v: [f64; 4]) -> Result<Self> {
        let n = norm4(&v);
        if !n.is_finite() || (n - 1.0).abs() > UNIT_NORM_TOLERANCE {
            return Err(Error::InvalidInput(format!(
                "quaternion {v:?} is not unit length (norm {n})"
            )));
        }
        // already-unit input is kept bit-exact so serialization round-trips
        if (n - 1.0).abs() <= 4.0 * f64::EPSILON {
            return Ok(Self::from_array_unchecked(v));
        }
        Self::normalize(v)
    }

    pub(crate) fn from_array_unchecked(v: [f64; 4]) -> Self {
        UnitQuaternion {
            w: v[0],
            x: v[1],
            y: v[2],
            z: v[3],
        }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn norm(&self) -> f64 {
        norm4(&self.to_array())
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn conjugate(&self) -> Self {
        UnitQuaternion {
            w: self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }

    /// Rotation of `angle` radians about `axis` (need not be normalized).
    pub fn from_axis_angle(axis: [f64; 3], angle: f64) -> Result<Self> {
        let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
        if n <= MIN_NORM {
            return Err(Error::InvalidInput("rotation axis has zero length".into()));
        }
        let (s, c) = (0.5 * angle).sin_cos();
        Self::normalize([c, s * axis[0] / n, s * axis[1] / n, s * axis[2] / n])
    }

    /// Inverse of [`to_axis_angle`](Self::to_axis_angle); the origin maps to
    /// the identity.
    pub fn from_axis_angle_point(p: AxisAnglePoint) -> Self {
        let angle = p.angle();
        if angle <= MIN_NORM {
            return Self::IDENTITY;
        }
        Self::from_axis_angle([p.ax, p.ay, p.az], angle).unwrap_or(Self::IDENTITY)
    }

    /// Representative with `w > 0`; ties on `w == 0` are broken by the first
    /// nonzero of `x, y, z` being positive.
    pub fn canonical(self) -> Self {
        let v = self.to_array();
        match v.iter().find(|c| **c != 0.0) {
            Some(c) if *c < 0.0 => -self,
            _ => self,
        }
    }

    pub fn is_canonical(&self) -> bool {
        self.canonical() == *self
    }

    /// Full rotation angle (radians, in `[0, π]`) between the two rotations,
    /// `2·acos(|q1·q2|)`.
    ///
    /// Evaluated through the chord lengths of `q1 ± q2`, which stays accurate
    /// for nearly coincident rotations where `acos` near 1 does not.
    pub fn rotation_angle(&self, other: &Self) -> f64 {
        let s = if self.dot(other) < 0.0 { -1.0 } else { 1.0 };
        let a = self.to_array();
        let b = other.to_array();
        let mut minus = 0.0;
        let mut plus = 0.0;
        for i in 0..4 {
            let d = a[i] - s * b[i];
            let p = a[i] + s * b[i];
            minus += d * d;
            plus += p * p;
        }
        (4.0 * minus.sqrt().atan2(plus.sqrt())).min(PI)
    }

    /// Rotation angle in degrees.
    pub fn angle_deg_to(&self, other: &Self) -> f64 {
        self.rotation_angle(other).to_degrees()
    }

    /// Hamilton product, renormalized.
    pub fn multiply(&self, rhs: &Self) -> Self {
        let v = hamilton(self.to_array(), rhs.to_array());
        Self::normalize(v).expect("product of unit quaternions is nonzero")
    }

    /// Rotates `v` by conjugation `q v q⁻¹`.
    pub fn rotate_vector(&self, v: [f64; 3]) -> [f64; 3] {
        let r = self.to_rotation_matrix();
        [
            r[0][0] * v[0] + r[0][1] * v[1] + r[0][2] * v[2],
            r[1][0] * v[0] + r[1][1] * v[1] + r[1][2] * v[2],
            r[2][0] * v[0] + r[2][1] * v[1] + r[2][2] * v[2],
        ]
    }

    pub fn to_rotation_matrix(&self) -> [[f64; 3]; 3] {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        [
            [
                w * w + x * x - y * y - z * z,
                2.0 * (x * y - w * z),
                2.0 * (x * z + w * y),
            ],
            [
                2.0 * (x * y + w * z),
                w * w - x * x + y * y - z * z,
                2.0 * (y * z - w * x),
            ],
            [
                2.0 * (x * z - w * y),
                2.0 * (y * z + w * x),
                w * w - x * x - y * y + z * z,
            ],
        ]
    }

    /// Quaternion of a proper rotation matrix (Shepperd's method). The
    /// result is canonical.
    pub fn from_rotation_matrix(r: &[[f64; 3]; 3]) -> Result<Self> {
        let trace = r[0][0] + r[1][1] + r[2][2];
        let v = if trace > r[0][0] && trace > r[1][1] && trace > r[2][2] {
            let s = (1.0 + trace).sqrt() * 2.0;
            [
                0.25 * s,
                (r[2][1] - r[1][2]) / s,
                (r[0][2] - r[2][0]) / s,
                (r[1][0] - r[0][1]) / s,
            ]
        } else if r[0][0] > r[1][1] && r[0][0] > r[2][2] {
            let s = (1.0 + r[0][0] - r[1][1] - r[2][2]).sqrt() * 2.0;
            [
                (r[2][1] - r[1][2]) / s,
                0.25 * s,
                (r[0][1] + r[1][0]) / s,
                (r[0][2] + r[2][0]) / s,
            ]
        } else if r[1][1] > r[2][2] {
            let s = (1.0 + r[1][1] - r[0][0] - r[2][2]).sqrt() * 2.0;
            [
                (r[0][2] - r[2][0]) / s,
                (r[0][1] + r[1][0]) / s,
                0.25 * s,
                (r[1][2] + r[2][1]) / s,
            ]
        } else {
            let s = (1.0 + r[2][2] - r[0][0] - r[1][1]).sqrt() * 2.0;
            [
                (r[1][0] - r[0][1]) / s,
                (r[0][2] + r[2][0]) / s,
                (r[1][2] + r[2][1]) / s,
                0.25 * s,
            ]
        };
        Ok(Self::normalize(v)?.canonical())
    }

    /// Axis-angle point of the canonical representative; the identity maps
    /// to the origin.
    pub fn to_axis_angle(&self) -> AxisAnglePoint {
        let q = self.canonical();
        let s = (q.x * q.x + q.y * q.y + q.z * q.z).sqrt();
        if s <= MIN_NORM {
            return AxisAnglePoint {
                ax: 0.0,
                ay: 0.0,
                az: 0.0,
            };
        }
        let angle = 2.0 * s.atan2(q.w);
        AxisAnglePoint {
            ax: q.x / s * angle,
            ay: q.y / s * angle,
            az: q.z / s * angle,
        }
    }

    /// Uniform sample on S³ (normalized 4D Gaussian).
    pub fn random_uniform<R: Rng + ?Sized>(rng: &mut R) -> Self {
        loop {
            let v: [f64; 4] = [
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
            ];
            if let Ok(q) = Self::normalize(v) {
                if norm4(&v) > 1e-6 {
                    return q;
                }
            }
        }
    }
}

impl Default for UnitQuaternion {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Neg for UnitQuaternion {
    type Output = UnitQuaternion;
    fn neg(self) -> Self {
        UnitQuaternion {
            w: -self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }
}

impl Mul for UnitQuaternion {
    type Output = UnitQuaternion;
    fn mul(self, rhs: Self) -> Self {
        self.multiply(&rhs)
    }
}

impl From<UnitQuaternion> for [f64; 4] {
    fn from(q: UnitQuaternion) -> Self {
        q.to_array()
    }
}

impl TryFrom<[f64; 4]> for UnitQuaternion {
    type Error = Error;
    fn try_from(v: [f64; 4]) -> Result<Self> {
        Self::from_unit_array(v)
    }
}

pub(crate) fn hamilton(a: [f64; 4], b: [f64; 4]) -> [f64; 4] {
    [
        a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
        a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
        a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
        a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0],
    ]
}

fn norm4(v: &[f64; 4]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2] + v[3] * v[3]).sqrt()
}
