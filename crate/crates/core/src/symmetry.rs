//! Object symmetries and the symmetry-aware angular error.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quat::UnitQuaternion;

/// Tolerance (radians) for group closure and identity membership.
pub const CLOSURE_TOLERANCE: f64 = 1e-6;

/// Symmetry rotations act on the right: `q ⊗ p` renders like `q`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SymmetrySpec {
    None,
    Discrete { elements: Vec<UnitQuaternion> },
    Continuous { axis: [f64; 3] },
}

impl SymmetrySpec {
    /// Cyclic group of order `n` about `axis`.
    pub fn cyclic(n: usize, axis: [f64; 3]) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("cyclic order must be >= 1".into()));
        }
        let elements = (0..n)
            .map(|k| UnitQuaternion::from_axis_angle(axis, 2.0 * PI * k as f64 / n as f64))
            .collect::<Result<Vec<_>>>()?;
        let s = SymmetrySpec::Discrete { elements };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SymmetrySpec::None => Ok(()),
            SymmetrySpec::Discrete { elements } => {
                if elements.is_empty() {
                    return Err(Error::InvalidInput("discrete symmetry set is empty".into()));
                }
                let has = |q: &UnitQuaternion| elements.iter().any(|e| e.rotation_angle(q) <= CLOSURE_TOLERANCE);
                if !has(&UnitQuaternion::IDENTITY) {
                    return Err(Error::InvalidInput("discrete symmetry set lacks the identity".into()));
                }
                for a in elements {
                    for b in elements {
                        if !has(&a.multiply(b)) {
                            return Err(Error::InvalidInput(
                                "discrete symmetry set is not closed under composition".into(),
                            ));
                        }
                    }
                }
                Ok(())
            }
            SymmetrySpec::Continuous { axis } => {
                let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
                if !n.is_finite() || (n - 1.0).abs() > 1e-6 {
                    return Err(Error::InvalidInput(format!("symmetry axis {axis:?} is not unit length")));
                }
                Ok(())
            }
        }
    }

    /// Order and axis when the set is a cyclic group about one axis.
    pub fn cyclic_axis(&self) -> Option<(usize, [f64; 3])> {
        let SymmetrySpec::Discrete { elements } = self else {
            return None;
        };
        let n = elements.len();
        if n == 1 {
            return Some((1, [0.0, 0.0, 1.0]));
        }
        let step = 2.0 * PI / n as f64;
        let generator = elements
            .iter()
            .find(|e| (e.rotation_angle(&UnitQuaternion::IDENTITY) - step).abs() < 1e-6)?;
        let g = generator.to_axis_angle();
        let len = g.angle();
        let axis = [g.ax / len, g.ay / len, g.az / len];
        let all_about_axis = elements.iter().all(|e| {
            let v = [e.x, e.y, e.z];
            let s = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            s < 1e-9 || (v[0] * axis[0] + v[1] * axis[1] + v[2] * axis[2]).abs() > s * (1.0 - 1e-9)
        });
        all_about_axis.then_some((n, axis))
    }

    /// Elements for sampling a random symmetric image: the group itself, or
    /// `None` for continuous symmetry (callers draw an angle instead).
    pub fn elements(&self) -> Option<&[UnitQuaternion]> {
        match self {
            SymmetrySpec::Discrete { elements } => Some(elements),
            _ => None,
        }
    }

    /// Symmetry-aware angular error in degrees.
    pub fn angular_error_deg(&self, q_true: &UnitQuaternion, q_est: &UnitQuaternion) -> Result<f64> {
        let rad = match self {
            SymmetrySpec::None => q_true.rotation_angle(q_est),
            SymmetrySpec::Discrete { elements } => {
                if elements.is_empty() {
                    return Err(Error::InvalidInput("discrete symmetry set is empty".into()));
                }
                elements
                    .iter()
                    .map(|p| q_true.multiply(p).rotation_angle(q_est))
                    .fold(f64::INFINITY, f64::min)
            }
            SymmetrySpec::Continuous { axis } => {
                let a = q_true.rotate_vector(*axis);
                let b = q_est.rotate_vector(*axis);
                let na = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
                let nb = (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt();
                let c = (a[0] * b[0] + a[1] * b[1] + a[2] * b[2]) / (na * nb);
                c.clamp(-1.0, 1.0).acos()
            }
        };
        Ok(rad.to_degrees())
    }
}

/// Symmetric angular error in degrees; see [`SymmetrySpec::angular_error_deg`].
pub fn symmetric_angular_error(q_true: &UnitQuaternion, q_est: &UnitQuaternion, sym: &SymmetrySpec) -> Result<f64> {
    sym.angular_error_deg(q_true, q_est)
}
