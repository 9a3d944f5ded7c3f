//! Synthetic stand-in for image features.
//!
//! A pose is encoded by quantities that are invariant under the object's
//! symmetry, so symmetric poses are indistinguishable in feature space:
//! the rotated symmetry axis `R a`, and the componentwise `n`-th power of
//! `R u + i R v` for a frame `(u, v, a)` and cyclic order `n`. Without
//! symmetry (`n = 1`) this is the full rotation matrix.

use crate::error::{Error, Result};
use crate::quat::UnitQuaternion;
use crate::symmetry::SymmetrySpec;

/// Pose-encoding components.
pub const POSE_FEATURE_DIM: usize = 9;

/// Pose encoding plus the noise-level channel.
pub const FEATURE_DIM: usize = POSE_FEATURE_DIM + 1;

pub const FEATURE_MODEL: &str = "symmetry-invariant-rotation-v1";

/// Orthonormal `(u, v)` completing `a` to a right-handed frame.
fn complete_frame(a: [f64; 3]) -> ([f64; 3], [f64; 3]) {
    let e = if a[0].abs() <= a[1].abs() && a[0].abs() <= a[2].abs() {
        [1.0, 0.0, 0.0]
    } else if a[1].abs() <= a[2].abs() {
        [0.0, 1.0, 0.0]
    } else {
        [0.0, 0.0, 1.0]
    };
    let d = e[0] * a[0] + e[1] * a[1] + e[2] * a[2];
    let u = normalize3([e[0] - d * a[0], e[1] - d * a[1], e[2] - d * a[2]]);
    let v = cross(a, u);
    (u, v)
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn normalize3(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

fn complex_pow(re: f64, im: f64, n: usize) -> (f64, f64) {
    let (mut r, mut i) = (1.0, 0.0);
    for _ in 0..n {
        (r, i) = (r * re - i * im, r * im + i * re);
    }
    (r, i)
}

/// Noise-free pose encoding of `q` for an object with symmetry `sym`.
pub fn pose_features(q: &UnitQuaternion, sym: &SymmetrySpec) -> Result<[f64; POSE_FEATURE_DIM]> {
    let (n, axis) = match sym {
        SymmetrySpec::None => (1, [0.0, 0.0, 1.0]),
        SymmetrySpec::Discrete { .. } => sym.cyclic_axis().ok_or_else(|| {
            Error::InvalidInput("feature model supports only cyclic discrete symmetry".into())
        })?,
        SymmetrySpec::Continuous { axis } => (0, normalize3(*axis)),
    };
    let ra = q.rotate_vector(axis);
    let mut out = [0.0; POSE_FEATURE_DIM];
    out[..3].copy_from_slice(&ra);
    if n > 0 {
        let (u, v) = complete_frame(axis);
        let (ru, rv) = (q.rotate_vector(u), q.rotate_vector(v));
        for k in 0..3 {
            let (re, im) = complex_pow(ru[k], rv[k], n);
            out[3 + k] = re;
            out[6 + k] = im;
        }
    }
    Ok(out)
}

/// Reference feature of a grid vertex: clean pose encoding, zero noise level.
pub fn reference_features(q: &UnitQuaternion, sym: &SymmetrySpec) -> Result<[f64; FEATURE_DIM]> {
    let p = pose_features(q, sym)?;
    let mut out = [0.0; FEATURE_DIM];
    out[..POSE_FEATURE_DIM].copy_from_slice(&p);
    Ok(out)
}
