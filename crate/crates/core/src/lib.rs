//! Estimating, training and evaluating probability distributions over 3D
//! orientations.
//!
//! Orientations are unit quaternions with `q ≡ -q`. Densities are reported
//! over the space of unique rotations (a half 3-sphere of area π²), so the
//! uniform density is `1/π²` everywhere.

pub mod bingham;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod grid;
pub mod histogram;
pub mod learners;
pub mod quat;
pub mod special;
pub mod symmetry;

pub use error::{Error, Result};
pub use grid::S3Grid;
pub use quat::{AxisAnglePoint, UnitQuaternion};
