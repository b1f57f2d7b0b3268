//! Nonlocal micromagnetic energies on balls: kernels, voxel meshes,
//! unit-vector fields, magnetostatics, energy minimization and regime
//! classification.

pub mod error;
pub mod fields;
pub mod geometry;
pub mod energies;
pub mod kernels;
pub mod magnetostatics;
pub mod minimize;
pub mod quadrature;
pub mod regimes;

pub type Vec3 = nalgebra::Vector3<f64>;

pub use error::{Error, Result};
