//! Factored 3D scene representation: an amodal layout plus a set of objects,
//! each described by a canonical voxel shape and a pose (scale, rotation,
//! translation). Includes converters to depth maps, point clouds and scene
//! voxels, the component and detection metrics, training-loss kernels with
//! finite-difference verification, rotation binning, and a deterministic
//! synthetic scene generator.

pub mod bins;
pub mod compare;
pub mod detection;
pub mod error;
pub mod geometry;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod registration;
pub mod render;
pub mod reports;
pub mod scene;
pub mod voxel;

pub use error::{Error, Result};
