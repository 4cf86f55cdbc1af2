//! Parametric vessel-shape model fitted to binary segmentations.
//!
//! A vessel is described by three cubic B-splines — a 3D centerline, a scalar
//! radius profile, and per-direction radial adjustments for non-circular
//! cross-sections. The pipeline turns parameters into a watertight triangle
//! mesh ([`mesh`]), the mesh into a soft voxel grid via slice-wise plane
//! intersection ([`voxelizer`]), and compares that grid against a reference
//! segmentation with a soft Dice loss ([`losses`]). Every step is
//! differentiable ([`autodiff`]), so [`fit`] can run staged gradient descent
//! from a rough preliminary centerline down to sub-voxel agreement.
//!
//! Supporting modules: [`sdf`] holds the exact (non-differentiable) signed
//! distance oracle used for hard rasterization and for validating the
//! voxelizer, [`metrics`] the evaluation measures, [`synth`] deterministic
//! synthetic test cases, and [`io`] the on-disk formats (NRRD volumes, OBJ
//! meshes, JSON parameter files, plain-text polylines).

pub mod autodiff;
pub mod bspline;
pub mod error;
pub mod fit;
pub mod frames;
pub mod gradcheck;
pub mod grid;
pub mod io;
pub mod losses;
pub mod mesh;
pub mod metrics;
pub mod optim;
pub mod sdf;
pub mod synth;
pub mod vec3;
pub mod voxelizer;

pub use autodiff::{ParamGradient, Real, Tape, Var};
pub use error::Error;
pub use fit::{FitConfig, FitInputs, FitReport, GenericParams, StageConfig, VesselParams};
pub use grid::{SliceMask, SoftVolume, VoxelGrid};
pub use mesh::TriangleMesh;
pub use vec3::Vec3;
pub use voxelizer::{Axis, SoftVoxelization};

/// Shorthand used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
