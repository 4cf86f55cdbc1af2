//! Crate-wide error type.
//!
//! Geometry and fitting failures are reported as typed variants so callers
//! (and the CLI exit-code mapping) can distinguish bad inputs from numeric
//! breakdown during optimization.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid argument to a library call (counts, ranges, shapes).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Curve parameter outside its domain.
    #[error("parameter t={0} outside [0, 1]")]
    Domain(f64),

    /// Consecutive centerline samples coincide; tangents are undefined.
    #[error("degenerate centerline: {0}")]
    DegenerateCenterline(String),

    /// Frame propagation collapsed (tangent became parallel to a frame vector).
    #[error("frame degeneracy at sample {index}: |cross| = {norm:.3e}")]
    FrameDegeneracy { index: usize, norm: f64 },

    /// Mesh construction produced or received unusable geometry.
    #[error("degenerate face: {0}")]
    DegenerateFace(String),

    /// Mesh connectivity violates the closed-surface contract.
    #[error("mesh topology: {0}")]
    Topology(String),

    /// Plane/mesh intersection produced a graph that is not a union of cycles.
    #[error("malformed slice at {axis}={coord}: {detail}")]
    MalformedSlice {
        axis: &'static str,
        coord: f64,
        detail: String,
    },

    /// A slice plane passes through geometry in a way perturbation cannot fix.
    #[error("degenerate slice at {axis}={coord}: {detail}")]
    DegenerateSlice {
        axis: &'static str,
        coord: f64,
        detail: String,
    },

    /// NaN or Inf appeared during a forward or backward pass.
    #[error("numeric failure in {stage}: {detail}")]
    NumericFailure { stage: &'static str, detail: String },

    /// Optimization loss exploded past the divergence guard.
    #[error("divergence in stage {stage} at iteration {iteration}: loss {loss:.6e} exceeds 10x initial {initial:.6e}")]
    Divergence {
        stage: usize,
        iteration: usize,
        loss: f64,
        initial: f64,
    },

    /// Geometry falls outside the voxel grid it must be rasterized into.
    #[error("out of bounds: {0}")]
    OutOfBounds(String),

    /// Synthetic case generation could not satisfy its own constraints.
    #[error("generation failed: {0}")]
    Generation(String),

    /// Fit inputs that fail validation (too few points, empty segmentation, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// On-disk data violates a format contract.
    #[error("format error: {0}")]
    Format(String),

    /// Text parse failure with a 1-based line number.
    #[error("parse error at line {line}: {detail}")]
    Parse { line: usize, detail: String },

    /// Two grids that must have identical shape do not.
    #[error("shape mismatch: {a:?} vs {b:?}")]
    ShapeMismatch { a: [usize; 3], b: [usize; 3] },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the optimization itself (as opposed to bad inputs).
    /// The CLI maps these to a distinct exit code.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Divergence { .. } | Error::NumericFailure { .. }
        )
    }
}
