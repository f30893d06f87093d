//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by registration, sampling, and optimization routines.
#[derive(Debug, Error)]
pub enum Error {
    /// Rotation angle at or beyond the logarithm's domain boundary (pi).
    #[error("rotation angle {angle} rad is too close to pi for a unique logarithm")]
    AngleAtBoundary { angle: f64 },

    /// Not enough points to estimate per-point covariances.
    #[error("covariance estimation needs at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    /// An operation received an empty point cloud.
    #[error("point cloud is empty")]
    EmptyCloud,

    /// The combined covariance of a point pair could not be factorized.
    #[error("information matrix factorization failed for point pair")]
    SingularInformationMatrix,

    /// No source point found a target neighbor within the correspondence radius.
    #[error("no valid correspondences between the clouds at this pose")]
    NoValidCorrespondences,

    /// The null-space search of the coreset elimination failed to make progress.
    #[error("coreset elimination hit a numerically degenerate configuration")]
    NumericalDegeneracy,

    /// Voxel size must be strictly positive.
    #[error("invalid voxel resolution {0}; must be > 0")]
    InvalidResolution(f64),

    /// Overlap evaluation received an empty source set.
    #[error("overlap source point set is empty")]
    EmptySource,

    /// The damped normal equations stayed rank-deficient.
    #[error("normal equations are singular even after damping")]
    SingularSystem,

    /// A matrix that must be invertible was not.
    #[error("matrix is singular")]
    SingularMatrix,

    /// Trajectories to compare have different lengths or timestamps.
    #[error("trajectory length mismatch: {expected} vs {got}")]
    LengthMismatch { expected: usize, got: usize },

    /// A global graph needs at least two submaps.
    #[error("global graph construction needs at least 2 submaps, got {0}")]
    TooFewSubmaps(usize),

    /// Underlying I/O failure.
    #[error(transparent)]
    Io(#[from] std::io::Error),

    /// Malformed input file (PLY, trajectory, or config).
    #[error("parse error: {0}")]
    Parse(String),
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
