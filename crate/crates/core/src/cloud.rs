//! Point clouds as collections of local Gaussians.
//!
//! Each point carries a covariance estimated from its neighborhood, in the
//! usual distribution-to-distribution registration style: the scatter of the
//! k nearest neighbors, eigenvalue-flattened so every point behaves like a
//! locally planar patch.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::kdtree::KdTree;

/// Floor applied to the smallest covariance eigenvalue, as a fraction of the
/// largest. Bounds the condition number by 1/EPS_PLANE.
pub const EPS_PLANE: f64 = 1e-3;

/// Neighborhood size used for covariance estimation.
pub const DEFAULT_K: usize = 10;

/// Points modeled as Gaussians (mean + covariance) plus an exact
/// nearest-neighbor index over the means.
#[derive(Debug, Clone)]
pub struct GaussianCloud {
    pub means: Vec<Vector3<f64>>,
    pub covariances: Vec<Matrix3<f64>>,
    nn_index: KdTree,
}

impl GaussianCloud {
    /// Bundle precomputed means and covariances; builds the index.
    pub fn new(means: Vec<Vector3<f64>>, covariances: Vec<Matrix3<f64>>) -> Result<Self> {
        if means.len() != covariances.len() {
            return Err(Error::LengthMismatch {
                expected: means.len(),
                got: covariances.len(),
            });
        }
        let nn_index = KdTree::build(&means);
        Ok(GaussianCloud {
            means,
            covariances,
            nn_index,
        })
    }

    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    pub fn nn_index(&self) -> &KdTree {
        &self.nn_index
    }
}

/// Estimate per-point covariances from the scatter of each point's k nearest
/// neighbors (the point itself included), then regularize eigenvalues to
/// `(EPS_PLANE, 1, 1) * largest`. Zero scatter (coincident neighbors) is
/// given unit scale so the result stays PSD with bounded conditioning.
pub fn estimate_covariances(points: &[Vector3<f64>], k: usize) -> Result<GaussianCloud> {
    if points.len() < k {
        return Err(Error::TooFewPoints {
            needed: k,
            got: points.len(),
        });
    }
    let tree = KdTree::build(points);
    let mut covariances = Vec::with_capacity(points.len());
    for p in points {
        let neighbors = tree.knn(p, k);
        let mut mean = Vector3::zeros();
        for n in &neighbors {
            mean += points[n.index];
        }
        mean /= neighbors.len() as f64;
        let mut scatter = Matrix3::zeros();
        for n in &neighbors {
            let d = points[n.index] - mean;
            scatter += d * d.transpose();
        }
        scatter /= neighbors.len() as f64;
        covariances.push(regularize_covariance(&scatter));
    }
    GaussianCloud::new(points.to_vec(), covariances)
}

/// Replace the eigenvalues of a symmetric PSD matrix with
/// `(EPS_PLANE, 1, 1) * largest`, keeping the eigenvectors. A largest
/// eigenvalue at numerical zero is clamped to 1.
pub fn regularize_covariance(scatter: &Matrix3<f64>) -> Matrix3<f64> {
    let eig = scatter.symmetric_eigen();
    // Sort eigenpairs ascending so the flattened direction is explicit.
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let mut scale = eig.eigenvalues[idx[2]];
    if scale <= 1e-12 {
        scale = 1.0;
    }
    let values = [EPS_PLANE * scale, scale, scale];
    let mut out = Matrix3::zeros();
    for (rank, &i) in idx.iter().enumerate() {
        let v = eig.eigenvectors.column(i);
        out += v * v.transpose() * values[rank];
    }
    // Symmetrize away accumulation round-off.
    (out + out.transpose()) * 0.5
}
