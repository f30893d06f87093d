//! Comparison metrics between quadratic factors and between trajectories.

use nalgebra::{Cholesky, Matrix3, Matrix6, Vector3, Vector6};

use crate::error::{Error, Result};
use crate::gicp::QuadraticFactor;
use crate::se3::Pose;

/// KL divergence between the zero-mean Gaussians whose information matrices
/// are `h_ref` and `h_test`:
/// `KL(N(0, h_ref^-1) || N(0, h_test^-1))
///   = 1/2 (tr(h_test h_ref^-1) - 6 + ln det h_ref - ln det h_test)`.
///
/// Non-negative, zero iff the matrices are equal. Log-determinants come
/// from the Cholesky factors, so neither matrix is inverted explicitly.
pub fn kld_gaussian(h_ref: &Matrix6<f64>, h_test: &Matrix6<f64>) -> Result<f64> {
    let chol_ref = Cholesky::new(*h_ref).ok_or(Error::SingularMatrix)?;
    let chol_test = Cholesky::new(*h_test).ok_or(Error::SingularMatrix)?;
    let log_det = |c: &Cholesky<f64, nalgebra::U6>| {
        2.0 * c.l_dirty().diagonal().iter().map(|x| x.ln()).sum::<f64>()
    };
    let trace = chol_ref.solve(h_test).trace();
    Ok(0.5 * (trace - 6.0 + log_det(&chol_ref) - log_det(&chol_test)))
}

/// Difference between the mean vectors `mu = H^-1 b` of two factors, split
/// into translation (meters) and rotation (degrees) block norms.
pub fn mean_vector_error(
    factor_ref: &QuadraticFactor,
    factor_test: &QuadraticFactor,
) -> Result<(f64, f64)> {
    let mu = |f: &QuadraticFactor| -> Result<Vector6<f64>> {
        Cholesky::new(f.h)
            .map(|c| c.solve(&f.b))
            .ok_or(Error::SingularMatrix)
    };
    let delta = mu(factor_ref)? - mu(factor_test)?;
    let trans = delta.fixed_rows::<3>(0).norm();
    let rot = delta.fixed_rows::<3>(3).norm().to_degrees();
    Ok((trans, rot))
}

/// Best rigid alignment (rotation + translation, no scale) mapping the
/// `from` points onto the `to` points in the least-squares sense.
pub fn align_rigid(from: &[Vector3<f64>], to: &[Vector3<f64>]) -> Result<Pose> {
    if from.len() != to.len() {
        return Err(Error::LengthMismatch {
            expected: from.len(),
            got: to.len(),
        });
    }
    if from.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let n = from.len() as f64;
    let cf = from.iter().sum::<Vector3<f64>>() / n;
    let ct = to.iter().sum::<Vector3<f64>>() / n;
    let mut cross = Matrix3::zeros();
    for (f, t) in from.iter().zip(to.iter()) {
        cross += (t - ct) * (f - cf).transpose();
    }
    let svd = cross.svd(true, true);
    let u = svd.u.ok_or(Error::NumericalDegeneracy)?;
    let vt = svd.v_t.ok_or(Error::NumericalDegeneracy)?;
    // Reflection guard keeps the result in SO(3).
    let mut s = Matrix3::identity();
    if (u * vt).determinant() < 0.0 {
        s[(2, 2)] = -1.0;
    }
    let rotation = u * s * vt;
    Ok(Pose::new(rotation, ct - rotation * cf))
}

/// Root-mean-square translation error between two equally long pose
/// sequences, after rigidly aligning the estimate to the truth.
pub fn ate(estimate: &[Pose], truth: &[Pose]) -> Result<f64> {
    if estimate.len() != truth.len() {
        return Err(Error::LengthMismatch {
            expected: truth.len(),
            got: estimate.len(),
        });
    }
    let est: Vec<Vector3<f64>> = estimate.iter().map(|p| p.translation).collect();
    let tru: Vec<Vector3<f64>> = truth.iter().map(|p| p.translation).collect();
    let align = align_rigid(&est, &tru)?;
    let sum_sq: f64 = est
        .iter()
        .zip(tru.iter())
        .map(|(e, t)| (align.transform_point(e) - t).norm_squared())
        .sum();
    Ok((sum_sq / est.len() as f64).sqrt())
}
