//! Distribution-to-distribution registration residuals and their
//! linearization into quadratic factors.
//!
//! Each correspondence contributes a whitened residual `e = L^-1 d` where
//! `d = mu' - T*mu` and `L L^T = Sigma' + R Sigma R^T`. Summing the per-point
//! terms gives the quadratic model `f(dx) ~ dx^T H dx + 2 b^T dx + c` of the
//! alignment cost around the linearization pose, with `H = J^T J`,
//! `b = J^T e`, `c = e^T e` over the stacked residuals.

use nalgebra::{Cholesky, Matrix3, Matrix3x6, Matrix6, Vector3, Vector6};

use crate::cloud::GaussianCloud;
use crate::error::{Error, Result};
use crate::se3::{skew, Pose, Twist};

/// Default nearest-neighbor gating distance in meters.
pub const DEFAULT_MAX_CORR_DIST: f64 = 2.0;

/// Pairing of one moving-cloud point with its nearest fixed-cloud point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Correspondence {
    pub source_index: usize,
    pub target_index: usize,
    /// False when the nearest neighbor lies beyond the gating distance.
    pub valid: bool,
}

/// One point's whitened residual and its Jacobian w.r.t. a right
/// perturbation of the pose.
#[derive(Debug, Clone, Copy)]
pub struct PointLinearization {
    pub residual: Vector3<f64>,
    pub jacobian: Matrix3x6<f64>,
    pub source_index: usize,
}

impl PointLinearization {
    /// This point's contribution to `H`.
    pub fn h(&self) -> Matrix6<f64> {
        self.jacobian.transpose() * self.jacobian
    }

    /// This point's contribution to `b`.
    pub fn b(&self) -> Vector6<f64> {
        self.jacobian.transpose() * self.residual
    }

    /// This point's contribution to `c`.
    pub fn c(&self) -> f64 {
        self.residual.norm_squared()
    }
}

/// Quadratic model of the alignment cost around `linearization_pose`:
/// `f(dx) = dx^T H dx + 2 b^T dx + c` for the pose `linearization_pose * exp(dx)`.
#[derive(Debug, Clone)]
pub struct QuadraticFactor {
    pub h: Matrix6<f64>,
    pub b: Vector6<f64>,
    pub c: f64,
    pub linearization_pose: Pose,
    pub point_count: usize,
}

impl QuadraticFactor {
    pub fn zero(pose: Pose) -> Self {
        QuadraticFactor {
            h: Matrix6::zeros(),
            b: Vector6::zeros(),
            c: 0.0,
            linearization_pose: pose,
            point_count: 0,
        }
    }

    /// Accumulate one weighted point term.
    pub fn add_weighted(&mut self, pl: &PointLinearization, weight: f64) {
        self.h += pl.h() * weight;
        self.b += pl.b() * weight;
        self.c += pl.c() * weight;
    }

    /// Evaluate the quadratic at a tangent perturbation.
    pub fn evaluate(&self, dx: &Twist) -> f64 {
        let v = dx.as_vector();
        (v.transpose() * self.h * v)[(0, 0)] + 2.0 * self.b.dot(&v) + self.c
    }

    /// Unit-weight Gauss-Newton step `-H^-1 b`.
    pub fn gauss_newton_step(&self) -> Result<Twist> {
        let chol = Cholesky::new(self.h).ok_or(Error::SingularSystem)?;
        Ok(Twist::from_vector(&(-chol.solve(&self.b))))
    }

    /// Re-express the same (frozen) quadratic around `new_pose`: with
    /// `dx0 = log(pose^-1 new_pose)`, shift `b' = b + H dx0` and
    /// `c' = f(dx0)` while `H` stays fixed. First-order in `dx0`, exact
    /// at `dx0 = 0`.
    pub fn reanchor(&self, new_pose: &Pose) -> Result<QuadraticFactor> {
        let dx0 = self
            .linearization_pose
            .inverse()
            .compose(new_pose)
            .log()?;
        let v = dx0.as_vector();
        Ok(QuadraticFactor {
            h: self.h,
            b: self.b + self.h * v,
            c: self.evaluate(&dx0),
            linearization_pose: *new_pose,
            point_count: self.point_count,
        })
    }
}

/// Per-point linearizations cached at a pose, alongside the correspondences
/// that produced them. Summing `entries` reproduces the factor emitted with
/// the bank.
#[derive(Debug, Clone)]
pub struct ResidualBank {
    pub entries: Vec<PointLinearization>,
    pub correspondences: Vec<Correspondence>,
    pub pose: Pose,
}

/// Match every source mean to its exact nearest target mean under `pose`.
/// Entries beyond `max_corr_dist` are kept but flagged invalid.
pub fn find_correspondences(
    source: &GaussianCloud,
    target: &GaussianCloud,
    pose: &Pose,
    max_corr_dist: f64,
) -> Result<Vec<Correspondence>> {
    if source.is_empty() || target.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let gate_sq = max_corr_dist * max_corr_dist;
    let mut out = Vec::with_capacity(source.len());
    for (i, mean) in source.means.iter().enumerate() {
        let q = pose.transform_point(mean);
        let nn = target.nn_index().nearest(&q).expect("non-empty target");
        out.push(Correspondence {
            source_index: i,
            target_index: nn.index,
            valid: nn.dist_sq <= gate_sq,
        });
    }
    Ok(out)
}

/// Linearize a single source/target Gaussian pair at `pose`.
///
/// The whitener `L^-1` (from `L L^T = Sigma' + R Sigma R^T`) is recomputed
/// here but held fixed when forming the Jacobian, so
/// `J = L^-1 [-R | R [mu]_x]`.
pub fn linearize_point(
    target_pt: (&Vector3<f64>, &Matrix3<f64>),
    source_pt: (&Vector3<f64>, &Matrix3<f64>),
    pose: &Pose,
    source_index: usize,
) -> Result<PointLinearization> {
    let r = &pose.rotation;
    let m = target_pt.1 + r * source_pt.1 * r.transpose();
    let chol = Cholesky::new(m).ok_or(Error::SingularInformationMatrix)?;
    let l = chol.l();

    let d = target_pt.0 - pose.transform_point(source_pt.0);
    let residual = l
        .solve_lower_triangular(&d)
        .ok_or(Error::SingularInformationMatrix)?;

    let mut dd_dx = Matrix3x6::zeros();
    dd_dx.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-r));
    dd_dx
        .fixed_view_mut::<3, 3>(0, 3)
        .copy_from(&(r * skew(source_pt.0)));
    let jacobian = l
        .solve_lower_triangular(&dd_dx)
        .ok_or(Error::SingularInformationMatrix)?;

    Ok(PointLinearization {
        residual,
        jacobian,
        source_index,
    })
}

/// Linearize every valid correspondence at `pose` and accumulate the
/// quadratic factor, returning the per-point terms alongside it.
pub fn linearize_full(
    source: &GaussianCloud,
    target: &GaussianCloud,
    pose: &Pose,
    max_corr_dist: f64,
) -> Result<(QuadraticFactor, ResidualBank)> {
    let correspondences = find_correspondences(source, target, pose, max_corr_dist)?;
    let mut factor = QuadraticFactor::zero(*pose);
    let mut entries = Vec::new();
    for corr in correspondences.iter().filter(|c| c.valid) {
        let pl = linearize_point(
            (
                &target.means[corr.target_index],
                &target.covariances[corr.target_index],
            ),
            (
                &source.means[corr.source_index],
                &source.covariances[corr.source_index],
            ),
            pose,
            corr.source_index,
        )?;
        factor.add_weighted(&pl, 1.0);
        entries.push(pl);
    }
    if entries.is_empty() {
        return Err(Error::NoValidCorrespondences);
    }
    factor.point_count = entries.len();
    Ok((
        factor,
        ResidualBank {
            entries,
            correspondences,
            pose: *pose,
        },
    ))
}

/// Total whitened cost at `pose`: sum of `||e_k||^2` over valid
/// correspondences. Equals the `c` field of [`linearize_full`] at the same
/// pose.
pub fn evaluate_cost(
    source: &GaussianCloud,
    target: &GaussianCloud,
    pose: &Pose,
    max_corr_dist: f64,
) -> Result<f64> {
    let correspondences = find_correspondences(source, target, pose, max_corr_dist)?;
    let mut cost = 0.0;
    let mut any = false;
    for corr in correspondences.iter().filter(|c| c.valid) {
        let r = &pose.rotation;
        let m = target.covariances[corr.target_index]
            + r * source.covariances[corr.source_index] * r.transpose();
        let chol = Cholesky::new(m).ok_or(Error::SingularInformationMatrix)?;
        let d = target.means[corr.target_index]
            - pose.transform_point(&source.means[corr.source_index]);
        // ||L^-1 d||^2 = d^T M^-1 d.
        cost += d.dot(&chol.solve(&d));
        any = true;
    }
    if !any {
        return Err(Error::NoValidCorrespondences);
    }
    Ok(cost)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::cloud::estimate_covariances;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_box_points(
        rng: &mut impl Rng,
        n: usize,
        scale: f64,
    ) -> Vec<Vector3<f64>> {
        (0..n)
            .map(|_| {
                Vector3::new(
                    rng.random::<f64>() * scale,
                    rng.random::<f64>() * scale,
                    rng.random::<f64>() * scale,
                )
            })
            .collect()
    }

    /// A cloud pair related by `pose` with additive noise: target is the
    /// transformed source plus jitter, so registration should recover
    /// `pose`.
    pub(crate) fn synthetic_pair(
        rng: &mut impl Rng,
        n: usize,
        pose: &Pose,
        noise: f64,
    ) -> (GaussianCloud, GaussianCloud) {
        let source_pts = random_box_points(rng, n, 10.0);
        let target_pts: Vec<Vector3<f64>> = source_pts
            .iter()
            .map(|p| {
                pose.transform_point(p)
                    + Vector3::new(
                        (rng.random::<f64>() - 0.5) * noise,
                        (rng.random::<f64>() - 0.5) * noise,
                        (rng.random::<f64>() - 0.5) * noise,
                    )
            })
            .collect();
        (
            estimate_covariances(&source_pts, 10).unwrap(),
            estimate_covariances(&target_pts, 10).unwrap(),
        )
    }

    pub(crate) fn random_pose(rng: &mut impl Rng, trans: f64, angle: f64) -> Pose {
        let unit = |rng: &mut dyn RngCore| {
            Vector3::new(
                rng.random::<f64>() * 2.0 - 1.0,
                rng.random::<f64>() * 2.0 - 1.0,
                rng.random::<f64>() * 2.0 - 1.0,
            )
            .normalize()
        };
        Pose::exp(&Twist::new(unit(rng) * trans, unit(rng) * angle))
    }

    fn random_spd(rng: &mut impl Rng) -> Matrix3<f64> {
        let a = Matrix3::from_fn(|_, _| rng.random::<f64>() * 2.0 - 1.0);
        a * a.transpose() + Matrix3::identity() * 0.1
    }

    #[test]
    fn self_correspondence_at_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let cloud = estimate_covariances(&random_box_points(&mut rng, 50, 5.0), 10).unwrap();
        let corrs =
            find_correspondences(&cloud, &cloud, &Pose::identity(), DEFAULT_MAX_CORR_DIST)
                .unwrap();
        for (i, c) in corrs.iter().enumerate() {
            assert!(c.valid);
            assert_eq!(c.source_index, i);
            assert_eq!(c.target_index, i);
        }
    }

    #[test]
    fn far_translation_invalidates_everything() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let cloud = estimate_covariances(&random_box_points(&mut rng, 30, 2.0), 10).unwrap();
        let far = Pose::from_translation(Vector3::new(10.0 * DEFAULT_MAX_CORR_DIST + 2.0, 0.0, 0.0));
        let corrs = find_correspondences(&cloud, &cloud, &far, DEFAULT_MAX_CORR_DIST).unwrap();
        assert!(corrs.iter().all(|c| !c.valid));
        assert!(matches!(
            linearize_full(&cloud, &cloud, &far, DEFAULT_MAX_CORR_DIST),
            Err(Error::NoValidCorrespondences)
        ));
    }

    #[test]
    fn correspondences_match_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let source =
            estimate_covariances(&random_box_points(&mut rng, 200, 6.0), 10).unwrap();
        let target =
            estimate_covariances(&random_box_points(&mut rng, 200, 6.0), 10).unwrap();
        let pose = random_pose(&mut rng, 0.5, 0.3);
        let corrs = find_correspondences(&source, &target, &pose, 1.0).unwrap();
        for c in &corrs {
            let q = pose.transform_point(&source.means[c.source_index]);
            let mut best = (usize::MAX, f64::INFINITY);
            for (j, t) in target.means.iter().enumerate() {
                let d = (t - q).norm_squared();
                if d < best.1 {
                    best = (j, d);
                }
            }
            assert_eq!(c.target_index, best.0);
            assert_eq!(c.valid, best.1 <= 1.0);
        }
    }

    #[test]
    fn empty_cloud_is_an_error() {
        let empty = GaussianCloud::new(vec![], vec![]).unwrap();
        assert!(matches!(
            find_correspondences(&empty, &empty, &Pose::identity(), 1.0),
            Err(Error::EmptyCloud)
        ));
    }

    #[test]
    fn zero_residual_when_target_is_transformed_source() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let pose = random_pose(&mut rng, 1.0, 0.7);
        let mu = Vector3::new(0.3, -1.2, 2.0);
        let mu_t = pose.transform_point(&mu);
        let pl = linearize_point(
            (&mu_t, &random_spd(&mut rng)),
            (&mu, &random_spd(&mut rng)),
            &pose,
            0,
        )
        .unwrap();
        assert!(pl.residual.norm() <= 1e-12);
        assert!(pl.c() <= 1e-24);
    }

    #[test]
    fn identity_whitening_with_half_identity_covariances() {
        let half = Matrix3::identity() * 0.5;
        let mu = Vector3::new(1.0, 2.0, 3.0);
        let mu_t = Vector3::new(1.5, 1.0, 3.25);
        let pl = linearize_point((&mu_t, &half), (&mu, &half), &Pose::identity(), 0).unwrap();
        // M = I, so e = d exactly.
        assert_relative_eq!(pl.residual, mu_t - mu, epsilon = 1e-14);
        // And J = [-I | [mu]_x].
        let mut expected = Matrix3x6::zeros();
        expected
            .fixed_view_mut::<3, 3>(0, 0)
            .copy_from(&(-Matrix3::identity()));
        expected.fixed_view_mut::<3, 3>(0, 3).copy_from(&skew(&mu));
        assert_relative_eq!(pl.jacobian, expected, epsilon = 1e-14);
    }

    #[test]
    fn whitened_norm_matches_mahalanobis_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(59);
        for _ in 0..100 {
            let pose = random_pose(&mut rng, 1.0, 0.8);
            let mu = Vector3::from_fn(|_, _| rng.random::<f64>() * 4.0 - 2.0);
            let mu_t = Vector3::from_fn(|_, _| rng.random::<f64>() * 4.0 - 2.0);
            let cov = random_spd(&mut rng);
            let cov_t = random_spd(&mut rng);
            let pl = linearize_point((&mu_t, &cov_t), (&mu, &cov), &pose, 0).unwrap();

            let r = pose.rotation;
            let m = cov_t + r * cov * r.transpose();
            let d = mu_t - pose.transform_point(&mu);
            let oracle = d.dot(&(m.try_inverse().unwrap() * d));
            assert_relative_eq!(pl.c(), oracle, max_relative = 1e-10);
        }
    }

    #[test]
    fn jacobian_matches_central_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let h = 1e-6;
        for _ in 0..50 {
            let pose = random_pose(&mut rng, 1.0, 0.8);
            let mu = Vector3::from_fn(|_, _| rng.random::<f64>() * 4.0 - 2.0);
            let mu_t = Vector3::from_fn(|_, _| rng.random::<f64>() * 4.0 - 2.0);
            let cov = random_spd(&mut rng);
            let cov_t = random_spd(&mut rng);
            let pl = linearize_point((&mu_t, &cov_t), (&mu, &cov), &pose, 0).unwrap();

            // Freeze the whitener at the linearization pose, as the
            // Jacobian convention demands.
            let m = cov_t + pose.rotation * cov * pose.rotation.transpose();
            let l = Cholesky::new(m).unwrap().l();
            let residual_at = |dx: &Twist| {
                let p = pose.boxplus(dx);
                let d = mu_t - p.transform_point(&mu);
                l.solve_lower_triangular(&d).unwrap()
            };
            for col in 0..6 {
                let mut plus = Vector6::zeros();
                plus[col] = h;
                let mut minus = Vector6::zeros();
                minus[col] = -h;
                let fd = (residual_at(&Twist::from_vector(&plus))
                    - residual_at(&Twist::from_vector(&minus)))
                    / (2.0 * h);
                let jc = pl.jacobian.column(col);
                let scale = jc.norm().max(1.0);
                assert!(
                    (fd - jc).norm() <= 1e-5 * scale,
                    "column {col}: fd {fd:?} vs J {jc:?}"
                );
            }
        }
    }

    #[test]
    fn perfect_alignment_gives_zero_factor() {
        let mut rng = ChaCha8Rng::seed_from_u64(67);
        let cloud = estimate_covariances(&random_box_points(&mut rng, 40, 5.0), 10).unwrap();
        let (factor, bank) =
            linearize_full(&cloud, &cloud, &Pose::identity(), DEFAULT_MAX_CORR_DIST).unwrap();
        assert!(factor.c <= 1e-20);
        assert!(factor.b.norm() <= 1e-12);
        assert_eq!(factor.point_count, 40);
        assert_eq!(bank.entries.len(), 40);
    }

    #[test]
    fn single_point_factor_is_jtj() {
        let mu = Vector3::new(0.2, 0.4, 0.6);
        let mu_t = Vector3::new(0.3, 0.3, 0.7);
        let cov = Matrix3::identity() * 0.5;
        let source = GaussianCloud::new(vec![mu], vec![cov]).unwrap();
        let target = GaussianCloud::new(vec![mu_t], vec![cov]).unwrap();
        let (factor, bank) = linearize_full(&source, &target, &Pose::identity(), 2.0).unwrap();
        let pl = &bank.entries[0];
        assert_relative_eq!(factor.h, pl.h(), epsilon = 1e-15);
        assert_relative_eq!(factor.b, pl.b(), epsilon = 1e-15);
        assert_relative_eq!(factor.c, pl.c(), epsilon = 1e-15);
    }

    #[test]
    fn factor_equals_direct_sum_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        let pose_true = random_pose(&mut rng, 0.4, 0.2);
        let (source, target) = synthetic_pair(&mut rng, 500, &pose_true, 0.05);
        let pose = pose_true.boxplus(&Twist::new(
            Vector3::new(0.05, -0.03, 0.02),
            Vector3::new(0.01, 0.02, -0.01),
        ));
        let (factor, bank) = linearize_full(&source, &target, &pose, 2.0).unwrap();

        let mut h = Matrix6::zeros();
        let mut b = Vector6::zeros();
        let mut c = 0.0;
        for pl in &bank.entries {
            h += pl.jacobian.transpose() * pl.jacobian;
            b += pl.jacobian.transpose() * pl.residual;
            c += pl.residual.norm_squared();
        }
        assert_relative_eq!(factor.h, h, max_relative = 1e-12);
        assert_relative_eq!(factor.b, b, max_relative = 1e-12);
        assert_relative_eq!(factor.c, c, max_relative = 1e-12);

        // Factor invariants.
        assert!((factor.h - factor.h.transpose()).norm() <= 1e-12);
        let min_eig = factor
            .h
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        assert!(min_eig >= -1e-9 * factor.h.trace());
        assert!(factor.c >= 0.0);
    }

    #[test]
    fn h_equals_stacked_jacobian_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(73);
        let pose_true = random_pose(&mut rng, 0.3, 0.2);
        let (source, target) = synthetic_pair(&mut rng, 80, &pose_true, 0.05);
        let (factor, bank) = linearize_full(&source, &target, &pose_true, 2.0).unwrap();
        let n = bank.entries.len();
        let mut stacked = nalgebra::DMatrix::<f64>::zeros(3 * n, 6);
        for (i, pl) in bank.entries.iter().enumerate() {
            stacked.view_mut((3 * i, 0), (3, 6)).copy_from(&pl.jacobian);
        }
        let product = stacked.transpose() * &stacked;
        for r in 0..6 {
            for cidx in 0..6 {
                assert_relative_eq!(
                    factor.h[(r, cidx)],
                    product[(r, cidx)],
                    max_relative = 1e-12,
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn cost_matches_factor_c_on_random_configurations() {
        let mut rng = ChaCha8Rng::seed_from_u64(79);
        for _ in 0..100 {
            let pose_true = random_pose(&mut rng, 0.3, 0.2);
            let (source, target) = synthetic_pair(&mut rng, 30, &pose_true, 0.1);
            let probe = pose_true.boxplus(&Twist::new(
                Vector3::from_fn(|_, _| (rng.random::<f64>() - 0.5) * 0.2),
                Vector3::from_fn(|_, _| (rng.random::<f64>() - 0.5) * 0.1),
            ));
            let cost = evaluate_cost(&source, &target, &probe, 2.0).unwrap();
            let (factor, _) = linearize_full(&source, &target, &probe, 2.0).unwrap();
            assert_relative_eq!(cost, factor.c, max_relative = 1e-10, epsilon = 1e-12);
        }
    }

    #[test]
    fn identical_clouds_cost_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(83);
        let cloud = estimate_covariances(&random_box_points(&mut rng, 30, 4.0), 10).unwrap();
        let cost = evaluate_cost(&cloud, &cloud, &Pose::identity(), 2.0).unwrap();
        assert!(cost <= 1e-20);
    }

    #[test]
    fn gauss_newton_step_decreases_cost() {
        let mut rng = ChaCha8Rng::seed_from_u64(89);
        let pose_true = random_pose(&mut rng, 0.5, 0.3);
        let (source, target) = synthetic_pair(&mut rng, 400, &pose_true, 0.02);
        let start = pose_true.boxplus(&Twist::new(
            Vector3::new(0.2, 0.0, 0.0),
            Vector3::zeros(),
        ));
        let cost0 = evaluate_cost(&source, &target, &start, 2.0).unwrap();
        let (factor, _) = linearize_full(&source, &target, &start, 2.0).unwrap();
        let step = factor.gauss_newton_step().unwrap();
        let cost1 = evaluate_cost(&source, &target, &start.boxplus(&step), 2.0).unwrap();
        assert!(
            cost1 <= cost0,
            "Gauss-Newton step increased cost: {cost0} -> {cost1}"
        );
    }

    #[test]
    fn reanchor_preserves_value_at_matching_perturbations() {
        let mut rng = ChaCha8Rng::seed_from_u64(97);
        let pose_true = random_pose(&mut rng, 0.3, 0.2);
        let (source, target) = synthetic_pair(&mut rng, 100, &pose_true, 0.05);
        let (factor, _) = linearize_full(&source, &target, &pose_true, 2.0).unwrap();

        let dx0 = Twist::new(Vector3::new(0.05, -0.02, 0.03), Vector3::zeros());
        let new_pose = pose_true.boxplus(&dx0);
        let shifted = factor.reanchor(&new_pose).unwrap();
        // For pure-translation shifts composition is additive, so values
        // must agree exactly: f(dx0 + d) = f'(d).
        let probe = Twist::new(Vector3::new(0.01, 0.01, -0.02), Vector3::zeros());
        let combined = Twist::new(dx0.rho + probe.rho, Vector3::zeros());
        assert_relative_eq!(
            factor.evaluate(&combined),
            shifted.evaluate(&probe),
            max_relative = 1e-9
        );
        // H is frozen; b shifts by H dx0.
        assert_relative_eq!(shifted.h, factor.h, epsilon = 1e-15);
        assert_relative_eq!(
            shifted.b,
            factor.b + factor.h * dx0.as_vector(),
            epsilon = 1e-12
        );
    }
}
