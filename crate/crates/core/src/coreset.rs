//! Exact downsampling of registration residuals.
//!
//! Each point's contribution to the quadratic cost model lives in a 28-dim
//! moment space (21 upper-triangle entries of J^T J, 6 of J^T e, 1 of
//! e^T e). A Caratheodory reduction over those moments yields a weighted
//! subset of at most 29 points per group whose weighted sums reproduce the
//! full (H, b, c) exactly at the pose where the residuals were evaluated —
//! the sampling pose. Away from it the subset is re-linearized like any
//! other point set, which tracks the true cost far better than freezing the
//! quadratic.

use nalgebra::{DVector, Matrix6, SVector, Vector6};

use crate::caratheodory::caratheodory;
use crate::cloud::GaussianCloud;
use crate::error::{Error, Result};
use crate::gicp::{linearize_full, linearize_point, PointLinearization, QuadraticFactor, ResidualBank};
use crate::se3::{displacement, Pose};

/// Dimension of the per-point moment space: 21 + 6 + 1.
pub const MOMENT_DIM: usize = 28;

/// Smallest exact coreset size Caratheodory guarantees per group.
pub const MIN_CORESET_SIZE: usize = MOMENT_DIM + 1;

/// Per-point contribution to (H, b, c), packed losslessly into a vector so
/// that weighted-subset sums can be matched in moment space.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentVector(pub SVector<f64, MOMENT_DIM>);

impl MomentVector {
    /// Pack a point linearization: upper triangle of J^T J row-major, then
    /// J^T e, then e^T e.
    pub fn pack(pl: &PointLinearization) -> Self {
        let h = pl.h();
        let b = pl.b();
        let mut v = SVector::<f64, MOMENT_DIM>::zeros();
        let mut at = 0;
        for r in 0..6 {
            for c in r..6 {
                v[at] = h[(r, c)];
                at += 1;
            }
        }
        for r in 0..6 {
            v[at] = b[r];
            at += 1;
        }
        v[at] = pl.c();
        MomentVector(v)
    }

    /// Reconstruct the (H, b, c) contribution.
    pub fn unpack(&self) -> (Matrix6<f64>, Vector6<f64>, f64) {
        let mut h = Matrix6::zeros();
        let mut at = 0;
        for r in 0..6 {
            for c in r..6 {
                h[(r, c)] = self.0[at];
                h[(c, r)] = self.0[at];
                at += 1;
            }
        }
        let mut b = Vector6::zeros();
        for r in 0..6 {
            b[r] = self.0[at];
            at += 1;
        }
        (h, b, self.0[at])
    }
}

/// Weighted subset of source indices reproducing the full quadratic factor
/// at `sampling_pose`.
#[derive(Debug, Clone)]
pub struct Coreset {
    /// Indices into the source cloud.
    pub indices: Vec<usize>,
    /// Strictly positive weights, one per index.
    pub weights: Vec<f64>,
    /// Pose at which exactness holds.
    pub sampling_pose: Pose,
}

impl Coreset {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Extract an exact coreset from a residual bank.
///
/// The bank's entries are split into `ceil(target_size / 29)` contiguous
/// groups and each group is reduced independently; sums add, so the union
/// is exact for the whole bank. More groups mean a larger coreset that
/// tracks the cost nonlinearity better away from the sampling pose.
pub fn extract_coreset(bank: &ResidualBank, target_size: usize) -> Result<Coreset> {
    assert!(target_size >= MIN_CORESET_SIZE, "target below minimum");
    assert!(!bank.entries.is_empty(), "empty bank");

    let n = bank.entries.len();
    let groups = target_size.div_ceil(MIN_CORESET_SIZE).min(n);
    let mut indices = Vec::new();
    let mut weights = Vec::new();
    for g in 0..groups {
        let lo = g * n / groups;
        let hi = (g + 1) * n / groups;
        let slice = &bank.entries[lo..hi];
        let moments: Vec<DVector<f64>> = slice
            .iter()
            .map(|pl| DVector::from_column_slice(MomentVector::pack(pl).0.as_slice()))
            .collect();
        let unit = vec![1.0; moments.len()];
        let (kept, w) = caratheodory(&moments, &unit)?;
        for (&pos, &wi) in kept.iter().zip(w.iter()) {
            indices.push(slice[pos].source_index);
            weights.push(wi);
        }
    }
    Ok(Coreset {
        indices,
        weights,
        sampling_pose: bank.pose,
    })
}

/// Re-linearize only the coreset points at `pose`, refreshing their
/// nearest-neighbor correspondences, and accumulate the weighted factor.
pub fn relinearize_coreset(
    cs: &Coreset,
    source: &GaussianCloud,
    target: &GaussianCloud,
    pose: &Pose,
    max_corr_dist: f64,
) -> Result<QuadraticFactor> {
    if source.is_empty() || target.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let gate_sq = max_corr_dist * max_corr_dist;
    let mut factor = QuadraticFactor::zero(*pose);
    for (&idx, &w) in cs.indices.iter().zip(cs.weights.iter()) {
        let q = pose.transform_point(&source.means[idx]);
        let nn = target.nn_index().nearest(&q).expect("non-empty target");
        if nn.dist_sq > gate_sq {
            continue;
        }
        let pl = linearize_point(
            (&target.means[nn.index], &target.covariances[nn.index]),
            (&source.means[idx], &source.covariances[idx]),
            pose,
            idx,
        )?;
        factor.add_weighted(&pl, w);
        factor.point_count += 1;
    }
    if factor.point_count == 0 {
        return Err(Error::NoValidCorrespondences);
    }
    Ok(factor)
}

/// Displacement gates of the deferred sampling policy, split into the
/// translation (meters) and rotation (degrees) components that must both
/// stay below the bound.
#[derive(Debug, Clone, Copy)]
pub struct Thresholds {
    /// Extract a coreset only once the pose has settled this close to the
    /// cached bank's pose.
    pub defer: (f64, f64),
    /// Drop the coreset and re-linearize fully once the pose drifts this
    /// far from the sampling pose.
    pub resample: (f64, f64),
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            defer: (0.25, 0.25),
            resample: (1.0, 1.0),
        }
    }
}

fn below(disp: (f64, f64), gate: (f64, f64)) -> bool {
    disp.0 < gate.0 && disp.1 < gate.1
}

/// Running totals of how much work the deferred policy performed.
#[derive(Debug, Clone, Copy, Default)]
pub struct EvalCounter {
    /// Calls that linearized the whole cloud.
    pub full_linearizations: usize,
    /// Calls served by the coreset.
    pub coreset_linearizations: usize,
    /// Per-point residual evaluations in full calls.
    pub full_point_evals: usize,
    /// Per-point residual evaluations in coreset calls.
    pub coreset_point_evals: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Empty,
    FullCached,
    CoresetActive,
}

/// Deferred sampling state machine.
///
/// The first call linearizes fully and caches the residual bank. While the
/// pose keeps moving (displacement from the cached pose at or above the
/// defer gate) every call stays full, refreshing the cache. Once two
/// consecutive poses are close — the optimizer is settling — a coreset is
/// extracted at the cached pose and subsequent calls re-linearize only the
/// coreset, until the pose drifts past the resample gate.
#[derive(Debug, Clone)]
pub struct DeferredState {
    pub phase: Phase,
    pub bank: Option<ResidualBank>,
    pub coreset: Option<Coreset>,
    pub thresholds: Thresholds,
    pub target_size: usize,
    pub max_corr_dist: f64,
    pub eval_counter: EvalCounter,
}

impl DeferredState {
    pub fn new(target_size: usize, max_corr_dist: f64) -> Self {
        assert!(target_size >= MIN_CORESET_SIZE);
        DeferredState {
            phase: Phase::Empty,
            bank: None,
            coreset: None,
            thresholds: Thresholds::default(),
            target_size,
            max_corr_dist,
            eval_counter: EvalCounter::default(),
        }
    }

    /// Bypass the coreset path entirely: every call linearizes fully.
    /// Used as the reference configuration.
    pub fn full_only(max_corr_dist: f64) -> Self {
        let mut s = DeferredState::new(MIN_CORESET_SIZE, max_corr_dist);
        // A defer gate of zero can never be satisfied strictly.
        s.thresholds.defer = (0.0, 0.0);
        s
    }

    fn linearize_fully(
        &mut self,
        source: &GaussianCloud,
        target: &GaussianCloud,
        pose: &Pose,
    ) -> Result<QuadraticFactor> {
        let (factor, bank) = linearize_full(source, target, pose, self.max_corr_dist)?;
        self.eval_counter.full_linearizations += 1;
        self.eval_counter.full_point_evals += source.len();
        self.bank = Some(bank);
        Ok(factor)
    }

    /// Produce the quadratic factor for `pose`, deciding between a full
    /// linearization and the cached coreset.
    pub fn linearize(
        &mut self,
        source: &GaussianCloud,
        target: &GaussianCloud,
        pose: &Pose,
    ) -> Result<QuadraticFactor> {
        match self.phase {
            Phase::Empty => {
                let factor = self.linearize_fully(source, target, pose)?;
                self.phase = Phase::FullCached;
                Ok(factor)
            }
            Phase::FullCached => {
                let cached_pose = self.bank.as_ref().expect("bank cached").pose;
                if below(displacement(&cached_pose, pose), self.thresholds.defer) {
                    let cs = extract_coreset(self.bank.as_ref().unwrap(), self.target_size)?;
                    let factor =
                        relinearize_coreset(&cs, source, target, pose, self.max_corr_dist)?;
                    self.eval_counter.coreset_linearizations += 1;
                    self.eval_counter.coreset_point_evals += cs.len();
                    self.coreset = Some(cs);
                    self.phase = Phase::CoresetActive;
                    Ok(factor)
                } else {
                    self.linearize_fully(source, target, pose)
                }
            }
            Phase::CoresetActive => {
                let sampling_pose = self.coreset.as_ref().expect("coreset active").sampling_pose;
                if below(displacement(&sampling_pose, pose), self.thresholds.resample) {
                    let cs = self.coreset.as_ref().unwrap();
                    let factor =
                        relinearize_coreset(cs, source, target, pose, self.max_corr_dist)?;
                    self.eval_counter.coreset_linearizations += 1;
                    self.eval_counter.coreset_point_evals += cs.len();
                    Ok(factor)
                } else {
                    self.coreset = None;
                    let factor = self.linearize_fully(source, target, pose)?;
                    self.phase = Phase::FullCached;
                    Ok(factor)
                }
            }
        }
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::gicp::tests::{random_pose, synthetic_pair};
    use crate::metrics::{kld_gaussian, mean_vector_error};
    use crate::se3::Twist;
    use approx::assert_relative_eq;
    use nalgebra::{Matrix3x6, Vector3};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_pl(rng: &mut impl Rng) -> PointLinearization {
        PointLinearization {
            residual: Vector3::from_fn(|_, _| rng.random::<f64>() * 2.0 - 1.0),
            jacobian: Matrix3x6::from_fn(|_, _| rng.random::<f64>() * 2.0 - 1.0),
            source_index: 0,
        }
    }

    fn factor_close(a: &QuadraticFactor, b: &QuadraticFactor, rtol: f64) {
        let h_err = (a.h - b.h).norm() / b.h.norm().max(1e-30);
        let b_err = (a.b - b.b).norm() / b.b.norm().max(1e-30);
        let c_err = (a.c - b.c).abs() / b.c.abs().max(1e-30);
        assert!(h_err <= rtol, "H off by {h_err}");
        assert!(b_err <= rtol, "b off by {b_err}");
        assert!(c_err <= rtol, "c off by {c_err}");
    }

    #[test]
    fn moment_vector_blocks_for_zero_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(401);
        let mut pl = random_pl(&mut rng);
        pl.residual = Vector3::zeros();
        let (_, b, c) = MomentVector::pack(&pl).unpack();
        assert_eq!(b, Vector6::zeros());
        assert_eq!(c, 0.0);
    }

    #[test]
    fn moment_vector_blocks_for_zero_jacobian() {
        let mut rng = ChaCha8Rng::seed_from_u64(403);
        let mut pl = random_pl(&mut rng);
        pl.jacobian = Matrix3x6::zeros();
        let (h, b, c) = MomentVector::pack(&pl).unpack();
        assert_eq!(h, Matrix6::zeros());
        assert_eq!(b, Vector6::zeros());
        assert_relative_eq!(c, pl.residual.norm_squared(), epsilon = 1e-15);
    }

    #[test]
    fn moment_vector_round_trips_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(407);
        for _ in 0..200 {
            let pl = random_pl(&mut rng);
            let (h, b, c) = MomentVector::pack(&pl).unpack();
            assert!((h - pl.h()).norm() <= 1e-14);
            assert!((b - pl.b()).norm() <= 1e-14);
            assert!((c - pl.c()).abs() <= 1e-14);
            // Pack is injective on the packed data: re-pack after unpack.
            let repacked = MomentVector::pack(&pl);
            assert_eq!(MomentVector::pack(&pl).0, repacked.0);
        }
    }

    fn bank_of(n: usize, seed: u64) -> (GaussianCloud, GaussianCloud, QuadraticFactor, ResidualBank)
    {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pose_true = random_pose(&mut rng, 0.4, 0.2);
        let (source, target) = synthetic_pair(&mut rng, n, &pose_true, 0.05);
        let (factor, bank) = linearize_full(&source, &target, &pose_true, 2.0).unwrap();
        (source, target, factor, bank)
    }

    #[test]
    fn small_bank_passes_through_with_unit_weights() {
        let (_, _, _, bank) = bank_of(29, 409);
        assert_eq!(bank.entries.len(), 29);
        let cs = extract_coreset(&bank, MIN_CORESET_SIZE).unwrap();
        assert_eq!(cs.len(), 29);
        assert!(cs.weights.iter().all(|&w| (w - 1.0).abs() <= 1e-12));
        let expected: Vec<usize> = bank.entries.iter().map(|e| e.source_index).collect();
        assert_eq!(cs.indices, expected);
    }

    fn weighted_moment_sum(
        bank: &ResidualBank,
        cs: &Coreset,
    ) -> (Matrix6<f64>, Vector6<f64>, f64) {
        let mut h = Matrix6::zeros();
        let mut b = Vector6::zeros();
        let mut c = 0.0;
        for (&idx, &w) in cs.indices.iter().zip(cs.weights.iter()) {
            let pl = bank
                .entries
                .iter()
                .find(|e| e.source_index == idx)
                .expect("coreset index in bank");
            h += pl.h() * w;
            b += pl.b() * w;
            c += pl.c() * w;
        }
        (h, b, c)
    }

    #[test]
    fn single_group_coreset_reproduces_full_sums() {
        let (_, _, factor, bank) = bank_of(5000, 411);
        assert!(bank.entries.len() >= 4900);
        let cs = extract_coreset(&bank, MIN_CORESET_SIZE).unwrap();
        assert!(cs.len() <= 29);
        assert!(cs.weights.iter().all(|&w| w > 0.0));
        let (h, b, c) = weighted_moment_sum(&bank, &cs);
        assert!((h - factor.h).norm() <= 1e-6 * factor.h.norm());
        assert!((b - factor.b).norm() <= 1e-6 * factor.b.norm().max(1e-12));
        assert!((c - factor.c).abs() <= 1e-6 * factor.c.max(1e-12));
    }

    #[test]
    fn grouped_coreset_is_exact_per_group_and_in_union() {
        let (_, _, factor, bank) = bank_of(5000, 413);
        let cs = extract_coreset(&bank, 128).unwrap();
        let groups = 128_usize.div_ceil(29);
        assert_eq!(groups, 5);
        assert!(cs.len() <= 29 * groups, "coreset size {}", cs.len());

        // Union exactness.
        let (h, b, c) = weighted_moment_sum(&bank, &cs);
        assert!((h - factor.h).norm() <= 1e-6 * factor.h.norm());
        assert!((b - factor.b).norm() <= 1e-6 * factor.b.norm().max(1e-12));
        assert!((c - factor.c).abs() <= 1e-6 * factor.c.max(1e-12));

        // Per-group exactness: every group's selected subset reproduces
        // that group's own sums.
        let n = bank.entries.len();
        for g in 0..groups {
            let lo = g * n / groups;
            let hi = (g + 1) * n / groups;
            let group_indices: std::collections::HashSet<usize> = bank.entries[lo..hi]
                .iter()
                .map(|e| e.source_index)
                .collect();
            let mut gh = Matrix6::zeros();
            let mut gb = Vector6::zeros();
            let mut gc = 0.0;
            for pl in &bank.entries[lo..hi] {
                gh += pl.h();
                gb += pl.b();
                gc += pl.c();
            }
            let mut sh = Matrix6::zeros();
            let mut sb = Vector6::zeros();
            let mut sc = 0.0;
            for (&idx, &w) in cs.indices.iter().zip(cs.weights.iter()) {
                if group_indices.contains(&idx) {
                    let pl = bank
                        .entries
                        .iter()
                        .find(|e| e.source_index == idx)
                        .unwrap();
                    sh += pl.h() * w;
                    sb += pl.b() * w;
                    sc += pl.c() * w;
                }
            }
            assert!((sh - gh).norm() <= 1e-6 * gh.norm());
            assert!((sb - gb).norm() <= 1e-6 * gb.norm().max(1e-12));
            assert!((sc - gc).abs() <= 1e-6 * gc.max(1e-12));
        }
    }

    #[test]
    fn coreset_fraction_is_small_on_large_banks() {
        let (_, _, _, bank) = bank_of(2900, 417);
        let cs = extract_coreset(&bank, 128).unwrap();
        let fraction = cs.len() as f64 / bank.entries.len() as f64;
        assert!(fraction <= 0.05, "fraction {fraction}");
    }

    #[test]
    fn relinearize_at_sampling_pose_matches_full_factor() {
        let (source, target, factor, bank) = bank_of(3000, 419);
        let cs = extract_coreset(&bank, 128).unwrap();
        let again = relinearize_coreset(&cs, &source, &target, &bank.pose, 2.0).unwrap();
        factor_close(&again, &factor, 1e-6);
    }

    #[test]
    fn all_points_unit_weights_is_identical_to_full() {
        let (source, target, factor, bank) = bank_of(500, 421);
        let cs = Coreset {
            indices: bank.entries.iter().map(|e| e.source_index).collect(),
            weights: vec![1.0; bank.entries.len()],
            sampling_pose: bank.pose,
        };
        let again = relinearize_coreset(&cs, &source, &target, &bank.pose, 2.0).unwrap();
        factor_close(&again, &factor, 1e-12);
        assert_eq!(again.point_count, factor.point_count);
    }

    // A corridor segment (floor plus two side walls, length 2 * half_len)
    // sampled uniformly. Surfaces give anisotropic covariances and levers
    // for rotation, the regime the approximation comparison cares about.
    pub(crate) fn sample_corridor(rng: &mut impl Rng, half_len: f64) -> Vector3<f64> {
        let a = rng.random::<f64>() * 2.0 * half_len - half_len;
        let b = rng.random::<f64>();
        match rng.random_range(0..3) {
            0 => Vector3::new(a, b * 6.0 - 3.0, 0.0),
            1 => Vector3::new(a, -3.0, b * 3.0),
            _ => Vector3::new(a, 3.0, b * 3.0),
        }
    }

    // Two scans of the same corridor: each frame samples the surfaces
    // independently (two scans never hit the same physical points), with a
    // little measurement jitter on top.
    pub(crate) fn corridor_pair(
        rng: &mut impl Rng,
        half_len: f64,
        n_src: usize,
        n_tgt: usize,
        pose: &crate::se3::Pose,
        sigma: f64,
    ) -> (crate::cloud::GaussianCloud, crate::cloud::GaussianCloud) {
        let noise = |rng: &mut dyn rand::RngCore, s: f64| {
            Vector3::new(
                (rng.random::<f64>() - 0.5) * s,
                (rng.random::<f64>() - 0.5) * s,
                (rng.random::<f64>() - 0.5) * s,
            )
        };
        let src: Vec<Vector3<f64>> = (0..n_src)
            .map(|_| sample_corridor(rng, half_len) + noise(rng, sigma))
            .collect();
        let tgt: Vec<Vector3<f64>> = (0..n_tgt)
            .map(|_| pose.transform_point(&sample_corridor(rng, half_len)) + noise(rng, sigma))
            .collect();
        (
            crate::cloud::estimate_covariances(&src, 10).unwrap(),
            crate::cloud::estimate_covariances(&tgt, 10).unwrap(),
        )
    }

    #[test]
    fn coreset_beats_frozen_quadratic_near_sampling_pose() {
        // Displace the evaluation pose by 0.1 m plus a few degrees and
        // compare both approximations against a fresh full linearization.
        // A rotation component is essential: under pure translation with
        // unchanged correspondences all Jacobians are constant, the frozen
        // quadratic is exact, and the methods coincide. Rotation is what
        // the frozen quadratic cannot track (its error grows with the
        // square of the angle), while the re-linearized coreset only pays
        // a small sampling penalty for correspondence switches.
        let mut rng = ChaCha8Rng::seed_from_u64(423);
        let (mut w_kld, mut w_trans, mut w_rot, mut w_all) = (0, 0, 0, 0);
        let trials = 100;
        for _scene in 0..5 {
            let pose_true = random_pose(&mut rng, 0.3, 0.2);
            let (source, target) = corridor_pair(&mut rng, 8.0, 8000, 24000, &pose_true, 0.002);
            let (factor, bank) = linearize_full(&source, &target, &pose_true, 2.0).unwrap();
            let cs = extract_coreset(&bank, 256).unwrap();
            for _probe in 0..20 {
                let dir = Vector3::from_fn(|_, _| rng.random::<f64>() * 2.0 - 1.0).normalize();
                let axis = Vector3::from_fn(|_, _| rng.random::<f64>() * 2.0 - 1.0).normalize();
                let probe =
                    pose_true.boxplus(&Twist::new(dir * 0.1, axis * 3.0_f64.to_radians()));

                let reference = linearize_full(&source, &target, &probe, 2.0).unwrap().0;
                let coreset_factor =
                    relinearize_coreset(&cs, &source, &target, &probe, 2.0).unwrap();
                let frozen = factor.reanchor(&probe).unwrap();

                let kld_cs = kld_gaussian(&reference.h, &coreset_factor.h).unwrap();
                let kld_fr = kld_gaussian(&reference.h, &frozen.h).unwrap();
                let (t_cs, r_cs) = mean_vector_error(&reference, &coreset_factor).unwrap();
                let (t_fr, r_fr) = mean_vector_error(&reference, &frozen).unwrap();
                if kld_cs < kld_fr {
                    w_kld += 1;
                }
                if t_cs < t_fr {
                    w_trans += 1;
                }
                if r_cs < r_fr {
                    w_rot += 1;
                }
                if kld_cs < kld_fr && t_cs < t_fr && r_cs < r_fr {
                    w_all += 1;
                }
            }
        }
        assert!(w_kld >= 95, "coreset beat frozen on information matrix in {w_kld}/{trials}");
        assert!(w_trans >= 85, "coreset beat frozen on translation in {w_trans}/{trials}");
        assert!(w_rot >= 85, "coreset beat frozen on rotation in {w_rot}/{trials}");
        assert!(w_all >= 80, "coreset beat frozen on all three in {w_all}/{trials}");
    }

    #[test]
    fn deferred_second_call_at_same_pose_uses_coreset() {
        let mut rng = ChaCha8Rng::seed_from_u64(427);
        let pose_true = random_pose(&mut rng, 0.3, 0.2);
        let (source, target) = synthetic_pair(&mut rng, 400, &pose_true, 0.05);
        let mut state = DeferredState::new(64, 2.0);

        let first = state.linearize(&source, &target, &pose_true).unwrap();
        assert_eq!(state.phase, Phase::FullCached);
        assert_eq!(state.eval_counter.full_linearizations, 1);

        let second = state.linearize(&source, &target, &pose_true).unwrap();
        assert_eq!(state.phase, Phase::CoresetActive);
        assert_eq!(state.eval_counter.full_linearizations, 1, "no extra full pass");
        assert_eq!(state.eval_counter.coreset_linearizations, 1);
        // Zero displacement: the coreset factor equals the full one.
        factor_close(&second, &first, 1e-6);
    }

    #[test]
    fn deferred_large_displacement_stays_full() {
        let mut rng = ChaCha8Rng::seed_from_u64(429);
        let pose_true = random_pose(&mut rng, 0.2, 0.1);
        let (source, target) = synthetic_pair(&mut rng, 400, &pose_true, 0.05);
        let mut state = DeferredState::new(64, 2.0);

        state.linearize(&source, &target, &pose_true).unwrap();
        // 0.5 m exceeds the 0.25 m defer gate: full re-linearization.
        let moved = pose_true.boxplus(&Twist::new(
            Vector3::new(0.5, 0.0, 0.0),
            Vector3::zeros(),
        ));
        state.linearize(&source, &target, &moved).unwrap();
        assert_eq!(state.phase, Phase::FullCached);
        assert_eq!(state.eval_counter.full_linearizations, 2);
        assert_eq!(state.eval_counter.coreset_linearizations, 0);
    }

    #[test]
    fn deferred_resample_gate_discards_coreset() {
        let mut rng = ChaCha8Rng::seed_from_u64(431);
        let pose_true = random_pose(&mut rng, 0.2, 0.1);
        let (source, target) = synthetic_pair(&mut rng, 400, &pose_true, 0.05);
        let mut state = DeferredState::new(64, 2.0);

        state.linearize(&source, &target, &pose_true).unwrap();
        state.linearize(&source, &target, &pose_true).unwrap();
        assert_eq!(state.phase, Phase::CoresetActive);

        // Within the 1.0 m resample gate: coreset keeps serving.
        let near = pose_true.boxplus(&Twist::new(
            Vector3::new(0.6, 0.0, 0.0),
            Vector3::zeros(),
        ));
        state.linearize(&source, &target, &near).unwrap();
        assert_eq!(state.phase, Phase::CoresetActive);
        assert_eq!(state.eval_counter.full_linearizations, 1);

        // 1.5 m exceeds it: back to a full pass.
        let far = pose_true.boxplus(&Twist::new(
            Vector3::new(1.5, 0.0, 0.0),
            Vector3::zeros(),
        ));
        state.linearize(&source, &target, &far).unwrap();
        assert_eq!(state.phase, Phase::FullCached);
        assert!(state.coreset.is_none());
        assert_eq!(state.eval_counter.full_linearizations, 2);
    }

    #[test]
    fn rotation_component_alone_trips_the_gates() {
        let mut rng = ChaCha8Rng::seed_from_u64(433);
        let pose_true = random_pose(&mut rng, 0.2, 0.1);
        let (source, target) = synthetic_pair(&mut rng, 400, &pose_true, 0.05);
        let mut state = DeferredState::new(64, 2.0);
        state.linearize(&source, &target, &pose_true).unwrap();

        // 0.5 degrees of pure rotation exceeds the 0.25 degree defer gate.
        let turned = pose_true.boxplus(&Twist::new(
            Vector3::zeros(),
            Vector3::new(0.0, 0.0, 0.5_f64.to_radians()),
        ));
        state.linearize(&source, &target, &turned).unwrap();
        assert_eq!(state.phase, Phase::FullCached);
        assert_eq!(state.eval_counter.full_linearizations, 2);
    }

    #[test]
    fn full_only_state_never_extracts_a_coreset() {
        let mut rng = ChaCha8Rng::seed_from_u64(437);
        let pose_true = random_pose(&mut rng, 0.2, 0.1);
        let (source, target) = synthetic_pair(&mut rng, 200, &pose_true, 0.05);
        let mut state = DeferredState::full_only(2.0);
        for _ in 0..5 {
            state.linearize(&source, &target, &pose_true).unwrap();
        }
        assert_eq!(state.eval_counter.coreset_linearizations, 0);
        assert_eq!(state.eval_counter.full_linearizations, 5);
    }
}
