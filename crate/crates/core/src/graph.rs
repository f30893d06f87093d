//! Factor graph over SE(3) poses with a batch Levenberg-Marquardt solver.
//!
//! Factors measure relative poses through point-cloud registration; each
//! factor owns a deferred-coreset state so the optimizer's repeated
//! re-linearizations are served cheaply once the iterates settle. Gauge
//! freedom is removed by hard-anchoring poses (anchored poses are excluded
//! from the parameter vector and come out bit-identical).

use crate::cloud::GaussianCloud;
use crate::coreset::{DeferredState, EvalCounter};
use crate::error::{Error, Result};
use crate::gicp::QuadraticFactor;
use crate::se3::{Pose, Twist};
use nalgebra::{DMatrix, DVector, Matrix6, SMatrix, SVector, Vector6};
use std::ops::AddAssign;
use std::sync::Arc;

/// Relative-pose registration factor between poses i and j: the source
/// cloud lives in frame j, the target in frame i, and the factor is
/// linearized at T_ij = T_i⁻¹ T_j.
pub struct GicpFactor {
    pub i: usize,
    pub j: usize,
    pub target: Arc<GaussianCloud>,
    pub source: Arc<GaussianCloud>,
    pub state: DeferredState,
}

impl GicpFactor {
    pub fn new(
        i: usize,
        j: usize,
        target: Arc<GaussianCloud>,
        source: Arc<GaussianCloud>,
        coreset_size: Option<usize>,
        max_corr_dist: f64,
    ) -> Self {
        let state = match coreset_size {
            Some(size) => DeferredState::new(size, max_corr_dist),
            None => DeferredState::full_only(max_corr_dist),
        };
        GicpFactor { i, j, target, source, state }
    }
}

/// Soft prior holding a pose near a reference with scalar weight; the
/// residual is the right-logarithm of the offset, linearized with an
/// identity Jacobian (exact at zero offset).
#[derive(Debug, Clone)]
pub struct PriorFactor {
    pub index: usize,
    pub pose: Pose,
    pub weight: f64,
}

/// 12-dim quadratic over the stacked twists (ξ_i, ξ_j) of the two poses a
/// relative factor connects.
#[derive(Debug, Clone)]
pub struct LiftedFactor {
    pub h: SMatrix<f64, 12, 12>,
    pub b: SVector<f64, 12>,
    pub c: f64,
}

/// Chain-rule map of the relative twist w.r.t. the two absolute twists at
/// the linearization point: right-perturbing T_i and T_j by (ξ_i, ξ_j)
/// perturbs T_ij = T_i⁻¹T_j by ξ_rel = −Adj(T_ij⁻¹)·ξ_i + ξ_j to first
/// order, so G = [−Adj(T_ij⁻¹) | I].
pub fn relative_twist_map(t_ij: &Pose) -> SMatrix<f64, 6, 12> {
    let mut g = SMatrix::<f64, 6, 12>::zeros();
    g.fixed_view_mut::<6, 6>(0, 0).copy_from(&(-t_ij.inverse().adjoint()));
    g.fixed_view_mut::<6, 6>(0, 6).copy_from(&Matrix6::identity());
    g
}

/// Lifts a relative-pose quadratic to the two absolute poses:
/// H₁₂ = GᵀHG, b₁₂ = Gᵀb. A linear map of an exactly reproduced quadratic,
/// so coreset exactness survives the lift.
pub fn lift_relative_factor(q: &QuadraticFactor, pose_i: &Pose, pose_j: &Pose) -> LiftedFactor {
    let t_ij = pose_i.inverse().compose(pose_j);
    let g = relative_twist_map(&t_ij);
    LiftedFactor { h: g.transpose() * q.h * g, b: g.transpose() * q.b, c: q.c }
}

#[derive(Debug, Clone)]
pub struct OptimizeConfig {
    pub max_iterations: usize,
    pub lambda_init: f64,
    /// Relative cost-decrease threshold for convergence.
    pub cost_tolerance: f64,
    /// Step-norm threshold for convergence.
    pub step_tolerance: f64,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        OptimizeConfig {
            max_iterations: 50,
            lambda_init: 1e-6,
            cost_tolerance: 1e-9,
            step_tolerance: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct OptimizeReport {
    /// Cost after each accepted iteration, starting with the initial cost.
    pub iteration_costs: Vec<f64>,
    pub evals: EvalCounter,
    /// Indices of factors dropped for lacking valid correspondences.
    pub dropped_factors: Vec<usize>,
    pub converged: bool,
    /// Gradient norm of the last assembled system.
    pub final_gradient_norm: f64,
}

pub struct PoseGraph {
    pub poses: Vec<Pose>,
    pub factors: Vec<GicpFactor>,
    pub priors: Vec<PriorFactor>,
    /// Hard-fixed pose indices (gauge).
    pub anchored: Vec<usize>,
}

struct Linearization {
    factor_index: usize,
    lifted: LiftedFactor,
}

impl PoseGraph {
    pub fn new() -> Self {
        PoseGraph { poses: Vec::new(), factors: Vec::new(), priors: Vec::new(), anchored: Vec::new() }
    }

    pub fn add_pose(&mut self, pose: Pose) -> usize {
        self.poses.push(pose);
        self.poses.len() - 1
    }

    pub fn anchor(&mut self, index: usize) {
        assert!(index < self.poses.len());
        if !self.anchored.contains(&index) {
            self.anchored.push(index);
        }
    }

    fn is_gauge_fixed(&self) -> bool {
        !self.anchored.is_empty() || !self.priors.is_empty()
    }

    /// Linearizes every live factor at the given poses, returning the
    /// lifted quadratics and the summed cost (factors plus priors).
    /// Factors without valid correspondences are dropped with a warning
    /// entry in `dropped`.
    fn linearize_all(
        &mut self,
        poses: &[Pose],
        dead: &mut Vec<usize>,
    ) -> Result<(Vec<Linearization>, f64)> {
        let mut lins = Vec::with_capacity(self.factors.len());
        let mut cost = 0.0;
        for (idx, factor) in self.factors.iter_mut().enumerate() {
            if dead.contains(&idx) {
                continue;
            }
            let t_ij = poses[factor.i].inverse().compose(&poses[factor.j]);
            match factor.state.linearize(&factor.source, &factor.target, &t_ij) {
                Ok(q) => {
                    cost += q.c;
                    lins.push(Linearization {
                        factor_index: idx,
                        lifted: lift_relative_factor(&q, &poses[factor.i], &poses[factor.j]),
                    });
                }
                Err(Error::NoValidCorrespondences) => dead.push(idx),
                Err(e) => return Err(e),
            }
        }
        for prior in &self.priors {
            let r = prior.pose.inverse().compose(&poses[prior.index]).log()?;
            cost += prior.weight * r.as_vector().norm_squared();
        }
        Ok((lins, cost))
    }

    /// Batch Levenberg-Marquardt with multiplicative damping λ·diag(H).
    /// Accepted steps strictly decrease the cost reported by the factor
    /// models (full or coreset, whichever the deferred state serves).
    pub fn optimize(&mut self, config: &OptimizeConfig) -> Result<OptimizeReport> {
        assert!(self.is_gauge_fixed(), "graph needs an anchor or a prior");
        let n = self.poses.len();
        // Variable slots for non-anchored poses.
        let mut slot = vec![usize::MAX; n];
        let mut free = 0usize;
        for idx in 0..n {
            if !self.anchored.contains(&idx) {
                slot[idx] = free;
                free += 1;
            }
        }

        let mut report = OptimizeReport::default();
        let mut dead = Vec::new();
        let mut lambda = config.lambda_init;
        let mut poses = self.poses.clone();
        let (mut lins, mut cost) = self.linearize_all(&poses, &mut dead)?;
        report.iteration_costs.push(cost);

        for _ in 0..config.max_iterations {
            if free == 0 {
                report.converged = true;
                break;
            }
            let dim = 6 * free;
            let mut h = DMatrix::<f64>::zeros(dim, dim);
            let mut b = DVector::<f64>::zeros(dim);
            for lin in &lins {
                let factor = &self.factors[lin.factor_index];
                let blocks = [(factor.i, 0usize), (factor.j, 6usize)];
                for &(p, off_r) in &blocks {
                    if slot[p] == usize::MAX {
                        continue;
                    }
                    let row = 6 * slot[p];
                    b.fixed_rows_mut::<6>(row)
                        .add_assign(&lin.lifted.b.fixed_rows::<6>(off_r));
                    for &(q, off_c) in &blocks {
                        if slot[q] == usize::MAX {
                            continue;
                        }
                        let col = 6 * slot[q];
                        h.fixed_view_mut::<6, 6>(row, col)
                            .add_assign(&lin.lifted.h.fixed_view::<6, 6>(off_r, off_c));
                    }
                }
            }
            for prior in &self.priors {
                if slot[prior.index] == usize::MAX {
                    continue;
                }
                let row = 6 * slot[prior.index];
                let r = prior.pose.inverse().compose(&poses[prior.index]).log()?;
                b.fixed_rows_mut::<6>(row)
                    .add_assign(&(prior.weight * r.as_vector()));
                for k in 0..6 {
                    h[(row + k, row + k)] += prior.weight;
                }
            }
            report.final_gradient_norm = 2.0 * b.norm();

            // Try steps with increasing damping until one is accepted.
            let mut accepted = false;
            for _ in 0..16 {
                let mut damped = h.clone();
                for k in 0..dim {
                    let d = h[(k, k)];
                    damped[(k, k)] = d + lambda * d.max(1e-12);
                }
                let chol = match damped.cholesky() {
                    Some(c) => c,
                    None => {
                        lambda *= 10.0;
                        continue;
                    }
                };
                let step = chol.solve(&(-&b));
                let step_norm = step.norm();

                let mut candidate = poses.clone();
                for idx in 0..n {
                    if slot[idx] == usize::MAX {
                        continue;
                    }
                    let xi = Vector6::from_row_slice(
                        step.fixed_rows::<6>(6 * slot[idx]).as_slice(),
                    );
                    candidate[idx] = poses[idx].boxplus(&Twist::from_vector(&xi));
                }
                let (cand_lins, cand_cost) = self.linearize_all(&candidate, &mut dead)?;

                if cand_cost < cost {
                    let rel_decrease = (cost - cand_cost) / cost.max(1e-300);
                    poses = candidate;
                    lins = cand_lins;
                    cost = cand_cost;
                    lambda = (lambda / 10.0).max(1e-12);
                    report.iteration_costs.push(cost);
                    accepted = true;
                    if rel_decrease < config.cost_tolerance
                        || step_norm < config.step_tolerance
                    {
                        report.converged = true;
                    }
                    break;
                }
                lambda *= 10.0;
                if lambda > 1e12 {
                    break;
                }
            }
            if !accepted {
                // No damping level produced a decrease: either converged
                // or the system is numerically singular.
                if h.cholesky().is_none() && lambda > 1e12 {
                    return Err(Error::SingularSystem);
                }
                report.converged = true;
                break;
            }
            if report.converged {
                break;
            }
        }

        self.poses = poses;
        report.dropped_factors = dead;
        report.evals = EvalCounter::default();
        for factor in &self.factors {
            let e = &factor.state.eval_counter;
            report.evals.full_linearizations += e.full_linearizations;
            report.evals.coreset_linearizations += e.coreset_linearizations;
            report.evals.full_point_evals += e.full_point_evals;
            report.evals.coreset_point_evals += e.coreset_point_evals;
        }
        Ok(report)
    }
}

impl Default for PoseGraph {
    fn default() -> Self {
        Self::new()
    }
}
