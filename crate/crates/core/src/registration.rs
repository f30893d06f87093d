//! Single-pair registration driver: Gauss-Newton iteration over one
//! source/target cloud pair, optionally served by the deferred coreset
//! state machine instead of full re-linearization at every step.

use crate::cloud::GaussianCloud;
use crate::coreset::{DeferredState, EvalCounter};
use crate::error::Result;
use crate::se3::Pose;

#[derive(Debug, Clone)]
pub struct RegisterConfig {
    pub max_iterations: usize,
    /// Stop when the Gauss-Newton step norm falls below this.
    pub step_tolerance: f64,
    /// Stop when the relative cost change falls below this.
    pub cost_tolerance: f64,
    pub max_corr_dist: f64,
    /// Coreset target size; None disables the coreset path entirely.
    pub coreset_size: Option<usize>,
}

impl Default for RegisterConfig {
    fn default() -> Self {
        RegisterConfig {
            max_iterations: 50,
            step_tolerance: 1e-10,
            cost_tolerance: 1e-9,
            max_corr_dist: 2.0,
            coreset_size: Some(128),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RegisterOutcome {
    pub pose: Pose,
    /// Cost of the factor produced at the final pose.
    pub cost: f64,
    pub iterations: usize,
    pub evals: EvalCounter,
}

/// Estimates the pose taking source-frame points into the target frame,
/// starting from `init`.
pub fn register(
    source: &GaussianCloud,
    target: &GaussianCloud,
    init: &Pose,
    config: &RegisterConfig,
) -> Result<RegisterOutcome> {
    let mut state = match config.coreset_size {
        Some(size) => DeferredState::new(size, config.max_corr_dist),
        None => DeferredState::full_only(config.max_corr_dist),
    };
    let mut pose = *init;
    let mut prev_cost = f64::INFINITY;
    let mut cost = f64::INFINITY;
    let mut iterations = 0;
    for _ in 0..config.max_iterations {
        let factor = state.linearize(source, target, &pose)?;
        cost = factor.c;
        iterations += 1;
        let step = factor.gauss_newton_step()?;
        pose = pose.boxplus(&step);
        let step_norm = step.as_vector().norm();
        let rel_change = (prev_cost - cost).abs() / cost.max(1e-300);
        prev_cost = cost;
        if step_norm < config.step_tolerance || rel_change < config.cost_tolerance {
            break;
        }
    }
    Ok(RegisterOutcome { pose, cost, iterations, evals: state.eval_counter })
}
