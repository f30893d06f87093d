//! Exact weighted-subset reduction via Caratheodory's theorem.
//!
//! Any weighted sum of n vectors in R^d can be reproduced exactly by at most
//! d+1 of them with adjusted positive weights. [`caratheodory_minimal`] is
//! the textbook elimination; [`caratheodory`] is the near-linear recursive
//! variant that clusters first and eliminates over cluster means.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Pivots smaller than `max_abs * PIVOT_RTOL` are treated as zero during
/// the rank-revealing elimination.
const PIVOT_RTOL: f64 = 1e-12;

/// A nonzero vector `beta` with `a * beta = 0`, found by Gaussian
/// elimination with partial pivoting and free-column back-substitution.
/// Returns `None` when the matrix has full column rank (no null space).
fn null_space_vector(a: &DMatrix<f64>) -> Option<DVector<f64>> {
    let (rows, cols) = a.shape();
    let mut u = a.clone_owned();
    let tol = u.amax() * PIVOT_RTOL;
    let mut pivot_cols: Vec<usize> = Vec::with_capacity(rows);

    let mut row = 0;
    for col in 0..cols {
        if row >= rows {
            break;
        }
        let mut best = row;
        for r in row + 1..rows {
            if u[(r, col)].abs() > u[(best, col)].abs() {
                best = r;
            }
        }
        if u[(best, col)].abs() <= tol {
            continue; // free column
        }
        u.swap_rows(row, best);
        for r in row + 1..rows {
            let f = u[(r, col)] / u[(row, col)];
            if f != 0.0 {
                for c in col..cols {
                    u[(r, c)] -= f * u[(row, c)];
                }
            }
        }
        pivot_cols.push(col);
        row += 1;
    }

    let free = (0..cols).find(|c| pivot_cols.binary_search(c).is_err())?;
    let mut beta = DVector::zeros(cols);
    beta[free] = 1.0;
    for (r, &pc) in pivot_cols.iter().enumerate().rev() {
        if pc > free {
            continue; // columns right of the free one stay zero-weighted
        }
        let mut s = 0.0;
        for c in pc + 1..cols {
            s += u[(r, c)] * beta[c];
        }
        beta[pc] = -s / u[(r, pc)];
    }
    Some(beta)
}

/// Textbook Caratheodory reduction: repeatedly eliminate one point using a
/// null vector of the difference matrix until the survivors are affinely
/// independent — at most d+1 of them, fewer for degenerate inputs.
///
/// Returns indices into `vectors` and their new weights; the weighted sum
/// is conserved. Inputs with `n <= d+1` pass through unchanged.
pub fn caratheodory_minimal(
    vectors: &[DVector<f64>],
    weights: &[f64],
) -> Result<(Vec<usize>, Vec<f64>)> {
    assert_eq!(vectors.len(), weights.len());
    assert!(!vectors.is_empty());
    let d = vectors[0].len();
    debug_assert!(weights.iter().all(|&w| w > 0.0));

    let mut active: Vec<usize> = (0..vectors.len()).collect();
    let mut w: Vec<f64> = weights.to_vec();
    if active.len() <= d + 1 {
        return Ok((active, w));
    }

    // Eliminate while the active vectors are affinely dependent. That is
    // guaranteed above d+1 survivors and often continues below (collinear
    // or duplicated inputs), shrinking the output further.
    while active.len() > 1 {
        let m = active.len();
        let v0 = &vectors[active[0]];
        let mut diffs = DMatrix::zeros(d, m - 1);
        for (j, &idx) in active[1..].iter().enumerate() {
            diffs.set_column(j, &(&vectors[idx] - v0));
        }
        let beta = match null_space_vector(&diffs) {
            Some(beta) if beta.amax() > 0.0 => beta,
            _ if active.len() > d + 1 => return Err(Error::NumericalDegeneracy),
            _ => break, // affinely independent: minimal support reached
        };
        // alpha sums to zero and alpha-weighted vectors sum to zero.
        let mut alpha = Vec::with_capacity(m);
        alpha.push(-beta.sum());
        alpha.extend(beta.iter().copied());

        // Largest step that keeps all weights non-negative; first (smallest
        // active index) minimizer wins ties for determinism.
        let mut lambda = f64::INFINITY;
        let mut drop_pos = usize::MAX;
        for (pos, &a) in alpha.iter().enumerate() {
            if a > 0.0 {
                let ratio = w[active[pos]] / a;
                if ratio < lambda {
                    lambda = ratio;
                    drop_pos = pos;
                }
            }
        }
        if drop_pos == usize::MAX {
            // alpha <= 0 everywhere contradicts sum(alpha) = 0, beta != 0;
            // reaching this means the null vector was numerical noise.
            return Err(Error::NumericalDegeneracy);
        }

        for (pos, &a) in alpha.iter().enumerate() {
            w[active[pos]] -= lambda * a;
        }
        w[active[drop_pos]] = 0.0;
        active.retain(|&idx| w[idx] > 0.0);
    }

    let out_w = active.iter().map(|&idx| w[idx]).collect();
    Ok((active, out_w))
}

/// Near-linear Caratheodory reduction.
///
/// Splits the points into `2(d+1)` contiguous clusters, runs the minimal
/// reduction on the weighted cluster means, keeps only points of surviving
/// clusters with proportionally rescaled weights, and repeats until at most
/// d+1 points remain. Weights are normalized to unit total internally and
/// rescaled on output to curb floating-point drift.
pub fn caratheodory(
    vectors: &[DVector<f64>],
    weights: &[f64],
) -> Result<(Vec<usize>, Vec<f64>)> {
    assert_eq!(vectors.len(), weights.len());
    assert!(!vectors.is_empty());
    let d = vectors[0].len();
    debug_assert!(weights.iter().all(|&w| w > 0.0));

    let total: f64 = weights.iter().sum();
    let mut active: Vec<usize> = (0..vectors.len()).collect();
    let mut w: Vec<f64> = weights.iter().map(|x| x / total).collect();

    while active.len() > d + 1 {
        let m = active.len();
        let k = (2 * (d + 1)).min(m);

        // Contiguous, balanced clusters over the active list.
        let bounds: Vec<usize> = (0..=k).map(|i| i * m / k).collect();
        let mut means = Vec::with_capacity(k);
        let mut cluster_w = Vec::with_capacity(k);
        for c in 0..k {
            let slice = &active[bounds[c]..bounds[c + 1]];
            let wc: f64 = slice.iter().map(|&idx| w[idx]).sum();
            let mut mean = DVector::zeros(d);
            for &idx in slice {
                mean += &vectors[idx] * w[idx];
            }
            mean /= wc;
            means.push(mean);
            cluster_w.push(wc);
        }

        let (kept, kept_w) = caratheodory_minimal(&means, &cluster_w)?;
        let mut next = Vec::new();
        for (&c, &new_wc) in kept.iter().zip(kept_w.iter()) {
            // Scale the cluster's points so they sum to the reweighted mean.
            let scale = new_wc / cluster_w[c];
            for &idx in &active[bounds[c]..bounds[c + 1]] {
                w[idx] *= scale;
                next.push(idx);
            }
        }
        if next.len() >= m {
            return Err(Error::NumericalDegeneracy);
        }
        active = next;
    }

    let out_w = active.iter().map(|&idx| w[idx] * total).collect();
    Ok((active, out_w))
}
