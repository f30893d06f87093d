//! Approximation-quality benchmark: how well do coresets, random
//! subsamples, and the frozen quadratic reproduce the full linearization
//! away from the sampling pose?
//!
//! For every displacement magnitude and trial, the reference is a full
//! re-linearization at the perturbed pose. The coreset and the random
//! subsample re-linearize their points at the perturbed pose; the frozen
//! quadratic is re-anchored without touching any point.

use crate::cloud::GaussianCloud;
use crate::coreset::{extract_coreset, relinearize_coreset, Coreset};
use crate::error::Result;
use crate::gicp::{linearize_full, QuadraticFactor};
use crate::metrics::{kld_gaussian, mean_vector_error};
use crate::se3::{Pose, Twist};
use nalgebra::Vector3;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::fmt;

pub const DEFAULT_SIZES: [usize; 4] = [32, 64, 128, 256];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Coreset,
    Quadratic,
    Random,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Coreset => "coreset",
            Method::Quadratic => "quadratic",
            Method::Random => "random",
        })
    }
}

/// One benchmark measurement: a (method, size, displacement, trial) cell.
#[derive(Debug, Clone)]
pub struct BenchRecord {
    pub method: Method,
    /// Number of retained residuals; 0 for the frozen quadratic, which
    /// keeps none.
    pub sample_size: usize,
    /// Translation magnitude of the probe displacement, meters.
    pub displacement_trans: f64,
    /// Rotation magnitude of the probe displacement, degrees.
    pub displacement_rot: f64,
    pub trial: usize,
    pub kld: f64,
    pub mean_trans_err: f64,
    pub mean_rot_err: f64,
}

impl BenchRecord {
    pub const CSV_HEADER: &'static str =
        "method,sample_size,displacement_trans,displacement_rot,trial,kld,mean_trans_err,mean_rot_err";

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.method,
            self.sample_size,
            self.displacement_trans,
            self.displacement_rot,
            self.trial,
            self.kld,
            self.mean_trans_err,
            self.mean_rot_err
        )
    }
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub sizes: Vec<usize>,
    /// Largest probe translation, meters.
    pub max_translation: f64,
    /// Largest probe rotation, degrees.
    pub max_rotation_deg: f64,
    /// Number of nonzero displacement magnitudes; the grid is
    /// k/steps * max for k = 0..=steps, translation and rotation scaled
    /// together.
    pub displacement_steps: usize,
    pub trials: usize,
    pub seed: u64,
    pub max_corr_dist: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            sizes: DEFAULT_SIZES.to_vec(),
            max_translation: 0.5,
            max_rotation_deg: 5.0,
            displacement_steps: 5,
            trials: 100,
            seed: 0,
            max_corr_dist: 2.0,
        }
    }
}

fn compare(reference: &QuadraticFactor, test: &QuadraticFactor) -> (f64, f64, f64) {
    let kld = kld_gaussian(&reference.h, &test.h).unwrap_or(f64::INFINITY);
    let (te, re) =
        mean_vector_error(reference, test).unwrap_or((f64::INFINITY, f64::INFINITY));
    (kld, te, re)
}

/// Runs the full approximation sweep for one cloud pair at one sampling
/// pose. Deterministic for a given seed; rows come back sorted by
/// (method, size, displacement, trial).
pub fn bench_approximation(
    source: &GaussianCloud,
    target: &GaussianCloud,
    pose: &Pose,
    config: &BenchConfig,
) -> Result<Vec<BenchRecord>> {
    let (factor, bank) = linearize_full(source, target, pose, config.max_corr_dist)?;
    let n = bank.entries.len();
    let coresets: Vec<(usize, Coreset)> = config
        .sizes
        .iter()
        .map(|&s| extract_coreset(&bank, s).map(|cs| (s, cs)))
        .collect::<Result<_>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut records = Vec::new();
    for k in 0..=config.displacement_steps {
        let frac = k as f64 / config.displacement_steps as f64;
        let d_trans = frac * config.max_translation;
        let d_rot = frac * config.max_rotation_deg;
        for trial in 0..config.trials {
            let unit = |rng: &mut ChaCha8Rng| {
                Vector3::from_fn(|_, _| rng.random::<f64>() * 2.0 - 1.0).normalize()
            };
            let dir = unit(&mut rng);
            let axis = unit(&mut rng);
            let probe = pose.boxplus(&Twist::new(dir * d_trans, axis * d_rot.to_radians()));
            let (reference, _) = linearize_full(source, target, &probe, config.max_corr_dist)?;

            let mut push = |method, size, (kld, te, re)| {
                records.push(BenchRecord {
                    method,
                    sample_size: size,
                    displacement_trans: d_trans,
                    displacement_rot: d_rot,
                    trial,
                    kld,
                    mean_trans_err: te,
                    mean_rot_err: re,
                });
            };

            for (size, cs) in &coresets {
                let test = relinearize_coreset(cs, source, target, &probe, config.max_corr_dist)?;
                push(Method::Coreset, *size, compare(&reference, &test));
            }
            for &size in &config.sizes {
                let take = size.min(n);
                let draw = rand::seq::index::sample(&mut rng, n, take);
                let subsample = Coreset {
                    indices: draw.iter().map(|i| bank.entries[i].source_index).collect(),
                    weights: vec![n as f64 / take as f64; take],
                    sampling_pose: *pose,
                };
                let test =
                    relinearize_coreset(&subsample, source, target, &probe, config.max_corr_dist)?;
                push(Method::Random, size, compare(&reference, &test));
            }
            let frozen = factor.reanchor(&probe)?;
            push(Method::Quadratic, 0, compare(&reference, &frozen));
        }
    }

    records.sort_by(|a, b| {
        a.method
            .cmp(&b.method)
            .then(a.sample_size.cmp(&b.sample_size))
            .then(a.displacement_trans.total_cmp(&b.displacement_trans))
            .then(a.trial.cmp(&b.trial))
    });
    Ok(records)
}

/// Mean of a metric over the records matching a (method, size,
/// displacement) cell.
pub fn bucket_mean<F: Fn(&BenchRecord) -> f64>(
    records: &[BenchRecord],
    method: Method,
    size: usize,
    displacement_trans: f64,
    metric: F,
) -> f64 {
    let vals: Vec<f64> = records
        .iter()
        .filter(|r| {
            r.method == method
                && r.sample_size == size
                && (r.displacement_trans - displacement_trans).abs() < 1e-12
        })
        .map(metric)
        .collect();
    vals.iter().sum::<f64>() / vals.len() as f64
}
