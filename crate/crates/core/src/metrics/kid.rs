use rand::seq::index::sample;

use super::features::{check_same_dim, FeatureSet};
use crate::error::{arg_err, Result};
use crate::rng::stream_rng;

pub const DEFAULT_SUBSET_SIZE: usize = 100;
pub const DEFAULT_SUBSETS: usize = 10;

/// Cubic polynomial kernel `(x.y / d + 1)^3`.
pub fn poly_kernel(x: &[f64], y: &[f64]) -> f64 {
    let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    (dot / x.len() as f64 + 1.0).powi(3)
}

/// Unbiased squared MMD between two equally sized samples.
pub fn mmd2_unbiased(x: &FeatureSet, y: &FeatureSet) -> f64 {
    let m = x.n as f64;
    let n = y.n as f64;
    let within = |s: &FeatureSet| {
        let mut acc = 0.0;
        for i in 0..s.n {
            for j in i + 1..s.n {
                acc += poly_kernel(s.row(i), s.row(j));
            }
        }
        2.0 * acc
    };
    let mut cross = 0.0;
    for i in 0..x.n {
        for j in 0..y.n {
            cross += poly_kernel(x.row(i), y.row(j));
        }
    }
    within(x) / (m * (m - 1.0)) + within(y) / (n * (n - 1.0)) - 2.0 * cross / (m * n)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KidEstimate {
    pub mean: f64,
    pub std: f64,
}

/// Mean (and spread) of the unbiased MMD^2 over `n_subsets` random subsets
/// of `subset_size` drawn without replacement from each set.
pub fn compute_kid_detailed(a: &FeatureSet, b: &FeatureSet, subset_size: usize, n_subsets: usize, seed: u64) -> Result<KidEstimate> {
    check_same_dim(a, b)?;
    if subset_size < 2 {
        return Err(arg_err("KID subset size must be at least 2"));
    }
    if subset_size > a.n.min(b.n) {
        return Err(arg_err(format!("KID subset size {subset_size} exceeds set sizes {} / {}", a.n, b.n)));
    }
    if n_subsets == 0 {
        return Err(arg_err("KID needs at least one subset"));
    }
    let mut rng = stream_rng(seed, 0);
    let values: Vec<f64> = (0..n_subsets)
        .map(|_| {
            let ia = sample(&mut rng, a.n, subset_size).into_vec();
            let ib = sample(&mut rng, b.n, subset_size).into_vec();
            mmd2_unbiased(&a.select(&ia), &b.select(&ib))
        })
        .collect();
    let mean = values.iter().sum::<f64>() / n_subsets as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n_subsets as f64;
    Ok(KidEstimate { mean, std: var.sqrt() })
}

pub fn compute_kid(a: &FeatureSet, b: &FeatureSet, subset_size: usize, n_subsets: usize, seed: u64) -> Result<f64> {
    compute_kid_detailed(a, b, subset_size, n_subsets, seed).map(|k| k.mean)
}
