use serde::{Deserialize, Serialize};

use super::features::{check_same_dim, sq_dist, FeatureSet};
use crate::error::{arg_err, Result};

pub const DEFAULT_K: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prdc {
    pub precision: f64,
    pub recall: f64,
    pub density: f64,
    pub coverage: f64,
    pub k: usize,
}

fn pairwise(a: &FeatureSet, b: &FeatureSet) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.n * b.n);
    for i in 0..a.n {
        for j in 0..b.n {
            out.push(sq_dist(a.row(i), b.row(j)));
        }
    }
    out
}

/// Squared distance from each point to its k-th nearest neighbour in the
/// same set, excluding the point itself.
fn knn_radii(self_dists: &[f64], n: usize, k: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let mut row: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| self_dists[i * n + j]).collect();
            row.select_nth_unstable_by(k - 1, f64::total_cmp);
            row[k - 1]
        })
        .collect()
}

/// Improved precision/recall plus density/coverage. Balls are closed:
/// a point at exactly the k-NN radius counts as inside.
pub fn compute_prdc(real: &FeatureSet, gen: &FeatureSet, k: usize) -> Result<Prdc> {
    check_same_dim(real, gen)?;
    if k == 0 || k >= real.n.min(gen.n) {
        return Err(arg_err(format!("k = {k} must satisfy 1 <= k < min({}, {})", real.n, gen.n)));
    }
    let r_real = knn_radii(&pairwise(real, real), real.n, k);
    let r_gen = knn_radii(&pairwise(gen, gen), gen.n, k);
    let cross = pairwise(real, gen);
    let at = |i: usize, j: usize| cross[i * gen.n + j];

    let precision = (0..gen.n).filter(|&j| (0..real.n).any(|i| at(i, j) <= r_real[i])).count();
    let recall = (0..real.n).filter(|&i| (0..gen.n).any(|j| at(i, j) <= r_gen[j])).count();
    let inside: usize = (0..gen.n).map(|j| (0..real.n).filter(|&i| at(i, j) <= r_real[i]).count()).sum();
    let coverage = (0..real.n)
        .filter(|&i| {
            let nearest = (0..gen.n).map(|j| at(i, j)).fold(f64::INFINITY, f64::min);
            nearest <= r_real[i]
        })
        .count();
    Ok(Prdc {
        precision: precision as f64 / gen.n as f64,
        recall: recall as f64 / real.n as f64,
        density: inside as f64 / (k * gen.n) as f64,
        coverage: coverage as f64 / real.n as f64,
        k,
    })
}
