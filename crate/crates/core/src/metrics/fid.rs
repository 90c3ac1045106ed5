use nalgebra::{DMatrix, SymmetricEigen};

use super::features::{check_same_dim, FeatureSet};
use crate::error::{arg_err, Error, Result};

const EIGEN_EPS: f64 = 1e-13;
const EIGEN_MAX_ITER: usize = 10_000;

/// Unbiased (n - 1) covariance.
pub fn covariance(f: &FeatureSet) -> DMatrix<f64> {
    let mean = f.mean();
    let centered = DMatrix::from_fn(f.n, f.d, |i, j| f.row(i)[j] - mean[j]);
    let mut cov = centered.transpose() * &centered;
    cov /= (f.n as f64 - 1.0).max(1.0);
    cov
}

fn eigen(m: DMatrix<f64>, what: &str) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    let sym = (&m + m.transpose()) * 0.5;
    let diag_max = sym.diagonal().iter().fold(0.0f64, |a, v| a.max(v.abs()));
    SymmetricEigen::try_new(sym, EIGEN_EPS, EIGEN_MAX_ITER).ok_or_else(|| {
        Error::Numerical(format!(
            "eigendecomposition of {what} did not converge (dimension {}, max |diagonal| {diag_max:.3e})",
            m.nrows()
        ))
    })
}

/// Symmetric square root with negative eigenvalues clipped to zero.
pub fn sqrtm_psd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let e = eigen(m.clone(), "covariance")?;
    let roots = e.eigenvalues.map(|v| v.max(0.0).sqrt());
    Ok(&e.eigenvectors * DMatrix::from_diagonal(&roots) * e.eigenvectors.transpose())
}

/// `Tr((S_a S_b)^{1/2})`, computed through the congruent symmetric product
/// `S_a^{1/2} S_b S_a^{1/2}`, which has the same eigenvalues.
pub fn trace_sqrt_product(sa: &DMatrix<f64>, sb: &DMatrix<f64>) -> Result<f64> {
    let ra = sqrtm_psd(sa)?;
    let m = &ra * sb * &ra;
    let e = eigen(m, "covariance product")?;
    Ok(e.eigenvalues.iter().map(|v| v.max(0.0).sqrt()).sum())
}

/// Frechet distance between Gaussians fitted to the two feature sets.
pub fn compute_fid(a: &FeatureSet, b: &FeatureSet) -> Result<f64> {
    check_same_dim(a, b)?;
    if a.n < 2 || b.n < 2 {
        return Err(arg_err("FID needs at least two samples per set"));
    }
    let (ma, mb) = (a.mean(), b.mean());
    let mean_term: f64 = ma.iter().zip(&mb).map(|(x, y)| (x - y) * (x - y)).sum();
    let (sa, sb) = (covariance(a), covariance(b));
    let cross = trace_sqrt_product(&sa, &sb)?;
    let fid = mean_term + sa.trace() + sb.trace() - 2.0 * cross;
    Ok(fid.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(rows: &[&[f64]]) -> FeatureSet {
        FeatureSet::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn identical_sets_have_zero_distance() {
        let a = set(&[&[0.0, 1.0], &[2.0, -1.0], &[1.0, 3.0], &[0.5, 0.5]]);
        assert!(compute_fid(&a, &a).unwrap().abs() < 1e-8);
    }

    #[test]
    fn one_dimensional_closed_form() {
        // N(m1, s1^2) vs N(m2, s2^2): (m1 - m2)^2 + (s1 - s2)^2
        let a = set(&[&[-1.0], &[1.0]]);
        let b = set(&[&[1.0], &[7.0]]);
        let (s1, s2) = (2.0f64.sqrt(), 18.0f64.sqrt());
        let want = 16.0 + (s1 - s2).powi(2);
        assert!((compute_fid(&a, &b).unwrap() - want).abs() < 1e-9);
    }

    #[test]
    fn sqrtm_squares_back() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let r = sqrtm_psd(&m).unwrap();
        assert!((&r * &r - m).abs().max() < 1e-10);
    }

    #[test]
    fn dimension_mismatch() {
        let a = set(&[&[0.0], &[1.0]]);
        let b = set(&[&[0.0, 1.0], &[1.0, 0.0]]);
        assert!(compute_fid(&a, &b).is_err());
        assert!(compute_fid(&set(&[&[1.0]]), &a).is_err());
    }
}
