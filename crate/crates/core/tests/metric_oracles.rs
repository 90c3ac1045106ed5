mod common;

use common::{features, mmd2_brute, prdc_exhaustive};
use fingersynth::metrics::{compute_fid, compute_kid, compute_prdc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn cloud(n: usize, d: usize, shift: f64, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| rng.sample::<f64, _>(StandardNormal) + shift).collect()).collect()
}

/// Four points on the axes: sample mean `mu`, sample covariance
/// `diag(2 a^2, 2 b^2) / 3`.
fn cross(mu: [f64; 2], a: f64, b: f64) -> Vec<Vec<f64>> {
    vec![vec![mu[0] + a, mu[1]], vec![mu[0] - a, mu[1]], vec![mu[0], mu[1] + b], vec![mu[0], mu[1] - b]]
}

#[test]
fn fid_of_diagonal_sets_has_a_closed_form() {
    let (x, y) = (cross([0.0, 0.0], 1.0, 2.0), cross([3.0, -1.0], 0.5, 3.0));
    let var = |a: f64| 2.0 * a * a / 3.0;
    let want = 10.0 + (var(1.0).sqrt() - var(0.5).sqrt()).powi(2) + (var(2.0).sqrt() - var(3.0).sqrt()).powi(2);
    let got = compute_fid(&features(&x), &features(&y)).unwrap();
    assert!((got - want).abs() < 1e-9, "{got} vs {want}");
}

#[test]
fn fid_of_identical_sets_is_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = features(&cloud(200, 6, 0.0, &mut rng));
    assert!(compute_fid(&x, &x).unwrap().abs() < 1e-8);
}

#[test]
fn fid_sees_the_mean_shift_of_gaussian_clouds() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = cloud(3000, 4, 0.0, &mut rng);
    let b = cloud(3000, 4, 1.0, &mut rng);
    let fid = compute_fid(&features(&a), &features(&b)).unwrap();
    assert!((fid - 4.0).abs() < 0.4, "{fid}");
}

#[test]
fn kid_on_whole_small_sets_is_the_brute_force_mmd() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for n in 2..=6 {
        let (x, y) = (cloud(n, 3, 0.0, &mut rng), cloud(n, 3, 0.7, &mut rng));
        let kid = compute_kid(&features(&x), &features(&y), n, 1, 9).unwrap();
        let want = mmd2_brute(&x, &y);
        assert!((kid - want).abs() < 1e-10 * (1.0 + want.abs()), "n {n}: {kid} vs {want}");
    }
}

#[test]
fn prdc_matches_exhaustive_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for n in 3..=12 {
        for k in 1..n.min(5) {
            let (x, y) = (cloud(n, 2, 0.0, &mut rng), cloud(n, 2, 0.5, &mut rng));
            let p = compute_prdc(&features(&x), &features(&y), k).unwrap();
            let want = prdc_exhaustive(&x, &y, k);
            let got = [p.precision, p.recall, p.density, p.coverage];
            for (g, w) in got.iter().zip(want) {
                assert!((g - w).abs() < 1e-12, "n {n} k {k}: {got:?} vs {want:?}");
            }
        }
    }
}

#[test]
fn prdc_counts_points_on_the_ball_boundary() {
    // integer grid: many real-fake distances equal a k-NN radius exactly
    let grid: Vec<Vec<f64>> = (0..9).map(|i| vec![(i % 3) as f64, (i / 3) as f64]).collect();
    let shifted: Vec<Vec<f64>> = grid.iter().map(|p| vec![p[0] + 1.0, p[1]]).collect();
    let p = compute_prdc(&features(&grid), &features(&shifted), 2).unwrap();
    let want = prdc_exhaustive(&grid, &shifted, 2);
    assert_eq!([p.precision, p.recall, p.density, p.coverage], want);
}
