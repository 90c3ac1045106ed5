mod common;

use common::grad;

use fingersynth::denoiser::{Denoiser, DenoiserSpec, DenoiserVariant};
use fingersynth::nn::Precision;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tch::{Kind, Tensor};

#[test]
fn penalty_gradient_matches_finite_differences() {
    for seed in 0..4 {
        let err = grad::one_pixel_fd_error(seed);
        assert!(err < 1e-6, "seed {seed}: {err:e}");
    }
}

#[test]
fn unit_slope_linear_critic_has_no_penalty() {
    let gp = grad::unit_slope_penalty(1);
    assert!(gp.abs() < 1e-12, "{gp:e}");
}

#[test]
fn denoiser_input_gradient_matches_finite_differences() {
    for variant in [DenoiserVariant::Vanilla, DenoiserVariant::ResnetAttention, DenoiserVariant::Convnext] {
        let spec = DenoiserSpec::tiny(variant);
        let net = Denoiser::build_with_precision(&spec, 3, Precision::Double).unwrap();
        let n = spec.input_size as i64;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x0: Vec<f64> = (0..2 * n * n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let probe = Tensor::from_slice(&(0..2 * n * n).map(|_| rng.random::<f64>() - 0.5).collect::<Vec<_>>()).view([2, 1, n, n]);
        let steps = [2usize, 7];
        let f = |x: &[f64]| -> Tensor {
            let xt = Tensor::from_slice(x).view([2, 1, n, n]);
            (net.forward(&xt, &steps) * &probe).sum(Kind::Double)
        };
        let xt = Tensor::from_slice(&x0).view([2, 1, n, n]).set_requires_grad(true);
        let out = (net.forward(&xt, &steps) * &probe).sum(Kind::Double);
        let g = Tensor::run_backward(&[&out], &[&xt], false, false);
        let grad = Vec::<f64>::try_from(g[0].flatten(0, -1)).unwrap();
        let h = 1e-6;
        for idx in [0usize, 13, 40, 77, (2 * n * n - 1) as usize] {
            let (mut up, mut dn) = (x0.clone(), x0.clone());
            up[idx] += h;
            dn[idx] -= h;
            let fd = (f(&up).double_value(&[]) - f(&dn).double_value(&[])) / (2.0 * h);
            let tol = 1e-5 * (1.0 + fd.abs());
            assert!((fd - grad[idx]).abs() < tol, "{variant:?} pixel {idx}: fd {fd} autograd {}", grad[idx]);
        }
    }
}
