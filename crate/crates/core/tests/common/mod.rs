//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use fingersynth::metrics::FeatureSet;

/// `prod (1 - beta_i)` accumulated as a compensated sum of `ln(1 - beta_i)`.
pub fn alpha_bar_reference(betas: &[f64]) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for b in betas {
        let y = (-b).ln_1p() - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    sum.exp()
}

pub fn linear_betas(steps: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..steps).map(|i| lo + (hi - lo) * i as f64 / (steps - 1) as f64).collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn cubic(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    (dot / a.len() as f64 + 1.0).powi(3)
}

/// Unbiased MMD^2 with the cubic polynomial kernel, written out as three
/// double loops over ordered index pairs.
pub fn mmd2_brute(x: &[Vec<f64>], y: &[Vec<f64>]) -> f64 {
    let (m, n) = (x.len() as f64, y.len() as f64);
    let mut kxx = 0.0;
    for i in 0..x.len() {
        for j in 0..x.len() {
            if i != j {
                kxx += cubic(&x[i], &x[j]);
            }
        }
    }
    let mut kyy = 0.0;
    for i in 0..y.len() {
        for j in 0..y.len() {
            if i != j {
                kyy += cubic(&y[i], &y[j]);
            }
        }
    }
    let mut kxy = 0.0;
    for a in x {
        for b in y {
            kxy += cubic(a, b);
        }
    }
    kxx / (m * (m - 1.0)) + kyy / (n * (n - 1.0)) - 2.0 * kxy / (m * n)
}

/// Radius of the closed ball around each point holding its `k` nearest
/// other points.
fn knn_radii(x: &[Vec<f64>], k: usize) -> Vec<f64> {
    x.iter()
        .enumerate()
        .map(|(i, p)| {
            let mut d: Vec<f64> = x.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, q)| sq_dist(p, q)).collect();
            d.sort_by(f64::total_cmp);
            d[k - 1]
        })
        .collect()
}

/// Precision, recall, density and coverage by direct enumeration.
pub fn prdc_exhaustive(real: &[Vec<f64>], fake: &[Vec<f64>], k: usize) -> [f64; 4] {
    let rr = knn_radii(real, k);
    let rf = knn_radii(fake, k);
    let in_real = |y: &[f64], i: usize| sq_dist(&real[i], y) <= rr[i];
    let precision = fake.iter().filter(|y| (0..real.len()).any(|i| in_real(y, i))).count() as f64 / fake.len() as f64;
    let recall = real
        .iter()
        .filter(|x| (0..fake.len()).any(|j| sq_dist(&fake[j], x) <= rf[j]))
        .count() as f64
        / real.len() as f64;
    let hits: usize = fake.iter().map(|y| (0..real.len()).filter(|&i| in_real(y, i)).count()).sum();
    let density = hits as f64 / (k as f64 * fake.len() as f64);
    let coverage = (0..real.len())
        .filter(|&i| {
            let nearest = fake.iter().map(|y| sq_dist(&real[i], y)).fold(f64::INFINITY, f64::min);
            nearest <= rr[i]
        })
        .count() as f64
        / real.len() as f64;
    [precision, recall, density, coverage]
}

pub fn features(rows: &[Vec<f64>]) -> FeatureSet {
    FeatureSet::from_rows(rows).unwrap()
}

/// Realized FAR and threshold by scanning every candidate threshold.
pub fn far_by_scan(scores: &[f64], target: f64) -> (usize, f64) {
    let n = scores.len();
    let k = (0..=n).rev().find(|&k| k as f64 <= n as f64 * target + 1e-9).unwrap();
    if k == 0 {
        return (0, f64::INFINITY);
    }
    let mut s = scores.to_vec();
    s.sort_by(|a, b| b.total_cmp(a));
    (k, s[k - 1])
}

pub mod tiny {
    //! Hand-sized networks on 2x2 images with scalar reference arithmetic.

    use fingersynth::cycle::{cycle_consistency_loss, cycle_full_objective, identity_loss, CycleNets, CycleWeights};
    use fingersynth::gan::{critic_loss_on, original_gan_loss, wgan_generator_loss};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use tch::Tensor;

    pub const PIX: usize = 4;
    pub const LATENT: usize = 3;
    pub const BATCH: usize = 3;

    fn vec_of(t: &Tensor) -> Vec<f64> {
        Vec::<f64>::try_from(t.flatten(0, -1)).unwrap()
    }

    fn randn(shape: &[i64], rng: &mut ChaCha8Rng) -> Tensor {
        let n: i64 = shape.iter().product();
        let v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        Tensor::from_slice(&v).view(shape)
    }

    /// `tanh(w . x + b)` (or a logistic output for the original objective).
    pub struct TinyCritic {
        pub w: Tensor,
        pub b: Tensor,
        pub logistic: bool,
    }

    impl TinyCritic {
        fn new(rng: &mut ChaCha8Rng, logistic: bool) -> Self {
            Self { w: randn(&[PIX as i64, 1], rng), b: randn(&[1], rng), logistic }
        }
        pub fn run(&self, x: &Tensor) -> Tensor {
            let s = x.view([-1, PIX as i64]).matmul(&self.w) + &self.b;
            let s = if self.logistic { s.sigmoid() } else { s.tanh() };
            s.view([-1])
        }
        fn value(&self, x: &[f64]) -> f64 {
            let w = vec_of(&self.w);
            let s: f64 = w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + vec_of(&self.b)[0];
            if self.logistic {
                1.0 / (1.0 + (-s).exp())
            } else {
                s.tanh()
            }
        }
        fn grad_norm(&self, x: &[f64]) -> f64 {
            let d = self.value(x);
            let w = vec_of(&self.w);
            w.iter().map(|wi| ((1.0 - d * d) * wi).powi(2)).sum::<f64>().sqrt()
        }
    }

    /// `tanh(x W + c)` from `inputs` values to a 2x2 image.
    pub struct TinyGen {
        pub w: Tensor,
        pub c: Tensor,
        pub inputs: usize,
    }

    impl TinyGen {
        fn new(rng: &mut ChaCha8Rng, inputs: usize) -> Self {
            Self { w: randn(&[inputs as i64, PIX as i64], rng), c: randn(&[PIX as i64], rng), inputs }
        }
        pub fn run(&self, x: &Tensor) -> Tensor {
            (x.view([-1, self.inputs as i64]).matmul(&self.w) + &self.c).tanh().view([-1, 1, 2, 2])
        }
        fn value(&self, x: &[f64]) -> Vec<f64> {
            let (w, c) = (vec_of(&self.w), vec_of(&self.c));
            (0..PIX).map(|p| ((0..self.inputs).map(|k| x[k] * w[k * PIX + p]).sum::<f64>() + c[p]).tanh()).collect()
        }
    }

    fn mean(v: impl Iterator<Item = f64>) -> f64 {
        let v: Vec<f64> = v.collect();
        v.iter().sum::<f64>() / v.len() as f64
    }

    fn rows(t: &Tensor, width: usize) -> Vec<Vec<f64>> {
        vec_of(t).chunks(width).map(|c| c.to_vec()).collect()
    }

    fn l1(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
        let n = (a.len() * a[0].len()) as f64;
        a.iter().zip(b).flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).abs())).sum::<f64>() / n
    }

    /// Scalar reference of the mean penalty for explicit mixing coefficients.
    fn penalty_ref(d: &TinyCritic, real: &[Vec<f64>], fake: &[Vec<f64>], coeff: &[f64]) -> f64 {
        mean(real.iter().zip(fake).zip(coeff).map(|((r, f), c)| {
            let x: Vec<f64> = r.iter().zip(f).map(|(a, b)| c * a + (1.0 - c) * b).collect();
            (d.grad_norm(&x) - 1.0).powi(2)
        }))
    }

    /// Largest absolute deviation per objective term, keyed by name.
    pub fn objective_errors(seed: u64) -> Vec<(&'static str, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let real_t = randn(&[BATCH as i64, 1, 2, 2], &mut rng);
        let b_t = randn(&[BATCH as i64, 1, 2, 2], &mut rng);
        let z_t = randn(&[BATCH as i64, LATENT as i64], &mut rng);
        let (real, b, z) = (rows(&real_t, PIX), rows(&b_t, PIX), rows(&z_t, LATENT));
        let g = TinyGen::new(&mut rng, LATENT);
        let d = TinyCritic::new(&mut rng, false);
        let d_prob = TinyCritic::new(&mut rng, true);
        let gen = |x: &Tensor| g.run(x);
        let crit = |x: &Tensor| d.run(x);
        let prob = |x: &Tensor| d_prob.run(x);
        let fake: Vec<Vec<f64>> = z.iter().map(|zi| g.value(zi)).collect();
        let mut out = Vec::new();

        // original minimax value
        let got = original_gan_loss(&prob, &gen, &real_t, &z_t).double_value(&[]);
        let want = mean(real.iter().map(|x| d_prob.value(x).ln())) + mean(fake.iter().map(|x| (1.0 - d_prob.value(x)).ln()));
        out.push(("original_gan", (got - want).abs()));

        // Wasserstein terms with and without the penalty
        let fake_t = g.run(&z_t);
        let lambda = 10.0;
        let mut draw = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let mut probe = draw.clone();
        let coeff: Vec<f64> = (0..BATCH).map(|_| probe.random::<f64>()).collect();
        let loss = critic_loss_on(&crit, &real_t, &fake_t, lambda, &mut draw).unwrap();
        let d_real = mean(real.iter().map(|x| d.value(x)));
        let d_fake = mean(fake.iter().map(|x| d.value(x)));
        let gp = penalty_ref(&d, &real, &fake, &coeff);
        out.push(("wgan_real", (loss.real_mean - d_real).abs()));
        out.push(("wgan_fake", (loss.fake_mean - d_fake).abs()));
        out.push(("wgan_generator", (wgan_generator_loss(&crit, &gen, &z_t).double_value(&[]) + d_fake).abs()));
        out.push(("wgan_gp_penalty", (loss.penalty - gp).abs()));
        out.push(("wgan_gp_total", (loss.total.double_value(&[]) - (d_fake - d_real + lambda * gp)).abs()));

        // cycle objective
        let g_ab = TinyGen::new(&mut rng, PIX);
        let g_ba = TinyGen::new(&mut rng, PIX);
        let d_a = TinyCritic::new(&mut rng, false);
        let d_b = TinyCritic::new(&mut rng, false);
        let (gab, gba) = (|x: &Tensor| g_ab.run(x), |x: &Tensor| g_ba.run(x));
        let (da, db) = (|x: &Tensor| d_a.run(x), |x: &Tensor| d_b.run(x));
        let a = &real;
        let a_t = &real_t;
        let idt = identity_loss(&gab, &gba, a_t, &b_t).unwrap().double_value(&[]);
        let ab: Vec<Vec<f64>> = a.iter().map(|x| g_ab.value(x)).collect();
        let ba: Vec<Vec<f64>> = b.iter().map(|x| g_ba.value(x)).collect();
        let idt_ref = l1(&b.iter().map(|x| g_ab.value(x)).collect::<Vec<_>>(), &b)
            + l1(&a.iter().map(|x| g_ba.value(x)).collect::<Vec<_>>(), a);
        out.push(("identity", (idt - idt_ref).abs()));
        let cyc = cycle_consistency_loss(&gab, &gba, a_t, &b_t).unwrap().double_value(&[]);
        let aba: Vec<Vec<f64>> = ab.iter().map(|x| g_ba.value(x)).collect();
        let bab: Vec<Vec<f64>> = ba.iter().map(|x| g_ab.value(x)).collect();
        let cyc_ref = l1(a, &aba) + l1(&b, &bab);
        out.push(("cycle", (cyc - cyc_ref).abs()));

        let w = CycleWeights::default();
        let nets = CycleNets { g_ab: &gab, g_ba: &gba, d_a: &da, d_b: &db };
        let mut draw = ChaCha8Rng::seed_from_u64(seed ^ 0xc7c1e);
        let mut probe = draw.clone();
        let c_b: Vec<f64> = (0..BATCH).map(|_| probe.random::<f64>()).collect();
        let c_a: Vec<f64> = (0..BATCH).map(|_| probe.random::<f64>()).collect();
        let (_, parts) = cycle_full_objective(nets, a_t, &b_t, &w, &mut draw).unwrap();
        let adv_ab = mean(ab.iter().map(|x| d_b.value(x))) - mean(b.iter().map(|x| d_b.value(x)))
            + w.lambda_gp * penalty_ref(&d_b, &b, &ab, &c_b);
        let adv_ba = mean(ba.iter().map(|x| d_a.value(x))) - mean(a.iter().map(|x| d_a.value(x)))
            + w.lambda_gp * penalty_ref(&d_a, a, &ba, &c_a);
        let total = adv_ab + adv_ba + w.lambda_cycle * cyc_ref + w.lambda_identity * idt_ref;
        out.push(("full_adversarial_ab", (parts.adversarial_ab - adv_ab).abs()));
        out.push(("full_adversarial_ba", (parts.adversarial_ba - adv_ba).abs()));
        out.push(("full_cycle", (parts.cycle - w.lambda_cycle * cyc_ref).abs()));
        out.push(("full_identity", (parts.identity - w.lambda_identity * idt_ref).abs()));
        out.push(("full_total", (parts.total - total).abs()));
        out
    }
}

pub mod grad {
    //! Gradient-penalty probes.

    use fingersynth::gan::{gradient_penalty_with, Critic};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use tch::{Kind, Tensor};

    fn doubles(v: &[f64], shape: &[i64]) -> Tensor {
        Tensor::from_slice(v).view(shape)
    }

    /// Penalty of the one-pixel critic `D(x) = tanh(w x^2 + u x)` as a function
    /// of `(w, u)`, with its autograd gradient.
    fn one_pixel_penalty(w: f64, u: f64, real: &Tensor, fake: &Tensor, coeff: &Tensor) -> (f64, [f64; 2]) {
        let wt = Tensor::from_slice(&[w]).set_requires_grad(true);
        let ut = Tensor::from_slice(&[u]).set_requires_grad(true);
        let d = |x: &Tensor| (x.square() * &wt + x * &ut).tanh().view([-1]);
        let gp = gradient_penalty_with(&d, real, fake, coeff).unwrap();
        let g = Tensor::run_backward(&[&gp], &[&wt, &ut], false, false);
        (gp.double_value(&[]), [g[0].double_value(&[0]), g[1].double_value(&[0])])
    }

    pub fn one_pixel_fd_error(seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |n: usize| (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect::<Vec<f64>>();
        let real = doubles(&draw(4), &[4, 1, 1, 1]);
        let fake = doubles(&draw(4), &[4, 1, 1, 1]);
        let coeff = doubles(&draw(4).iter().map(|c| c.abs()).collect::<Vec<_>>(), &[4, 1, 1, 1]);
        let p = draw(2);
        let (_, grad) = one_pixel_penalty(p[0], p[1], &real, &fake, &coeff);
        let h = 1e-6;
        let fd_w = (one_pixel_penalty(p[0] + h, p[1], &real, &fake, &coeff).0 - one_pixel_penalty(p[0] - h, p[1], &real, &fake, &coeff).0) / (2.0 * h);
        let fd_u = (one_pixel_penalty(p[0], p[1] + h, &real, &fake, &coeff).0 - one_pixel_penalty(p[0], p[1] - h, &real, &fake, &coeff).0) / (2.0 * h);
        (grad[0] - fd_w).abs().max((grad[1] - fd_u).abs())
    }

    /// Penalty of `D(x) = v . x` with `|v| = 1` on random pairs.
    pub fn unit_slope_penalty(seed: u64) -> f64 {
        let v = Tensor::from_slice(&[0.6, 0.0, -0.8, 0.0]).view([1, 1, 2, 2]);
        let d = |x: &Tensor| (x * &v).sum_dim_intlist([1i64, 2, 3].as_slice(), false, Kind::Double);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let real = Tensor::from_slice(&(0..20).map(|_| rng.random::<f64>()).collect::<Vec<_>>()).view([5, 1, 2, 2]);
        let fake = real.neg();
        let coeff = Tensor::from_slice(&[0.1, 0.3, 0.5, 0.7, 0.9]).view([5, 1, 1, 1]);
        gradient_penalty_with(&d as &dyn Critic, &real, &fake, &coeff).unwrap().double_value(&[])
    }
}

pub mod noising {
    //! Forward-process probes.

    use fingersynth::batch::ImageBatch;
    use fingersynth::diffusion::{forward_sample, predict_x0};
    use fingersynth::schedule::NoiseSchedule;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    /// Worst relative error `|x0_hat - x0| / |x0|` over `n` random patches,
    /// each noised at a random step and recovered from its own noise.
    pub fn reconstruction_error(s: &NoiseSchedule, n: usize, size: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = 0.0f64;
        for _ in 0..n {
            let x0 = ImageBatch::new(1, size, size, (0..size * size).map(|_| rng.random_range(-1.0f32..1.0)).collect()).unwrap();
            let eps = ImageBatch::gaussian(1, size, size, &mut rng);
            let t = rng.random_range(1..=s.steps());
            let xt = forward_sample(&x0, t, &eps, s).unwrap();
            let back = predict_x0(&xt, t, &eps, s).unwrap();
            let num: f64 = back.data().iter().zip(x0.data()).map(|(a, b)| ((a - b) as f64).powi(2)).sum();
            let den: f64 = x0.data().iter().map(|v| (*v as f64).powi(2)).sum();
            worst = worst.max((num / den).sqrt());
        }
        worst
    }

    fn moments(v: &[f64]) -> (f64, f64) {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        (m, v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0))
    }

    /// Noises the scalar `x0` to step `t` both step by step and in closed
    /// form over `trials` draws each. Returns the gaps in mean and in
    /// variance, each in units of its standard error.
    pub fn moment_gap(s: &NoiseSchedule, t: usize, trials: usize, x0: f64, seed: u64) -> (f64, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let iterative: Vec<f64> = (0..trials)
            .map(|_| {
                (1..=t).fold(x0, |x, k| {
                    let e: f64 = rng.sample(StandardNormal);
                    (1.0 - s.beta(k)).sqrt() * x + s.beta(k).sqrt() * e
                })
            })
            .collect();
        let eps = ImageBatch::gaussian(trials, 1, 1, &mut rng);
        let closed = forward_sample(&ImageBatch::filled(trials, 1, 1, x0 as f32), t, &eps, s).unwrap();
        let closed: Vec<f64> = closed.data().iter().map(|&v| v as f64).collect();
        let ((m1, v1), (m2, v2)) = (moments(&iterative), moments(&closed));
        let n = trials as f64;
        let se_mean = (v1 / n + v2 / n).sqrt();
        let se_var = (2.0 * v1 * v1 / (n - 1.0) + 2.0 * v2 * v2 / (n - 1.0)).sqrt();
        ((m1 - m2).abs() / se_mean, (v1 - v2).abs() / se_var)
    }
}
