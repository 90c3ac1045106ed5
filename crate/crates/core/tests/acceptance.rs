//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! `ACCEPTANCE_ONLY=1,5` runs a subset. With `ACCEPTANCE_STRICT=1` any failing
//! criterion makes the target exit non-zero.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{alpha_bar_reference, far_by_scan, features, grad, linear_betas, mmd2_brute, noising, prdc_exhaustive, tiny};
use fingersynth::batch::ImageBatch;
use fingersynth::biometric::{
    calibrate_far_threshold, compute_synthetic_far, make_pairs, score_pairs, spoof_score_histogram, NccMatcher, PairPopulation,
    SpoofClassifier,
};
use fingersynth::cycle::{round_trip_l1, translate, CycleGeneratorSpec, CycleTrainConfig, CycleTrainer};
use fingersynth::data::{corrupt_to_spoof, synth_ridge_dataset, PatchDataset, RidgeParams, SpoofCorruption};
use fingersynth::denoiser::{Denoiser, DenoiserSpec, DenoiserVariant};
use fingersynth::diffusion::{sample_many, DdpmTrainConfig, DdpmTrainer, DiffusionLossConfig};
use fingersynth::gan::CriticSpec;
use fingersynth::metrics::{compute_fid, compute_kid, compute_prdc, extract_chunked, PixelPca};
use fingersynth::nn::AdamConfig;
use fingersynth::rng::stream_rng;
use fingersynth::schedule::{NoiseSchedule, DEFAULT_COSINE_OFFSET};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Criterion = (u32, &'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn secs(d: Duration) -> String {
    format!("{:.2}s", d.as_secs_f64())
}

fn schedules() -> Outcome {
    let start = Instant::now();
    let lin = NoiseSchedule::linear(1000, 1e-5, 1e-2).unwrap();
    let cos = NoiseSchedule::cosine(1000, DEFAULT_COSINE_OFFSET).unwrap();
    let elapsed = start.elapsed();
    let reference = alpha_bar_reference(&linear_betas(1000, 1e-5, 1e-2));
    let got = lin.alpha_bar(1000);
    let lin_ok = ((got - reference) / reference).abs() < 1e-9 && ((got - 0.0067) / 0.0067).abs() <= 0.10;
    let mid = cos.alpha_bar(500);
    let cos_ok = ((mid - 0.494) / 0.494).abs() <= 0.01;
    let fast = elapsed < Duration::from_secs(1);
    outcome(
        lin_ok && cos_ok && fast,
        format!("linear abar_T {got:.6} (reference {reference:.6}, nominal 0.0067), cosine abar_T/2 {mid:.5}, built in {}", secs(elapsed)),
    )
}

fn reconstruction() -> Outcome {
    let s = NoiseSchedule::linear(1000, 1e-5, 1e-2).unwrap();
    let err = noising::reconstruction_error(&s, 100, 112, 2);
    outcome(err < 1e-5, format!("worst relative error {err:.2e} over 100 patches"))
}

fn noising_moments() -> Outcome {
    let s = NoiseSchedule::linear(1000, 1e-5, 1e-2).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for t in [1, 500, 1000] {
        let (gm, gv) = noising::moment_gap(&s, t, 10_000, 0.6, 100 + t as u64);
        pass &= gm < 3.0 && gv < 3.0;
        parts.push(format!("t={t} mean {gm:.2}SE var {gv:.2}SE"));
    }
    outcome(pass, parts.join(", "))
}

fn penalty() -> Outcome {
    let gp = grad::unit_slope_penalty(7);
    let fd = (0..4).map(grad::one_pixel_fd_error).fold(0.0, f64::max);
    outcome(gp.abs() < 1e-10 && fd < 1e-3, format!("unit-slope penalty {gp:.1e}, worst finite-difference gap {fd:.1e}"))
}

fn metrics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let d = 8;
    let shift = 2.0 / (d as f64).sqrt();
    let cloud = |n: usize, m: f64, rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
        (0..n).map(|_| (0..d).map(|_| rng.sample::<f64, _>(StandardNormal) + m).collect()).collect()
    };
    let fid = compute_fid(&features(&cloud(10_000, 0.0, &mut rng)), &features(&cloud(10_000, shift, &mut rng))).unwrap();
    let fid_ok = (fid - 4.0).abs() <= 0.3;

    let mut kid_gap = 0.0f64;
    for n in 2..=6 {
        let (x, y) = (cloud(n, 0.0, &mut rng), cloud(n, 0.5, &mut rng));
        let kid = compute_kid(&features(&x), &features(&y), n, 1, n as u64).unwrap();
        let want = mmd2_brute(&x, &y);
        kid_gap = kid_gap.max((kid - want).abs() / (1.0 + want.abs()));
    }
    let mut prdc_mismatch = 0;
    for n in 3..=12 {
        for k in 1..n {
            let (x, y) = (cloud(n, 0.0, &mut rng), cloud(n, 0.3, &mut rng));
            let p = compute_prdc(&features(&x), &features(&y), k).unwrap();
            let want = prdc_exhaustive(&x, &y, k);
            let got = [p.precision, p.recall, p.density, p.coverage];
            if got.iter().zip(want).any(|(g, w)| (g - w).abs() > 1e-12) {
                prdc_mismatch += 1;
            }
        }
    }
    outcome(
        fid_ok && kid_gap < 1e-10 && prdc_mismatch == 0,
        format!("FID {fid:.4} (expect 4 +- 0.3), KID vs brute force {kid_gap:.1e}, PRDC mismatches {prdc_mismatch}"),
    )
}

fn far_counting() -> Outcome {
    let mut failures = Vec::new();
    let grid: Vec<f64> = (0..100).map(|i| i as f64 / 100.0).collect();
    let f = calibrate_far_threshold(&grid, 0.07).unwrap();
    if f.k != 7 || f.threshold != 0.93 || f.tie {
        failures.push("floor branch");
    }
    let tied = [0.1, 0.5, 0.8, 0.8, 0.8, 0.3, 0.2, 0.4, 0.6, 0.7];
    let f = calibrate_far_threshold(&tied, 0.2).unwrap();
    if !(f.k == 2 && f.tie && (f.realized_far - 0.3).abs() < 1e-12) {
        failures.push("tie branch");
    }
    let f = calibrate_far_threshold(&[0.3, 0.9, 0.5], 0.2).unwrap();
    if !(f.k == 0 && f.threshold.is_infinite() && compute_synthetic_far(&[0.99], f.threshold) == 0.0) {
        failures.push("k = 0 branch");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let scores: Vec<f64> = (0..997).map(|_| rng.random::<f64>().powi(2)).collect();
    let mut prev = (f64::INFINITY, 0.0);
    let mut sweep_ok = true;
    for i in 1..200 {
        let target = i as f64 / 200.0;
        let f = calibrate_far_threshold(&scores, target).unwrap();
        let realized = compute_synthetic_far(&scores, f.threshold);
        sweep_ok &= f.threshold <= prev.0 && realized >= prev.1 && (f.k, f.threshold) == far_by_scan(&scores, target);
        prev = (f.threshold, realized);
    }
    if !sweep_ok {
        failures.push("monotonicity sweep");
    }
    outcome(failures.is_empty(), if failures.is_empty() { "all branches and the 199-target sweep agree".into() } else { failures.join(", ") })
}

fn far_endpoints() -> Outcome {
    let start = Instant::now();
    let params = RidgeParams { identities: 8, ..Default::default() };
    let real = synth_ridge_dataset(2000, 32, &params, 21).unwrap();
    let copies = real.to_batch().slice(0..1000);
    let independent = synth_ridge_dataset(1000, 32, &RidgeParams::default(), 22).unwrap().to_batch();
    let matcher = NccMatcher::default();
    let n_pairs = 5000;
    let impostor = score_pairs(&matcher, &make_pairs(&real, 0, PairPopulation::Impostor, n_pairs, 5).unwrap(), &real, None).unwrap();
    let thr = calibrate_far_threshold(&impostor.scores, 1e-2).unwrap();
    let far_of = |synthetic: &ImageBatch, seed: u64| {
        let pairs = make_pairs(&real, synthetic.len(), PairPopulation::SyntheticReal, n_pairs, seed).unwrap();
        compute_synthetic_far(&score_pairs(&matcher, &pairs, &real, Some(synthetic)).unwrap().scores, thr.threshold)
    };
    let (far_copy, far_indep) = (far_of(&copies, 6), far_of(&independent, 7));
    let elapsed = start.elapsed();
    let base = thr.realized_far;
    let pass = far_copy >= 10.0 * base && far_indep <= 2.0 * base && far_indep >= base / 2.0 && elapsed < Duration::from_secs(600);
    outcome(
        pass,
        format!(
            "baseline FAR {base:.4} at threshold {:.4}; copy generator {far_copy:.4} ({:.1}x), independent {far_indep:.4} ({:.2}x); {}",
            thr.threshold,
            far_copy / base,
            far_indep / base,
            secs(elapsed)
        ),
    )
}

fn toy_ddpm() -> Outcome {
    let start = Instant::now();
    let steps = 100;
    let spec = DenoiserSpec {
        variant: DenoiserVariant::ResnetAttention,
        input_size: 32,
        base_channels: 8,
        channel_mults: vec![1, 2, 2],
        time_embed_dim: 32,
        res_blocks: 1,
        attention_levels: 1,
        norm_groups: 4,
        timesteps: steps,
    };
    let model = Denoiser::build(&spec, 0).unwrap();
    // the 1000-step noise level range, scaled for ten times fewer steps
    let schedule = NoiseSchedule::cosine_clipped(steps, DEFAULT_COSINE_OFFSET, Some((1e-4, 0.1))).unwrap();
    let corpus = synth_ridge_dataset(2500, 32, &RidgeParams::default(), 1).unwrap();
    let (train, held) = corpus.split_every(5);
    let (train, held) = (train.to_batch(), held.to_batch());
    let cfg = DdpmTrainConfig {
        epochs: 8,
        batch_size: 32,
        adam: AdamConfig { lr: 1e-3, ..Default::default() },
        loss: DiffusionLossConfig::huber(),
        augment: None,
        seed: 0,
    };
    let epochs = cfg.epochs;
    let mut trainer = DdpmTrainer::new(&model, &schedule, cfg).unwrap();
    let mut last = 0.0;
    for _ in 0..epochs {
        last = trainer.train_epoch(&train).unwrap().mean_loss;
    }
    let n = 1000;
    let samples = sample_many(&model, &schedule, n, 32, 250, 7).unwrap();
    let pca = PixelPca::fit(&train, 32).unwrap();
    let noise = ImageBatch::gaussian(n, 32, 32, &mut stream_rng(3, 0));
    let feat = |b: &ImageBatch, id: &str| extract_chunked(&pca, b, 500, id).unwrap();
    let f_held = feat(&held, "held");
    let fid_samples = compute_fid(&feat(&samples, "samples"), &f_held).unwrap();
    let fid_noise = compute_fid(&feat(&noise, "noise"), &f_held).unwrap();
    let mean_gap = (samples.mean() - train.mean()).abs();
    let pixels = train.pixels_per_image();
    let per_pixel = |b: &ImageBatch, p: usize| b.images().map(|i| i[p] as f64).sum::<f64>() / b.len() as f64;
    let worst_pixel = (0..pixels).map(|p| (per_pixel(&samples, p) - per_pixel(&train, p)).abs()).fold(0.0, f64::max);
    outcome(
        fid_samples < 0.5 * fid_noise && worst_pixel <= 0.15,
        format!(
            "FID samples {fid_samples:.2} vs noise {fid_noise:.2}; worst per-pixel mean gap {worst_pixel:.4} (overall mean gap {mean_gap:.4}); final loss {last:.4}; {}",
            secs(start.elapsed())
        ),
    )
}

/// Live ridge patches and their spoof-style counterparts.
fn cycle_domains(n: usize, seed: u64) -> (PatchDataset, PatchDataset, RidgeParams, SpoofCorruption) {
    let params = RidgeParams { frequency: 0.07, noise_level: 0.02, ..Default::default() };
    let corruption = SpoofCorruption::default();
    let live = synth_ridge_dataset(n, 32, &params, seed).unwrap();
    let spoof = corrupt_to_spoof(&synth_ridge_dataset(n, 32, &params, seed + 1).unwrap(), &corruption, 1, seed + 2);
    (live, spoof, params, corruption)
}

fn toy_cycle() -> Outcome {
    let start = Instant::now();
    let n = 60;
    let (live, spoof, params, corruption) = cycle_domains(n + 50, 11);
    let (live_train, live_test) = (live.to_batch().slice(0..n), live.to_batch().slice(n..n + 50));
    let spoof_train = spoof.to_batch().slice(0..n);
    let scorer_live = synth_ridge_dataset(200, 32, &params, 13).unwrap().to_batch();
    let scorer_spoof = corrupt_to_spoof(&synth_ridge_dataset(200, 32, &params, 14).unwrap(), &corruption, 1, 6).to_batch();
    let scorer = SpoofClassifier::train(&scorer_live, &scorer_spoof, 5, 0).unwrap();

    let gen = CycleGeneratorSpec { input_size: 32, base_width: 32, res_blocks: 3 };
    let critic = CriticSpec { input_size: 32, base_width: 8, blocks: 3 };
    let cfg = CycleTrainConfig { constant_epochs: 20, decay_epochs: 20, ..Default::default() };
    let epochs = cfg.epochs();
    let mut trainer = CycleTrainer::new(&gen, &critic, cfg).unwrap();
    for _ in 0..epochs {
        trainer.train_epoch(&live_train, &spoof_train).unwrap();
    }
    let l1 = round_trip_l1(&trainer.models, &live_test).unwrap();
    let spoof_test = corrupt_to_spoof(&synth_ridge_dataset(50, 32, &params, 15).unwrap(), &corruption, 1, 7).to_batch();
    let translated = translate(&trainer.models.g_ab, &live_test).unwrap();
    let bins = 20;
    let h_spoof = spoof_score_histogram(&scorer, &spoof_test, bins).unwrap();
    let live_overlap = spoof_score_histogram(&scorer, &live_test, bins).unwrap().overlap(&h_spoof).unwrap();
    let translated_overlap = spoof_score_histogram(&scorer, &translated, bins).unwrap().overlap(&h_spoof).unwrap();
    let elapsed = start.elapsed();
    outcome(
        l1 < 0.1 && translated_overlap > live_overlap && elapsed < Duration::from_secs(3600),
        format!(
            "held-out cycle L1 {l1:.4} (< 0.1); spoof overlap translated {translated_overlap:.3} vs live {live_overlap:.3}; {epochs} epochs, {}",
            secs(elapsed)
        ),
    )
}

fn objectives() -> Outcome {
    let mut worst = ("", 0.0f64);
    for seed in 0..10 {
        for (term, err) in tiny::objective_errors(seed) {
            if err > worst.1 {
                worst = (term, err);
            }
        }
    }
    outcome(worst.1 < 1e-6, format!("largest term deviation {:.1e} ({})", worst.1, if worst.0.is_empty() { "none" } else { worst.0 }))
}

fn main() -> ExitCode {
    tch::set_num_threads(1);
    let criteria: [Criterion; 10] = [
        (1, "noise schedules", schedules),
        (2, "one-step reconstruction", reconstruction),
        (3, "stepwise vs closed-form noising", noising_moments),
        (4, "gradient penalty", penalty),
        (5, "FID / KID / PRDC oracles", metrics),
        (6, "FAR counting", far_counting),
        (7, "FAR endpoints on a synthetic corpus", far_endpoints),
        (8, "toy DDPM fidelity", toy_ddpm),
        (9, "toy CycleWGAN-GP", toy_cycle),
        (10, "adversarial objectives term by term", objectives),
    ];
    let only: Option<Vec<u32>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let mut failed = 0;
    for (id, name, check) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let r = check();
        println!("criterion {id:>2} {} {name}: {}", if r.pass { "PASS" } else { "FAIL" }, r.detail);
        failed += usize::from(!r.pass);
    }
    println!("{failed} criterion(s) failed");
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if failed > 0 && strict {
        return ExitCode::FAILURE;
    }
    ExitCode::SUCCESS
}
