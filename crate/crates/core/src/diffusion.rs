//! Forward noising, the ancestral reverse step, sampling and the denoiser
//! training objective.

use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tch::{Reduction, Tensor};

use crate::batch::ImageBatch;
use crate::data::augment::{augment_batch, AugmentConfig};
use crate::denoiser::{Denoiser, NoisePredictor};
use crate::error::{arg_err, config_err, Error, Result};
use crate::nn::{Adam, AdamConfig};
use crate::schedule::NoiseSchedule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Mse,
    Huber,
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mse" => Ok(LossKind::Mse),
            "huber" => Ok(LossKind::Huber),
            other => Err(config_err(format!("unknown loss kind {other:?} (expected mse or huber)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffusionLossConfig {
    pub loss_kind: LossKind,
    pub huber_delta: f64,
}

impl Default for DiffusionLossConfig {
    fn default() -> Self {
        Self { loss_kind: LossKind::Mse, huber_delta: 1.0 }
    }
}

impl DiffusionLossConfig {
    pub fn huber() -> Self {
        Self { loss_kind: LossKind::Huber, huber_delta: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.huber_delta > 0.0 && self.huber_delta.is_finite()) {
            return Err(config_err(format!("huber_delta must be positive, got {}", self.huber_delta)));
        }
        Ok(())
    }

    /// Mean loss between `pred` and `target`.
    pub fn loss(&self, pred: &Tensor, target: &Tensor) -> Tensor {
        match self.loss_kind {
            LossKind::Mse => pred.mse_loss(target, Reduction::Mean),
            LossKind::Huber => pred.huber_loss(target, Reduction::Mean, self.huber_delta),
        }
    }
}

/// `sqrt(abar_t) * x0 + sqrt(1 - abar_t) * eps`.
pub fn forward_sample(x0: &ImageBatch, t: usize, eps: &ImageBatch, s: &NoiseSchedule) -> Result<ImageBatch> {
    s.check_step(t)?;
    x0.check_same_shape(eps)?;
    let ab = s.alpha_bar(t);
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    let data = x0
        .data()
        .iter()
        .zip(eps.data())
        .map(|(&x, &e)| (a * x as f64 + b * e as f64) as f32)
        .collect();
    ImageBatch::new(x0.len(), x0.height(), x0.width(), data)
}

/// Inverts [`forward_sample`] for known noise:
/// `(xt - sqrt(1 - abar_t) * eps) / sqrt(abar_t)`.
pub fn predict_x0(xt: &ImageBatch, t: usize, eps: &ImageBatch, s: &NoiseSchedule) -> Result<ImageBatch> {
    s.check_step(t)?;
    xt.check_same_shape(eps)?;
    let ab = s.alpha_bar(t);
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    let data = xt
        .data()
        .iter()
        .zip(eps.data())
        .map(|(&x, &e)| ((x as f64 - b * e as f64) / a) as f32)
        .collect();
    ImageBatch::new(xt.len(), xt.height(), xt.width(), data)
}

/// One ancestral step from raw coefficients:
/// `(xt - (1 - alpha) / sqrt(1 - alpha_bar) * eps_pred) / sqrt(alpha) + sigma * z`.
pub fn reverse_update(xt: f64, eps_pred: f64, z: f64, alpha: f64, alpha_bar: f64, sigma: f64) -> f64 {
    let coef = (1.0 - alpha) / (1.0 - alpha_bar).sqrt();
    (xt - coef * eps_pred) / alpha.sqrt() + sigma * z
}

/// Removes the predicted noise for step `t` and injects `sigma_t * z`. At
/// `t = 1` the injected noise is zero regardless of `z`.
pub fn reverse_step(
    xt: &ImageBatch,
    t: usize,
    eps_pred: &ImageBatch,
    z: &ImageBatch,
    s: &NoiseSchedule,
) -> Result<ImageBatch> {
    s.check_step(t)?;
    xt.check_same_shape(eps_pred)?;
    xt.check_same_shape(z)?;
    let (alpha, alpha_bar) = (s.alpha(t), s.alpha_bar(t));
    let sigma = if t == 1 { 0.0 } else { s.sigma(t) };
    let data = xt
        .data()
        .iter()
        .zip(eps_pred.data())
        .zip(z.data())
        .map(|((&x, &e), &n)| reverse_update(x as f64, e as f64, n as f64, alpha, alpha_bar, sigma) as f32)
        .collect();
    ImageBatch::new(xt.len(), xt.height(), xt.width(), data)
}

fn check_predictor(model: &dyn NoisePredictor, s: &NoiseSchedule, size: usize) -> Result<()> {
    if let Some(steps) = model.timesteps() {
        if steps != s.steps() {
            return Err(config_err(format!(
                "model is conditioned for {steps} steps but the schedule has {}",
                s.steps()
            )));
        }
    }
    if let Some(expected) = model.input_size() {
        if expected != size {
            return Err(arg_err(format!("model expects {expected}x{expected} inputs, asked for {size}x{size}")));
        }
    }
    Ok(())
}

/// Ancestral sampling from unit Gaussian noise down to step 1.
///
/// Draw order from the seeded stream: the initial noise, then one `z` batch
/// for every step `t > 1` (from `T` downwards). The result is clamped to
/// `[-1, 1]`.
pub fn sample_loop(
    model: &dyn NoisePredictor,
    s: &NoiseSchedule,
    batch: usize,
    size: usize,
    seed: u64,
) -> Result<ImageBatch> {
    check_predictor(model, s, size)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = ImageBatch::gaussian(batch, size, size, &mut rng);
    let zeros = ImageBatch::zeros(batch, size, size);
    for t in (1..=s.steps()).rev() {
        let eps = tch::no_grad(|| model.predict(&x.to_tensor(model.kind()), &vec![t; batch]));
        let eps = ImageBatch::from_tensor(&eps)?;
        x = if t > 1 {
            let z = ImageBatch::gaussian(batch, size, size, &mut rng);
            reverse_step(&x, t, &eps, &z, s)?
        } else {
            reverse_step(&x, t, &eps, &zeros, s)?
        };
    }
    x.clamp_to_range();
    Ok(x)
}

/// Draws `n` samples in chunks of `chunk`, chunk `i` seeded with `seed + i`.
pub fn sample_many(
    model: &dyn NoisePredictor,
    s: &NoiseSchedule,
    n: usize,
    size: usize,
    chunk: usize,
    seed: u64,
) -> Result<ImageBatch> {
    let chunk = chunk.max(1);
    let mut parts = Vec::new();
    let mut done = 0;
    let mut i = 0u64;
    while done < n {
        let b = chunk.min(n - done);
        parts.push(sample_loop(model, s, b, size, seed.wrapping_add(i))?);
        done += b;
        i += 1;
    }
    if parts.is_empty() {
        return Ok(ImageBatch::zeros(0, size, size));
    }
    ImageBatch::concat(&parts)
}

/// A differentiable loss tensor together with its value.
pub struct LossValue {
    pub loss: Tensor,
    pub value: f64,
}

/// Noise-prediction loss at uniformly drawn steps.
///
/// Per sample, draws `t` uniform in `1..=T` and then unit Gaussian noise, in
/// that order, from `rng`.
pub fn diffusion_training_loss<R: Rng + ?Sized>(
    model: &dyn NoisePredictor,
    x0: &ImageBatch,
    s: &NoiseSchedule,
    cfg: &DiffusionLossConfig,
    rng: &mut R,
) -> Result<LossValue> {
    cfg.validate()?;
    if x0.is_empty() {
        return Err(arg_err("empty batch"));
    }
    let n = x0.pixels_per_image();
    let mut steps = Vec::with_capacity(x0.len());
    let mut xt = Vec::with_capacity(x0.data().len());
    let mut eps = Vec::with_capacity(x0.data().len());
    for img in x0.images() {
        let t = rng.random_range(1..=s.steps());
        let noise = ImageBatch::gaussian(1, 1, n, rng).into_data();
        let ab = s.alpha_bar(t);
        let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
        xt.extend(img.iter().zip(&noise).map(|(&x, &e)| (a * x as f64 + b * e as f64) as f32));
        eps.extend(noise);
        steps.push(t);
    }
    let kind = model.kind();
    let xt = ImageBatch::new(x0.len(), x0.height(), x0.width(), xt)?.to_tensor(kind);
    let eps = ImageBatch::new(x0.len(), x0.height(), x0.width(), eps)?.to_tensor(kind);
    let pred = model.predict(&xt, &steps);
    let loss = cfg.loss(&pred, &eps);
    let value = loss.double_value(&[]);
    Ok(LossValue { loss, value })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DdpmTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub loss: DiffusionLossConfig,
    pub augment: Option<AugmentConfig>,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DdpmEpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub iterations: usize,
}

/// Epoch-at-a-time denoiser training. Every epoch draws from its own seeded
/// stream, so resuming from a checkpoint continues the same trajectory.
pub struct DdpmTrainer<'a> {
    pub model: &'a Denoiser,
    pub schedule: &'a NoiseSchedule,
    pub cfg: DdpmTrainConfig,
    pub optimizer: Adam,
    pub epochs_done: usize,
}

impl<'a> DdpmTrainer<'a> {
    pub fn new(model: &'a Denoiser, schedule: &'a NoiseSchedule, cfg: DdpmTrainConfig) -> Result<Self> {
        cfg.loss.validate()?;
        if cfg.batch_size == 0 {
            return Err(config_err("batch_size must be positive"));
        }
        if model.spec().timesteps != schedule.steps() {
            return Err(config_err(format!(
                "model is conditioned for {} steps but the schedule has {}",
                model.spec().timesteps,
                schedule.steps()
            )));
        }
        let optimizer = Adam::new(model.var_store(), cfg.adam);
        Ok(Self { model, schedule, cfg, optimizer, epochs_done: 0 })
    }

    pub fn epoch_rng(&self, epoch: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(epoch as u64 + 1);
        rng
    }

    pub fn train_epoch(&mut self, data: &ImageBatch) -> Result<DdpmEpochLog> {
        if data.is_empty() {
            return Err(config_err("training set is empty"));
        }
        let size = self.model.spec().input_size;
        if data.height() != size || data.width() != size {
            return Err(config_err(format!(
                "training images are {}x{}, model expects {size}x{size}",
                data.height(),
                data.width()
            )));
        }
        let epoch = self.epochs_done + 1;
        let mut rng = self.epoch_rng(epoch);
        let mut order: Vec<usize> = (0..data.len()).collect();
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
        let mut total = 0.0;
        let mut iterations = 0;
        for (i, chunk) in order.chunks(self.cfg.batch_size).enumerate() {
            let mut batch = data.select(chunk);
            if let Some(aug) = &self.cfg.augment {
                batch = augment_batch(&batch, aug, &mut rng)?;
            }
            let LossValue { loss, value } =
                diffusion_training_loss(self.model, &batch, self.schedule, &self.cfg.loss, &mut rng)?;
            if !value.is_finite() {
                return Err(Error::Diverged { epoch, iteration: i, reason: format!("loss is {value}") });
            }
            loss.backward();
            self.optimizer.step(self.model.var_store());
            total += value;
            iterations += 1;
        }
        self.epochs_done = epoch;
        Ok(DdpmEpochLog { epoch, mean_loss: total / iterations as f64, iterations })
    }
}

/// Runs `cfg.epochs` epochs from scratch.
pub fn train_ddpm(
    model: &Denoiser,
    schedule: &NoiseSchedule,
    data: &ImageBatch,
    cfg: DdpmTrainConfig,
) -> Result<Vec<DdpmEpochLog>> {
    let epochs = cfg.epochs;
    let mut trainer = DdpmTrainer::new(model, schedule, cfg)?;
    (0..epochs).map(|_| trainer.train_epoch(data)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sched() -> NoiseSchedule {
        NoiseSchedule::linear(10, 1e-3, 0.2).unwrap()
    }

    #[test]
    fn noise_free_forward_scales_x0() {
        let s = sched();
        let x0 = ImageBatch::filled(2, 3, 3, 0.7);
        let out = forward_sample(&x0, 5, &ImageBatch::zeros(2, 3, 3), &s).unwrap();
        let want = (s.alpha_bar(5).sqrt() * 0.7) as f32;
        assert!(out.data().iter().all(|v| (v - want).abs() < 1e-7));
    }

    #[test]
    fn forward_closed_form_arithmetic() {
        // abar = 0.25 at step 1 when beta_1 = 0.75
        let s = NoiseSchedule::from_betas(crate::schedule::ScheduleKind::Linear, vec![0.75]).unwrap();
        let out = forward_sample(&ImageBatch::filled(1, 1, 1, 1.0), 1, &ImageBatch::filled(1, 1, 1, 1.0), &s).unwrap();
        assert!((out.data()[0] as f64 - (0.5 + 0.75f64.sqrt())).abs() < 1e-6);
    }

    #[test]
    fn x0_from_known_noise() {
        let s = NoiseSchedule::from_betas(crate::schedule::ScheduleKind::Linear, vec![0.75]).unwrap();
        let xt = ImageBatch::filled(1, 1, 1, (0.5 + 0.75f64.sqrt()) as f32);
        let x0 = predict_x0(&xt, 1, &ImageBatch::filled(1, 1, 1, 1.0), &s).unwrap();
        assert!((x0.data()[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn forward_rejects_bad_input() {
        let s = sched();
        let x0 = ImageBatch::zeros(1, 2, 2);
        assert!(matches!(forward_sample(&x0, 1, &ImageBatch::zeros(2, 2, 2), &s), Err(Error::Argument(_))));
        assert!(forward_sample(&x0, 0, &x0, &s).is_err());
        assert!(forward_sample(&x0, 11, &x0, &s).is_err());
    }

    #[test]
    fn zero_estimate_divides_by_sqrt_alpha() {
        let s = sched();
        let xt = ImageBatch::filled(1, 2, 2, 0.9);
        let z = ImageBatch::zeros(1, 2, 2);
        let out = reverse_step(&xt, 4, &z, &z, &s).unwrap();
        let want = 0.9 / s.alpha(4).sqrt();
        assert!(out.data().iter().all(|v| (*v as f64 - want).abs() < 1e-6));
    }

    #[test]
    fn unit_alpha_step_is_identity() {
        assert_eq!(reverse_update(0.3, 5.0, 0.0, 1.0, 0.5, 0.0), 0.3);
    }

    #[test]
    fn step_one_ignores_z() {
        let s = sched();
        let xt = ImageBatch::filled(1, 2, 2, 0.4);
        let e = ImageBatch::filled(1, 2, 2, 0.1);
        let a = reverse_step(&xt, 1, &e, &ImageBatch::zeros(1, 2, 2), &s).unwrap();
        let b = reverse_step(&xt, 1, &e, &ImageBatch::filled(1, 2, 2, 3.0), &s).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn unknown_loss_kind() {
        assert!(matches!("l1".parse::<LossKind>(), Err(Error::Config(_))));
        assert_eq!("Huber".parse::<LossKind>().unwrap(), LossKind::Huber);
    }
}
