//! Wasserstein GAN with gradient penalty: losses, networks and training.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use tch::nn::{self, Module};
use tch::{Device, Kind, Tensor};

use crate::batch::ImageBatch;
use crate::error::{arg_err, config_err, Error, Result};
use crate::nn::checkpoint::{self, Checkpoint};
use crate::nn::layers::{conv, instance_norm, leaky_relu, up_conv, Architecture};
use crate::nn::{seeded_init, Adam, AdamConfig, Precision};
use crate::rng::stream_rng;

pub const LEAKY_SLOPE: f64 = 0.2;

/// Maps a `B x 1 x H x W` batch to `B` real scores.
pub trait Critic {
    fn critic(&self, x: &Tensor) -> Tensor;
}

impl<F: Fn(&Tensor) -> Tensor> Critic for F {
    fn critic(&self, x: &Tensor) -> Tensor {
        self(x)
    }
}

/// Maps a latent or image batch to images.
pub trait Generator {
    fn generate(&self, z: &Tensor) -> Tensor;
}

impl<F: Fn(&Tensor) -> Tensor> Generator for F {
    fn generate(&self, z: &Tensor) -> Tensor {
        self(z)
    }
}

/// Per-sample mixing coefficients in `[0, 1]`, shaped to broadcast over images.
pub fn mixing_coefficients<R: Rng + ?Sized>(batch: usize, dims: usize, kind: Kind, rng: &mut R) -> Tensor {
    let c: Vec<f64> = (0..batch).map(|_| rng.random::<f64>()).collect();
    let mut shape = vec![batch as i64];
    shape.extend(std::iter::repeat_n(1i64, dims.saturating_sub(1)));
    Tensor::from_slice(&c).view(shape.as_slice()).to_kind(kind)
}

/// Gradient penalty for explicit mixing coefficients: the mean over samples
/// of `(||grad_x D(x_hat)||_2 - 1)^2` with `x_hat = c * real + (1 - c) * fake`.
/// The result stays differentiable with respect to the critic's parameters.
pub fn gradient_penalty_with(d: &dyn Critic, real: &Tensor, fake: &Tensor, coeff: &Tensor) -> Result<Tensor> {
    if real.size() != fake.size() {
        return Err(arg_err(format!("real batch {:?} and fake batch {:?} differ", real.size(), fake.size())));
    }
    let x_hat = mix(real, fake, coeff);
    let out = d.critic(&x_hat);
    penalty_of(&out, &x_hat)
}

fn mix(real: &Tensor, fake: &Tensor, coeff: &Tensor) -> Tensor {
    let mixed: Tensor = coeff * real.detach() + (coeff.neg() + 1.0) * fake.detach();
    mixed.set_requires_grad(true)
}

fn penalty_of(out: &Tensor, x_hat: &Tensor) -> Result<Tensor> {
    if !out.requires_grad() {
        return Err(Error::Capability("critic output does not depend differentiably on its input".into()));
    }
    let grads = Tensor::run_backward(&[out.sum(out.kind())], &[x_hat], true, true);
    let g = grads[0].view([x_hat.size()[0], -1]);
    let norm = g.norm_scalaropt_dim(2.0, [1i64].as_slice(), false);
    Ok((norm - 1.0).square().mean(None::<Kind>))
}

/// Gradient penalty with mixing coefficients drawn uniformly from `[0, 1]`.
pub fn gradient_penalty<R: Rng + ?Sized>(d: &dyn Critic, real: &Tensor, fake: &Tensor, rng: &mut R) -> Result<Tensor> {
    let coeff = mixing_coefficients(real.size()[0] as usize, real.dim(), real.kind(), rng);
    gradient_penalty_with(d, real, fake, &coeff)
}

/// Critic loss pieces. `total` carries the graph; the rest are plain values.
#[derive(Debug)]
pub struct CriticLoss {
    pub total: Tensor,
    pub fake_mean: f64,
    pub real_mean: f64,
    pub penalty: f64,
}

/// `E[D(fake)] - E[D(real)] + lambda * GP` for a precomputed fake batch,
/// which is treated as a constant.
pub fn critic_loss_on<R: Rng + ?Sized>(d: &dyn Critic, real: &Tensor, fake: &Tensor, lambda_gp: f64, rng: &mut R) -> Result<CriticLoss> {
    if real.size() != fake.size() {
        return Err(arg_err(format!("real batch {:?} and fake batch {:?} differ", real.size(), fake.size())));
    }
    // The critic scores each sample independently, so one pass over the
    // stacked fake, real and mixed batches gives all three terms.
    let fake = fake.detach();
    let b = real.size()[0];
    let coeff = mixing_coefficients(b as usize, real.dim(), real.kind(), rng);
    let x_hat = mix(real, &fake, &coeff);
    let out = d.critic(&Tensor::cat(&[&fake, &real.detach(), &x_hat], 0));
    let d_fake = out.narrow(0, 0, b).mean(None::<Kind>);
    let d_real = out.narrow(0, b, b).mean(None::<Kind>);
    let gp = penalty_of(&out.narrow(0, 2 * b, b), &x_hat)?;
    let penalty = gp.double_value(&[]);
    let (fake_mean, real_mean) = (d_fake.double_value(&[]), d_real.double_value(&[]));
    let total = d_fake - d_real + gp * lambda_gp;
    Ok(CriticLoss { total, fake_mean, real_mean, penalty })
}

pub fn wgan_gp_critic_loss<R: Rng + ?Sized>(
    d: &dyn Critic,
    g: &dyn Generator,
    real: &Tensor,
    z: &Tensor,
    lambda_gp: f64,
    rng: &mut R,
) -> Result<CriticLoss> {
    let fake = tch::no_grad(|| g.generate(z));
    if fake.size() != real.size() {
        return Err(arg_err(format!("generator produced {:?}, real batch is {:?}", fake.size(), real.size())));
    }
    critic_loss_on(d, real, &fake, lambda_gp, rng)
}

/// `-E[D(G(z))]`.
pub fn wgan_generator_loss(d: &dyn Critic, g: &dyn Generator, z: &Tensor) -> Tensor {
    -d.critic(&g.generate(z)).mean(None::<Kind>)
}

/// Value of the original minimax objective, `E[log D(x)] + E[log(1 - D(G(z)))]`,
/// for a discriminator that outputs probabilities.
pub fn original_gan_loss(d: &dyn Critic, g: &dyn Generator, real: &Tensor, z: &Tensor) -> Tensor {
    let real_term = d.critic(real).log().mean(None::<Kind>);
    let fake_term = (d.critic(&g.generate(z)).neg() + 1.0).log().mean(None::<Kind>);
    real_term + fake_term
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriticSpec {
    pub input_size: usize,
    /// Width of the first block; each following block doubles it.
    pub base_width: i64,
    pub blocks: usize,
}

impl CriticSpec {
    pub fn full(input_size: usize) -> Self {
        Self { input_size, base_width: 64, blocks: 4 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_width < 1 || self.blocks == 0 {
            return Err(config_err("critic needs at least one block of positive width"));
        }
        let coarsest = self.input_size >> self.blocks;
        if coarsest < 2 || !self.input_size.is_multiple_of(1 << self.blocks) {
            return Err(config_err(format!(
                "critic input {} must be divisible by 2^{} and leave at least 2x2",
                self.input_size, self.blocks
            )));
        }
        Ok(())
    }
}

/// PatchGAN-style critic: `Ck` blocks are 4x4 stride-2 convolution, instance
/// normalization (not on the first block) and leaky ReLU, followed by a 4x4
/// convolution to one channel and a spatial mean.
#[derive(Debug)]
pub struct PatchCritic {
    pub spec: CriticSpec,
    pub vs: nn::VarStore,
    blocks: Vec<nn::Conv2D>,
    out: nn::Conv2D,
    pub arch: Architecture,
}

impl PatchCritic {
    pub fn build(spec: &CriticSpec, precision: Precision, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut vs = nn::VarStore::new(Device::Cpu);
        let root = vs.root();
        let mut arch = Architecture::default();
        let mut blocks = Vec::new();
        let mut c_in = 1;
        for i in 0..spec.blocks {
            let c_out = spec.base_width << i;
            blocks.push(conv(&root / format!("c{i}"), c_in, c_out, 4, 2, 1));
            arch.push(format!("C{c_out}"));
            c_in = c_out;
        }
        let out = conv(&root / "out", c_in, 1, 4, 1, 1);
        if precision == Precision::Double {
            vs.double();
        }
        seeded_init(&vs, seed);
        Ok(Self { spec: spec.clone(), vs, blocks, out, arch })
    }

    pub fn arch_string(&self) -> String {
        self.arch.layers.join("-")
    }
}

impl Critic for PatchCritic {
    fn critic(&self, x: &Tensor) -> Tensor {
        let mut h = x.shallow_clone();
        for (i, c) in self.blocks.iter().enumerate() {
            h = c.forward(&h);
            if i > 0 {
                h = instance_norm(&h);
            }
            h = leaky_relu(&h, LEAKY_SLOPE);
        }
        self.out.forward(&h).mean_dim([1i64, 2, 3].as_slice(), false, None::<Kind>)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatentGeneratorSpec {
    pub latent_dim: i64,
    pub output_size: usize,
    /// Width of the last up-sampling stage; earlier stages double it.
    pub base_width: i64,
    pub up_blocks: usize,
}

impl LatentGeneratorSpec {
    pub fn full(output_size: usize) -> Self {
        Self { latent_dim: 128, output_size, base_width: 64, up_blocks: 3 }
    }

    pub fn validate(&self) -> Result<()> {
        let f = 1usize << self.up_blocks;
        if self.latent_dim < 1 || self.base_width < 1 || !self.output_size.is_multiple_of(f) || self.output_size < f {
            return Err(config_err(format!(
                "generator output {} must be a positive multiple of 2^{}",
                self.output_size, self.up_blocks
            )));
        }
        Ok(())
    }
}

/// Latent vector to image: a linear map onto the coarsest grid, `uK`
/// up-convolution blocks with instance normalization and ReLU, and a final
/// 7x7 convolution with tanh.
#[derive(Debug)]
pub struct LatentGenerator {
    pub spec: LatentGeneratorSpec,
    pub vs: nn::VarStore,
    proj: nn::Linear,
    ups: Vec<nn::ConvTranspose2D>,
    out: nn::Conv2D,
    pub arch: Architecture,
}

impl LatentGenerator {
    pub fn build(spec: &LatentGeneratorSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let vs = nn::VarStore::new(Device::Cpu);
        let root = vs.root();
        let mut arch = Architecture::default();
        let start = (spec.output_size >> spec.up_blocks) as i64;
        let c0 = spec.base_width << spec.up_blocks;
        let proj = nn::linear(&root / "proj", spec.latent_dim, c0 * start * start, Default::default());
        arch.push(format!("z{}-fc{}x{start}x{start}", spec.latent_dim, c0));
        let mut ups = Vec::new();
        let mut c = c0;
        for i in 0..spec.up_blocks {
            ups.push(up_conv(&root / format!("u{i}"), c, c / 2));
            c /= 2;
            arch.push(format!("u{c}"));
        }
        let out = conv(&root / "out", c, 1, 7, 1, 3);
        arch.push("c7s1-1");
        seeded_init(&vs, seed);
        Ok(Self { spec: spec.clone(), vs, proj, ups, out, arch })
    }
}

impl Generator for LatentGenerator {
    fn generate(&self, z: &Tensor) -> Tensor {
        let start = (self.spec.output_size >> self.spec.up_blocks) as i64;
        let b = z.size()[0];
        let mut h = self.proj.forward(z).view([b, -1, start, start]).relu();
        for u in &self.ups {
            h = instance_norm(&u.forward(&h)).relu();
        }
        self.out.forward(&h).tanh()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GanTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub n_critic: usize,
    pub lambda_gp: f64,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for GanTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 64,
            n_critic: 5,
            lambda_gp: 10.0,
            adam: AdamConfig { lr: 1e-4, beta1: 0.5, beta2: 0.999, eps: 1e-8 },
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GanEpochLog {
    pub epoch: usize,
    pub critic_loss: f64,
    pub generator_loss: f64,
    pub penalty_mean: f64,
}

impl GanEpochLog {
    pub fn line(&self) -> String {
        format!("{} {:.9e} {:.9e} {:.9e}", self.epoch, self.critic_loss, self.generator_loss, self.penalty_mean)
    }
}

pub const WGAN_CHECKPOINT_KIND: &str = "wgan-gp";

/// Epoch-at-a-time WGAN-GP training. Each batch is one critic update; every
/// `n_critic`-th critic update is followed by one generator update.
pub struct WganTrainer {
    pub generator: LatentGenerator,
    pub critic: PatchCritic,
    pub cfg: GanTrainConfig,
    pub gen_opt: Adam,
    pub critic_opt: Adam,
    pub epochs_done: usize,
    critic_steps: u64,
}

impl WganTrainer {
    pub fn new(gen_spec: &LatentGeneratorSpec, critic_spec: &CriticSpec, cfg: GanTrainConfig) -> Result<Self> {
        if cfg.batch_size == 0 || cfg.n_critic == 0 {
            return Err(config_err("batch_size and n_critic must be positive"));
        }
        if !cfg.lambda_gp.is_finite() || cfg.lambda_gp < 0.0 {
            return Err(config_err("lambda_gp must be finite and >= 0"));
        }
        if gen_spec.output_size != critic_spec.input_size {
            return Err(config_err("generator output and critic input sizes differ"));
        }
        let generator = LatentGenerator::build(gen_spec, cfg.seed)?;
        let critic = PatchCritic::build(critic_spec, Precision::Single, cfg.seed.wrapping_add(1))?;
        let gen_opt = Adam::new(&generator.vs, cfg.adam);
        let critic_opt = Adam::new(&critic.vs, cfg.adam);
        Ok(Self { generator, critic, cfg, gen_opt, critic_opt, epochs_done: 0, critic_steps: 0 })
    }

    pub fn latent<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Tensor {
        let d = self.generator.spec.latent_dim as usize;
        let z: Vec<f32> = (0..n * d).map(|_| rng.sample(StandardNormal)).collect();
        Tensor::from_slice(&z).view([n as i64, d as i64])
    }

    /// Fixed latent batch used for the per-checkpoint sample grids.
    pub fn preview_latent(&self, n: usize) -> Tensor {
        self.latent(n, &mut stream_rng(self.cfg.seed, 0))
    }

    pub fn sample(&self, z: &Tensor) -> Result<ImageBatch> {
        ImageBatch::from_tensor(&tch::no_grad(|| self.generator.generate(z)))
    }

    pub fn train_epoch(&mut self, data: &ImageBatch) -> Result<GanEpochLog> {
        if data.is_empty() {
            return Err(config_err("training set is empty"));
        }
        let size = self.critic.spec.input_size;
        if data.height() != size || data.width() != size {
            return Err(config_err(format!("training images are {}x{}, networks expect {size}x{size}", data.height(), data.width())));
        }
        let epoch = self.epochs_done + 1;
        let mut rng = stream_rng(self.cfg.seed, epoch as u64);
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut rng);
        let (mut c_sum, mut g_sum, mut p_sum, mut c_n, mut g_n) = (0.0, 0.0, 0.0, 0usize, 0usize);
        for (it, chunk) in order.chunks(self.cfg.batch_size).enumerate() {
            let real = data.select(chunk).to_tensor(Kind::Float);
            let z = self.latent(chunk.len(), &mut rng);
            self.gen_opt.zero_grad(&self.generator.vs);
            self.critic_opt.zero_grad(&self.critic.vs);
            let loss = wgan_gp_critic_loss(&self.critic, &self.generator, &real, &z, self.cfg.lambda_gp, &mut rng)?;
            let value = loss.total.double_value(&[]);
            if !value.is_finite() {
                return Err(Error::Diverged { epoch, iteration: it, reason: format!("critic loss is {value}") });
            }
            loss.total.backward();
            self.critic_opt.step(&self.critic.vs);
            self.critic_steps += 1;
            c_sum += value;
            p_sum += loss.penalty;
            c_n += 1;

            if self.critic_steps.is_multiple_of(self.cfg.n_critic as u64) {
                let z = self.latent(chunk.len(), &mut rng);
                self.critic_opt.zero_grad(&self.critic.vs);
                let g_loss = wgan_generator_loss(&self.critic, &self.generator, &z);
                let value = g_loss.double_value(&[]);
                if !value.is_finite() {
                    return Err(Error::Diverged { epoch, iteration: it, reason: format!("generator loss is {value}") });
                }
                g_loss.backward();
                self.gen_opt.step(&self.generator.vs);
                self.critic_opt.zero_grad(&self.critic.vs);
                g_sum += value;
                g_n += 1;
            }
        }
        self.epochs_done = epoch;
        Ok(GanEpochLog {
            epoch,
            critic_loss: c_sum / c_n as f64,
            generator_loss: if g_n > 0 { g_sum / g_n as f64 } else { f64::NAN },
            penalty_mean: p_sum / c_n as f64,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let spec = serde_json::json!({
            "generator": self.generator.spec,
            "critic": self.critic.spec,
            "train": self.cfg,
        });
        let meta = serde_json::json!({
            "epochs_done": self.epochs_done,
            "critic_steps": self.critic_steps,
            "gen_adam_step": self.gen_opt.steps_taken(),
            "critic_adam_step": self.critic_opt.steps_taken(),
        });
        let mut ck = Checkpoint::new(WGAN_CHECKPOINT_KIND, spec, meta);
        ck.insert_prefixed("gen.", checkpoint::var_tensors(&self.generator.vs));
        ck.insert_prefixed("gen.", self.gen_opt.state_tensors());
        ck.insert_prefixed("critic.", checkpoint::var_tensors(&self.critic.vs));
        ck.insert_prefixed("critic.", self.critic_opt.state_tensors());
        ck
    }

    /// Rebuilds a trainer (weights, optimizer moments, counters) from a checkpoint.
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_kind(WGAN_CHECKPOINT_KIND)?;
        let parse = |key: &str| ck.spec.get(key).cloned().ok_or_else(|| Error::Checkpoint(format!("spec lacks {key}")));
        let bad = |e: serde_json::Error| Error::Checkpoint(e.to_string());
        let gen_spec: LatentGeneratorSpec = serde_json::from_value(parse("generator")?).map_err(bad)?;
        let critic_spec: CriticSpec = serde_json::from_value(parse("critic")?).map_err(bad)?;
        let cfg: GanTrainConfig = serde_json::from_value(parse("train")?).map_err(bad)?;
        let mut t = Self::new(&gen_spec, &critic_spec, cfg)?;
        let meta = |k: &str| ck.meta.get(k).and_then(|v| v.as_u64()).ok_or_else(|| Error::Checkpoint(format!("meta lacks {k}")));
        checkpoint::load_into(&t.generator.vs, &ck.with_prefix("gen."))?;
        checkpoint::load_into(&t.critic.vs, &ck.with_prefix("critic."))?;
        let lr = t.cfg.adam.lr;
        t.gen_opt.restore(meta("gen_adam_step")?, lr, &ck.with_prefix("gen."))?;
        t.critic_opt.restore(meta("critic_adam_step")?, lr, &ck.with_prefix("critic."))?;
        t.epochs_done = meta("epochs_done")? as usize;
        t.critic_steps = meta("critic_steps")?;
        Ok(t)
    }
}

/// Runs `cfg.epochs` epochs from scratch and returns the trainer with its log.
pub fn train_wgan_gp(
    data: &ImageBatch,
    gen_spec: &LatentGeneratorSpec,
    critic_spec: &CriticSpec,
    cfg: GanTrainConfig,
) -> Result<(WganTrainer, Vec<GanEpochLog>)> {
    let mut t = WganTrainer::new(gen_spec, critic_spec, cfg)?;
    let log = (0..t.cfg.epochs).map(|_| t.train_epoch(data)).collect::<Result<Vec<_>>>()?;
    Ok((t, log))
}
