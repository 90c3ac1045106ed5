//! Unpaired two-domain translation trained with a cycle-consistent WGAN-GP
//! objective.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use tch::nn::{self, Module};
use tch::{Device, Kind, Tensor};

use crate::batch::ImageBatch;
use crate::error::{arg_err, config_err, Error, Result};
use crate::gan::{critic_loss_on, gradient_penalty, Critic, CriticSpec, Generator, PatchCritic};
use crate::nn::checkpoint::{self, Checkpoint};
use crate::nn::layers::{conv, instance_norm, up_conv, Architecture};
use crate::nn::{seeded_init, Adam, AdamConfig, Precision};
use crate::rng::stream_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CycleGeneratorSpec {
    pub input_size: usize,
    /// Width of the first `c7s1` block; the two down-sampling blocks double it twice.
    pub base_width: i64,
    pub res_blocks: usize,
}

impl CycleGeneratorSpec {
    pub fn full(input_size: usize) -> Self {
        Self { input_size, base_width: 64, res_blocks: 6 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_width < 1 || self.input_size < 8 || !self.input_size.is_multiple_of(4) {
            return Err(config_err(format!("cycle generator input {} must be a multiple of 4 and at least 8", self.input_size)));
        }
        Ok(())
    }
}

struct ResBlock {
    c1: nn::Conv2D,
    c2: nn::Conv2D,
}

impl ResBlock {
    fn forward(&self, x: &Tensor) -> Tensor {
        let h = instance_norm(&self.c1.forward(&x.reflection_pad2d([1, 1, 1, 1]))).relu();
        let h = instance_norm(&self.c2.forward(&h.reflection_pad2d([1, 1, 1, 1])));
        x + h
    }
}

/// ResNet image-to-image generator: `c7s1-k`, two `dk` stride-2 blocks, `Rk`
/// residual blocks, two `uk` up-convolutions and a final `c7s1-1` with tanh.
pub struct CycleGenerator {
    pub spec: CycleGeneratorSpec,
    pub vs: nn::VarStore,
    head: nn::Conv2D,
    downs: Vec<nn::Conv2D>,
    res: Vec<ResBlock>,
    ups: Vec<nn::ConvTranspose2D>,
    tail: nn::Conv2D,
    pub arch: Architecture,
}

impl std::fmt::Debug for CycleGenerator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CycleGenerator").field("spec", &self.spec).field("arch", &self.arch).finish()
    }
}

impl CycleGenerator {
    pub fn build(spec: &CycleGeneratorSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let vs = nn::VarStore::new(Device::Cpu);
        let root = vs.root();
        let mut arch = Architecture::default();
        let w = spec.base_width;
        let head = conv(&root / "head", 1, w, 7, 1, 0);
        arch.push(format!("c7s1-{w}"));
        let downs = vec![conv(&root / "d0", w, 2 * w, 3, 2, 1), conv(&root / "d1", 2 * w, 4 * w, 3, 2, 1)];
        arch.push(format!("d{}", 2 * w));
        arch.push(format!("d{}", 4 * w));
        let res = (0..spec.res_blocks)
            .map(|i| {
                arch.push(format!("R{}", 4 * w));
                ResBlock {
                    c1: conv(&root / format!("r{i}a"), 4 * w, 4 * w, 3, 1, 0),
                    c2: conv(&root / format!("r{i}b"), 4 * w, 4 * w, 3, 1, 0),
                }
            })
            .collect();
        let ups = vec![up_conv(&root / "u0", 4 * w, 2 * w), up_conv(&root / "u1", 2 * w, w)];
        arch.push(format!("u{}", 2 * w));
        arch.push(format!("u{w}"));
        let tail = conv(&root / "tail", w, 1, 7, 1, 0);
        arch.push("c7s1-1");
        seeded_init(&vs, seed);
        Ok(Self { spec: spec.clone(), vs, head, downs, res, ups, tail, arch })
    }

    /// Layer string with consecutive repeats folded, e.g. `R256×6`.
    pub fn arch_string(&self) -> String {
        let mut parts: Vec<(String, usize)> = Vec::new();
        for l in &self.arch.layers {
            match parts.last_mut() {
                Some((name, n)) if name == l => *n += 1,
                _ => parts.push((l.clone(), 1)),
            }
        }
        parts
            .into_iter()
            .map(|(name, n)| if n > 1 { format!("{name}×{n}") } else { name })
            .collect::<Vec<_>>()
            .join(",")
    }
}

impl Generator for CycleGenerator {
    fn generate(&self, x: &Tensor) -> Tensor {
        let mut h = instance_norm(&self.head.forward(&x.reflection_pad2d([3, 3, 3, 3]))).relu();
        for d in &self.downs {
            h = instance_norm(&d.forward(&h)).relu();
        }
        for r in &self.res {
            h = r.forward(&h);
        }
        for u in &self.ups {
            h = instance_norm(&u.forward(&h)).relu();
        }
        self.tail.forward(&h.reflection_pad2d([3, 3, 3, 3])).tanh()
    }
}

fn l1(a: &Tensor, b: &Tensor) -> Tensor {
    (a - b).abs().mean(None::<Kind>)
}

fn check_pair(a: &Tensor, b: &Tensor) -> Result<()> {
    let (sa, sb) = (a.size(), b.size());
    if sa.len() != 4 || sb.len() != 4 || sa[1..] != sb[1..] {
        return Err(arg_err(format!("domain batches {sa:?} and {sb:?} are not compatible image batches")));
    }
    Ok(())
}

/// `mean|a - G_ba(G_ab(a))| + mean|b - G_ab(G_ba(b))|`.
pub fn cycle_consistency_loss(g_ab: &dyn Generator, g_ba: &dyn Generator, a: &Tensor, b: &Tensor) -> Result<Tensor> {
    check_pair(a, b)?;
    Ok(l1(a, &g_ba.generate(&g_ab.generate(a))) + l1(b, &g_ab.generate(&g_ba.generate(b))))
}

/// `mean|G_ab(b) - b| + mean|G_ba(a) - a|`.
pub fn identity_loss(g_ab: &dyn Generator, g_ba: &dyn Generator, a: &Tensor, b: &Tensor) -> Result<Tensor> {
    check_pair(a, b)?;
    Ok(l1(&g_ab.generate(b), b) + l1(&g_ba.generate(a), a))
}

/// Borrowed view of the four networks.
#[derive(Clone, Copy)]
pub struct CycleNets<'a> {
    pub g_ab: &'a dyn Generator,
    pub g_ba: &'a dyn Generator,
    pub d_a: &'a dyn Critic,
    pub d_b: &'a dyn Critic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleWeights {
    pub lambda_cycle: f64,
    pub lambda_identity: f64,
    pub lambda_gp: f64,
}

impl Default for CycleWeights {
    fn default() -> Self {
        Self { lambda_cycle: 10.0, lambda_identity: 0.5, lambda_gp: 10.0 }
    }
}

impl CycleWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.lambda_cycle, self.lambda_identity, self.lambda_gp];
        if all.iter().any(|l| !l.is_finite() || *l < 0.0) {
            return Err(config_err("cycle loss weights must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Weighted terms of the full objective; `total` is their sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveBreakdown {
    /// WGAN-GP term of `G_ab` against `D_b`, penalty included.
    pub adversarial_ab: f64,
    pub adversarial_ba: f64,
    /// `lambda_cycle * cycle loss`.
    pub cycle: f64,
    /// `lambda_identity * identity loss`.
    pub identity: f64,
    pub total: f64,
}

/// Full objective: `W(G_ab, D_b) + W(G_ba, D_a) + lambda_cycle * L_cyc +
/// lambda_identity * L_id`, where `W(G, D)` is the critic loss of `D`
/// judging `G`'s translations against real target-domain images.
pub fn cycle_full_objective<R: Rng + ?Sized>(
    nets: CycleNets<'_>,
    a: &Tensor,
    b: &Tensor,
    w: &CycleWeights,
    rng: &mut R,
) -> Result<(Tensor, ObjectiveBreakdown)> {
    check_pair(a, b)?;
    let fake_b = nets.g_ab.generate(a);
    let fake_a = nets.g_ba.generate(b);
    let gp_b = gradient_penalty(nets.d_b, b, &fake_b, rng)?;
    let gp_a = gradient_penalty(nets.d_a, a, &fake_a, rng)?;
    let adv_ab = nets.d_b.critic(&fake_b).mean(None::<Kind>) - nets.d_b.critic(b).mean(None::<Kind>) + gp_b * w.lambda_gp;
    let adv_ba = nets.d_a.critic(&fake_a).mean(None::<Kind>) - nets.d_a.critic(a).mean(None::<Kind>) + gp_a * w.lambda_gp;
    let cyc = cycle_consistency_loss(nets.g_ab, nets.g_ba, a, b)? * w.lambda_cycle;
    let idt = identity_loss(nets.g_ab, nets.g_ba, a, b)? * w.lambda_identity;
    let breakdown = ObjectiveBreakdown {
        adversarial_ab: adv_ab.double_value(&[]),
        adversarial_ba: adv_ba.double_value(&[]),
        cycle: cyc.double_value(&[]),
        identity: idt.double_value(&[]),
        total: 0.0,
    };
    let total = adv_ab + adv_ba + cyc + idt;
    let breakdown = ObjectiveBreakdown { total: total.double_value(&[]), ..breakdown };
    Ok((total, breakdown))
}

/// Constant rate for `constant_epochs`, then linear decay to zero over
/// `decay_epochs`. `epoch` counts completed epochs from 0.
pub fn learning_rate_at(base: f64, epoch: usize, constant_epochs: usize, decay_epochs: usize) -> f64 {
    if epoch < constant_epochs {
        return base;
    }
    if decay_epochs == 0 {
        return 0.0;
    }
    (base * (1.0 - (epoch - constant_epochs) as f64 / decay_epochs as f64)).max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CycleTrainConfig {
    pub constant_epochs: usize,
    pub decay_epochs: usize,
    pub batch_size: usize,
    pub n_critic: usize,
    pub weights: CycleWeights,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for CycleTrainConfig {
    fn default() -> Self {
        Self {
            constant_epochs: 100,
            decay_epochs: 100,
            batch_size: 1,
            n_critic: 5,
            weights: CycleWeights::default(),
            adam: AdamConfig { lr: 2e-4, beta1: 0.5, beta2: 0.999, eps: 1e-8 },
            seed: 0,
        }
    }
}

impl CycleTrainConfig {
    pub fn epochs(&self) -> usize {
        self.constant_epochs + self.decay_epochs
    }

    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if self.batch_size == 0 || self.n_critic == 0 {
            return Err(config_err("batch_size and n_critic must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleEpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub critic_a: f64,
    pub critic_b: f64,
    pub penalty: f64,
    pub generator_adv: f64,
    pub cycle: f64,
    pub identity: f64,
    pub generator_total: f64,
    pub iterations: usize,
}

impl CycleEpochLog {
    pub const HEADER: &'static str = "epoch lr critic_a critic_b penalty generator_adv cycle identity generator_total iterations";

    pub fn line(&self) -> String {
        format!(
            "{} {:.6e} {:.9e} {:.9e} {:.9e} {:.9e} {:.9e} {:.9e} {:.9e} {}",
            self.epoch,
            self.lr,
            self.critic_a,
            self.critic_b,
            self.penalty,
            self.generator_adv,
            self.cycle,
            self.identity,
            self.generator_total,
            self.iterations
        )
    }
}

pub const CYCLE_CHECKPOINT_KIND: &str = "cycle-wgan-gp";
const NETS: [&str; 4] = ["g_ab", "g_ba", "d_a", "d_b"];

/// The four networks of a translation model.
pub struct CycleModelSet {
    pub g_ab: CycleGenerator,
    pub g_ba: CycleGenerator,
    pub d_a: PatchCritic,
    pub d_b: PatchCritic,
}

impl CycleModelSet {
    pub fn build(gen: &CycleGeneratorSpec, critic: &CriticSpec, seed: u64) -> Result<Self> {
        if gen.input_size != critic.input_size {
            return Err(config_err("generator and critic sizes differ"));
        }
        Ok(Self {
            g_ab: CycleGenerator::build(gen, seed)?,
            g_ba: CycleGenerator::build(gen, seed.wrapping_add(1))?,
            d_a: PatchCritic::build(critic, Precision::Single, seed.wrapping_add(2))?,
            d_b: PatchCritic::build(critic, Precision::Single, seed.wrapping_add(3))?,
        })
    }

    pub fn nets(&self) -> CycleNets<'_> {
        CycleNets { g_ab: &self.g_ab, g_ba: &self.g_ba, d_a: &self.d_a, d_b: &self.d_b }
    }

    fn stores(&self) -> [&nn::VarStore; 4] {
        [&self.g_ab.vs, &self.g_ba.vs, &self.d_a.vs, &self.d_b.vs]
    }
}

/// Applies a generator; output has the input's shape and lies in `[-1, 1]`.
pub fn translate(g: &CycleGenerator, images: &ImageBatch) -> Result<ImageBatch> {
    let s = g.spec.input_size;
    if images.height() != s || images.width() != s {
        return Err(arg_err(format!("images are {}x{}, generator expects {s}x{s}", images.height(), images.width())));
    }
    if images.is_empty() {
        return Ok(images.clone());
    }
    ImageBatch::from_tensor(&tch::no_grad(|| g.generate(&images.to_tensor(Kind::Float))))
}

/// Held-out round-trip error `mean|x - G_ba(G_ab(x))|` over domain-A images.
pub fn round_trip_l1(models: &CycleModelSet, a: &ImageBatch) -> Result<f64> {
    let there = translate(&models.g_ab, a)?;
    let back = translate(&models.g_ba, &there)?;
    let n = a.data().len().max(1) as f64;
    Ok(a.data().iter().zip(back.data()).map(|(x, y)| (x - y).abs() as f64).sum::<f64>() / n)
}

pub struct CycleTrainer {
    pub models: CycleModelSet,
    pub cfg: CycleTrainConfig,
    opts: Vec<Adam>,
    pub epochs_done: usize,
}

impl CycleTrainer {
    pub fn new(gen: &CycleGeneratorSpec, critic: &CriticSpec, cfg: CycleTrainConfig) -> Result<Self> {
        cfg.validate()?;
        let models = CycleModelSet::build(gen, critic, cfg.seed)?;
        let opts = models.stores().iter().map(|vs| Adam::new(vs, cfg.adam)).collect();
        Ok(Self { models, cfg, opts, epochs_done: 0 })
    }

    fn zero_all(&self) {
        for (opt, vs) in self.opts.iter().zip(self.models.stores()) {
            opt.zero_grad(vs);
        }
    }

    /// One pass over the larger domain; the smaller one is resampled with
    /// replacement. Each iteration makes `n_critic` updates of both critics
    /// on the iteration's batch, then one update of both generators.
    pub fn train_epoch(&mut self, domain_a: &ImageBatch, domain_b: &ImageBatch) -> Result<CycleEpochLog> {
        if domain_a.is_empty() || domain_b.is_empty() {
            return Err(config_err("both translation domains need at least one image"));
        }
        let s = self.models.g_ab.spec.input_size;
        for d in [domain_a, domain_b] {
            if d.height() != s || d.width() != s {
                return Err(config_err(format!("domain images are {}x{}, networks expect {s}x{s}", d.height(), d.width())));
            }
        }
        let epoch = self.epochs_done + 1;
        let lr = learning_rate_at(self.cfg.adam.lr, self.epochs_done, self.cfg.constant_epochs, self.cfg.decay_epochs);
        self.opts.iter_mut().for_each(|o| o.set_lr(lr));
        let mut rng = stream_rng(self.cfg.seed, epoch as u64);
        let a_larger = domain_a.len() >= domain_b.len();
        let (big, small) = if a_larger { (domain_a, domain_b) } else { (domain_b, domain_a) };
        let mut order: Vec<usize> = (0..big.len()).collect();
        order.shuffle(&mut rng);
        let w = self.cfg.weights;
        let mut sums = [0.0f64; 7];
        let mut iterations = 0;
        for (it, chunk) in order.chunks(self.cfg.batch_size).enumerate() {
            let other: Vec<usize> = (0..chunk.len()).map(|_| rng.random_range(0..small.len())).collect();
            let (bb, sb) = (big.select(chunk).to_tensor(Kind::Float), small.select(&other).to_tensor(Kind::Float));
            let (a, b) = if a_larger { (bb, sb) } else { (sb, bb) };
            let diverged = |what: &str, v: f64| Error::Diverged { epoch, iteration: it, reason: format!("{what} is {v}") };

            let (fake_b, fake_a) = tch::no_grad(|| (self.models.g_ab.generate(&a), self.models.g_ba.generate(&b)));
            let (mut ca, mut cb, mut pen) = (0.0, 0.0, 0.0);
            for _ in 0..self.cfg.n_critic {
                self.zero_all();
                let lb = critic_loss_on(&self.models.d_b, &b, &fake_b, w.lambda_gp, &mut rng)?;
                let la = critic_loss_on(&self.models.d_a, &a, &fake_a, w.lambda_gp, &mut rng)?;
                let (va, vb) = (la.total.double_value(&[]), lb.total.double_value(&[]));
                if !(va.is_finite() && vb.is_finite()) {
                    return Err(diverged("critic loss", va + vb));
                }
                (la.total + lb.total).backward();
                self.opts[2].step(&self.models.d_a.vs);
                self.opts[3].step(&self.models.d_b.vs);
                ca += va;
                cb += vb;
                pen += (la.penalty + lb.penalty) / 2.0;
            }
            let nc = self.cfg.n_critic as f64;

            self.zero_all();
            let nets = self.models.nets();
            let adv = -nets.d_b.critic(&nets.g_ab.generate(&a)).mean(None::<Kind>)
                - nets.d_a.critic(&nets.g_ba.generate(&b)).mean(None::<Kind>);
            let cyc = cycle_consistency_loss(nets.g_ab, nets.g_ba, &a, &b)?;
            let idt = identity_loss(nets.g_ab, nets.g_ba, &a, &b)?;
            let (v_adv, v_cyc, v_idt) = (adv.double_value(&[]), cyc.double_value(&[]), idt.double_value(&[]));
            let total = adv + cyc * w.lambda_cycle + idt * w.lambda_identity;
            let v_total = total.double_value(&[]);
            if !v_total.is_finite() {
                return Err(diverged("generator loss", v_total));
            }
            total.backward();
            self.opts[0].step(&self.models.g_ab.vs);
            self.opts[1].step(&self.models.g_ba.vs);
            self.zero_all();

            for (acc, v) in sums.iter_mut().zip([ca / nc, cb / nc, pen / nc, v_adv, v_cyc, v_idt, v_total]) {
                *acc += v;
            }
            iterations += 1;
        }
        self.epochs_done = epoch;
        let m = |i: usize| sums[i] / iterations as f64;
        Ok(CycleEpochLog {
            epoch,
            lr,
            critic_a: m(0),
            critic_b: m(1),
            penalty: m(2),
            generator_adv: m(3),
            cycle: m(4),
            identity: m(5),
            generator_total: m(6),
            iterations,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let spec = serde_json::json!({
            "generator": self.models.g_ab.spec,
            "critic": self.models.d_a.spec,
            "train": self.cfg,
        });
        let steps: Vec<u64> = self.opts.iter().map(Adam::steps_taken).collect();
        let meta = serde_json::json!({ "epochs_done": self.epochs_done, "adam_steps": steps });
        let mut ck = Checkpoint::new(CYCLE_CHECKPOINT_KIND, spec, meta);
        for ((name, vs), opt) in NETS.iter().zip(self.models.stores()).zip(&self.opts) {
            ck.insert_prefixed(&format!("{name}."), checkpoint::var_tensors(vs));
            ck.insert_prefixed(&format!("{name}."), opt.state_tensors());
        }
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_kind(CYCLE_CHECKPOINT_KIND)?;
        let part = |key: &str| ck.spec.get(key).cloned().ok_or_else(|| Error::Checkpoint(format!("spec lacks {key}")));
        let bad = |e: serde_json::Error| Error::Checkpoint(e.to_string());
        let gen: CycleGeneratorSpec = serde_json::from_value(part("generator")?).map_err(bad)?;
        let critic: CriticSpec = serde_json::from_value(part("critic")?).map_err(bad)?;
        let cfg: CycleTrainConfig = serde_json::from_value(part("train")?).map_err(bad)?;
        let mut t = Self::new(&gen, &critic, cfg)?;
        let epochs_done = ck.meta.get("epochs_done").and_then(|v| v.as_u64()).ok_or_else(|| Error::Checkpoint("meta lacks epochs_done".into()))?;
        let steps: Vec<u64> = ck
            .meta
            .get("adam_steps")
            .and_then(|v| serde_json::from_value(v.clone()).ok())
            .ok_or_else(|| Error::Checkpoint("meta lacks adam_steps".into()))?;
        let lr = learning_rate_at(t.cfg.adam.lr, epochs_done as usize, t.cfg.constant_epochs, t.cfg.decay_epochs);
        for (i, name) in NETS.iter().enumerate() {
            let tensors = ck.with_prefix(&format!("{name}."));
            checkpoint::load_into(t.models.stores()[i], &tensors)?;
            t.opts[i].restore(steps.get(i).copied().unwrap_or(0), lr, &tensors)?;
        }
        t.epochs_done = epochs_done as usize;
        Ok(t)
    }
}

/// Trains for the configured number of epochs from scratch.
pub fn train_cycle_wgan_gp(
    domain_a: &ImageBatch,
    domain_b: &ImageBatch,
    gen: &CycleGeneratorSpec,
    critic: &CriticSpec,
    cfg: CycleTrainConfig,
) -> Result<(CycleTrainer, Vec<CycleEpochLog>)> {
    let mut t = CycleTrainer::new(gen, critic, cfg)?;
    let log = (0..t.cfg.epochs()).map(|_| t.train_epoch(domain_a, domain_b)).collect::<Result<Vec<_>>>()?;
    Ok((t, log))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn px(v: f64) -> Tensor {
        Tensor::from_slice(&[v]).view([1, 1, 1, 1])
    }

    #[test]
    fn exact_inverse_pair_has_zero_cycle_loss() {
        let up = |x: &Tensor| x + 1.0;
        let down = |x: &Tensor| x - 1.0;
        let v = cycle_consistency_loss(&up, &down, &px(0.3), &px(-0.4)).unwrap().double_value(&[]);
        assert!(v.abs() < 1e-12);
    }

    #[test]
    fn doubling_generator_cycle_loss() {
        let double = |x: &Tensor| x * 2.0;
        let same = |x: &Tensor| x.shallow_clone();
        let ones = Tensor::ones([1, 1, 2, 2], (Kind::Double, Device::Cpu));
        assert_eq!(cycle_consistency_loss(&double, &same, &ones, &ones).unwrap().double_value(&[]), 2.0);
    }

    #[test]
    fn identity_loss_arithmetic() {
        let shift = |x: &Tensor| x + 0.5;
        let same = |x: &Tensor| x.shallow_clone();
        assert!((identity_loss(&shift, &same, &px(0.1), &px(0.2)).unwrap().double_value(&[]) - 0.5).abs() < 1e-15);
        assert_eq!(identity_loss(&same, &same, &px(0.1), &px(0.2)).unwrap().double_value(&[]), 0.0);
    }

    #[test]
    fn identity_generators_zero_critics() {
        let same = |x: &Tensor| x.shallow_clone();
        let zero = |x: &Tensor| (x * 0.0).sum_dim_intlist([1i64, 2, 3].as_slice(), false, None::<Kind>);
        let nets = CycleNets { g_ab: &same, g_ba: &same, d_a: &zero, d_b: &zero };
        let a = Tensor::from_slice(&[0.2, -0.4]).view([2, 1, 1, 1]);
        let b = Tensor::from_slice(&[0.7, 0.1]).view([2, 1, 1, 1]);
        let mut rng = stream_rng(0, 0);
        let (_, br) = cycle_full_objective(nets, &a, &b, &CycleWeights::default(), &mut rng).unwrap();
        assert!((br.total - 20.0).abs() < 1e-12);
        assert_eq!((br.cycle, br.identity), (0.0, 0.0));
    }

    #[test]
    fn schedule_values() {
        assert_eq!(learning_rate_at(2e-4, 0, 100, 100), 2e-4);
        assert_eq!(learning_rate_at(2e-4, 99, 100, 100), 2e-4);
        assert!((learning_rate_at(2e-4, 150, 100, 100) - 1e-4).abs() < 1e-18);
        assert_eq!(learning_rate_at(2e-4, 200, 100, 100), 0.0);
    }

    #[test]
    fn full_generator_layer_string() {
        let g = CycleGenerator::build(&CycleGeneratorSpec::full(32), 0).unwrap();
        assert_eq!(g.arch_string(), "c7s1-64,d128,d256,R256×6,u128,u64,c7s1-1");
    }

    #[test]
    fn translate_keeps_shape_and_range() {
        let g = CycleGenerator::build(&CycleGeneratorSpec { input_size: 16, base_width: 4, res_blocks: 1 }, 2).unwrap();
        let x = ImageBatch::filled(2, 16, 16, 0.9);
        let y = translate(&g, &x).unwrap();
        assert_eq!(y.shape(), x.shape());
        assert!(y.is_in_range());
        assert!(translate(&g, &ImageBatch::filled(1, 8, 8, 0.0)).is_err());
    }
}
