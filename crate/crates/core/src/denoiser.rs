//! Noise-prediction networks: a plain U-Net, a U-Net with residual blocks and
//! self-attention, and a ConvNeXt-block U-Net.

use std::path::Path;

use serde::{Deserialize, Serialize};
use tch::nn::{self, Module, VarStore};
use tch::{Device, Kind, Tensor};

use crate::batch::ImageBatch;
use crate::error::{arg_err, config_err, Result};
use crate::nn::layers::{conv, depthwise, Architecture, GroupNorm};
use crate::nn::{checkpoint, parameter_count, seeded_init, Adam, Checkpoint, Precision};

pub const CHECKPOINT_KIND: &str = "denoiser";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DenoiserVariant {
    Vanilla,
    ResnetAttention,
    Convnext,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenoiserSpec {
    pub variant: DenoiserVariant,
    /// Padded square input size.
    pub input_size: usize,
    pub base_channels: usize,
    /// Channel multiplier per resolution level; its length is the level count.
    pub channel_mults: Vec<usize>,
    pub time_embed_dim: usize,
    /// Residual (or ConvNeXt) blocks per level on the way down.
    pub res_blocks: usize,
    /// Self-attention at this many of the coarsest levels.
    pub attention_levels: usize,
    pub norm_groups: usize,
    /// Diffusion step count the network is conditioned for.
    pub timesteps: usize,
}

impl DenoiserSpec {
    /// vDDPM-v1 at full size: 112x112 pooled down to 3x3.
    pub fn vanilla_full() -> Self {
        Self {
            variant: DenoiserVariant::Vanilla,
            input_size: 112,
            base_channels: 32,
            channel_mults: vec![1, 2, 4, 8, 8, 8],
            time_embed_dim: 128,
            res_blocks: 1,
            attention_levels: 0,
            norm_groups: 1,
            timesteps: 1000,
        }
    }

    /// DDPM-v2 at full size.
    pub fn resnet_attention_full() -> Self {
        Self {
            variant: DenoiserVariant::ResnetAttention,
            input_size: 112,
            base_channels: 64,
            channel_mults: vec![1, 2, 2, 4],
            time_embed_dim: 128,
            res_blocks: 2,
            attention_levels: 2,
            norm_groups: 8,
            timesteps: 1000,
        }
    }

    /// DDPM-Conv at full size.
    pub fn convnext_full() -> Self {
        Self { variant: DenoiserVariant::Convnext, ..Self::resnet_attention_full() }
    }

    /// Reduced profile that trains on a CPU.
    pub fn desk(variant: DenoiserVariant) -> Self {
        Self {
            variant,
            input_size: 32,
            base_channels: 32,
            channel_mults: vec![1, 2, 2],
            time_embed_dim: 64,
            res_blocks: if variant == DenoiserVariant::Vanilla { 1 } else { 2 },
            attention_levels: if variant == DenoiserVariant::Vanilla { 0 } else { 1 },
            norm_groups: if variant == DenoiserVariant::Vanilla { 1 } else { 8 },
            timesteps: 1000,
        }
    }

    /// Tiny network for gradient checks and plumbing tests.
    pub fn tiny(variant: DenoiserVariant) -> Self {
        Self {
            variant,
            input_size: 8,
            base_channels: 4,
            channel_mults: vec![1, 2],
            time_embed_dim: 8,
            res_blocks: 1,
            attention_levels: if variant == DenoiserVariant::Vanilla { 0 } else { 1 },
            norm_groups: if variant == DenoiserVariant::Vanilla { 1 } else { 2 },
            timesteps: 10,
        }
    }

    pub fn channels(&self) -> Vec<i64> {
        self.channel_mults.iter().map(|m| (m * self.base_channels) as i64).collect()
    }

    /// Spatial size at each level, finest first.
    pub fn level_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.input_size];
        for _ in 1..self.channel_mults.len() {
            let s = *sizes.last().unwrap();
            sizes.push(match self.variant {
                // 2x2 max pooling floors
                DenoiserVariant::Vanilla => s / 2,
                // stride-2 3x3 convolution with padding 1 rounds up
                _ => s.div_ceil(2),
            });
        }
        sizes
    }

    pub fn validate(&self) -> Result<()> {
        if self.channel_mults.is_empty() || self.channel_mults.contains(&0) {
            return Err(config_err("channel_mults must be nonempty and positive"));
        }
        if self.base_channels == 0 || self.input_size == 0 || self.timesteps == 0 || self.norm_groups == 0 {
            return Err(config_err("sizes, channels, timesteps and norm_groups must be positive"));
        }
        if self.time_embed_dim == 0 || !self.time_embed_dim.is_multiple_of(2) {
            return Err(config_err(format!("time_embed_dim must be even, got {}", self.time_embed_dim)));
        }
        if self.variant != DenoiserVariant::Vanilla && self.res_blocks == 0 {
            return Err(config_err("res_blocks must be at least 1"));
        }
        if self.attention_levels > self.channel_mults.len() {
            return Err(config_err("attention_levels exceeds the number of levels"));
        }
        let sizes = self.level_sizes();
        if let Some(pos) = sizes.iter().position(|&s| s < 2) {
            return Err(config_err(format!(
                "input size {} is too small for {} levels (level {pos} would be {}x{})",
                self.input_size,
                self.channel_mults.len(),
                sizes[pos],
                sizes[pos]
            )));
        }
        Ok(())
    }
}

/// Sinusoidal embedding of a step index: interleaved `(sin, cos)` pairs at
/// frequencies `10000^(-2k/dim)`.
pub fn sinusoidal_time_embedding(t: f64, dim: usize) -> Result<Vec<f64>> {
    if dim == 0 || !dim.is_multiple_of(2) {
        return Err(config_err(format!("embedding dimension must be even and positive, got {dim}")));
    }
    let mut out = Vec::with_capacity(dim);
    for k in 0..dim / 2 {
        let freq = 10000f64.powf(-2.0 * k as f64 / dim as f64);
        out.push((t * freq).sin());
        out.push((t * freq).cos());
    }
    Ok(out)
}

fn time_embedding_tensor(t: &[usize], dim: usize, kind: Kind) -> Tensor {
    let mut flat = Vec::with_capacity(t.len() * dim);
    for &step in t {
        flat.extend(sinusoidal_time_embedding(step as f64, dim).expect("validated dim"));
    }
    Tensor::from_slice(&flat).view([t.len() as i64, dim as i64]).to_kind(kind)
}

fn silu(x: &Tensor) -> Tensor {
    x.silu()
}

fn broadcast_time(proj: &nn::Linear, emb: &Tensor) -> Tensor {
    proj.forward(&emb.silu()).unsqueeze(-1).unsqueeze(-1)
}

fn upsample_to(x: &Tensor, like: &Tensor) -> Tensor {
    let size = like.size();
    x.upsample_nearest2d([size[2], size[3]], None, None)
}

#[derive(Debug)]
struct PlainBlock {
    conv1: nn::Conv2D,
    norm1: GroupNorm,
    time: nn::Linear,
    conv2: nn::Conv2D,
    norm2: GroupNorm,
}

impl PlainBlock {
    fn new(p: nn::Path, c_in: i64, c_out: i64, t_dim: i64, arch: &mut Architecture, tag: &str) -> Self {
        arch.push(format!("{tag}: conv3x3({c_in}->{c_out}) layernorm silu +time conv3x3({c_out}->{c_out}) layernorm silu"));
        Self {
            conv1: conv(&p / "conv1", c_in, c_out, 3, 1, 1),
            norm1: GroupNorm::new(&p / "norm1", 1, c_out),
            time: nn::linear(&p / "time", t_dim, c_out, Default::default()),
            conv2: conv(&p / "conv2", c_out, c_out, 3, 1, 1),
            norm2: GroupNorm::new(&p / "norm2", 1, c_out),
        }
    }

    fn forward(&self, x: &Tensor, emb: &Tensor) -> Tensor {
        let h = silu(&self.norm1.forward(&self.conv1.forward(x)));
        let h = h + broadcast_time(&self.time, emb);
        silu(&self.norm2.forward(&self.conv2.forward(&h)))
    }
}

#[derive(Debug)]
struct ResBlock {
    norm1: GroupNorm,
    conv1: nn::Conv2D,
    time: nn::Linear,
    norm2: GroupNorm,
    conv2: nn::Conv2D,
    skip: Option<nn::Conv2D>,
}

impl ResBlock {
    fn new(p: nn::Path, c_in: i64, c_out: i64, t_dim: i64, groups: i64, arch: &mut Architecture, tag: &str) -> Self {
        arch.push(format!("{tag}: resblock({c_in}->{c_out}) groupnorm silu conv3x3 +time groupnorm silu conv3x3"));
        Self {
            norm1: GroupNorm::new(&p / "norm1", groups, c_in),
            conv1: conv(&p / "conv1", c_in, c_out, 3, 1, 1),
            time: nn::linear(&p / "time", t_dim, c_out, Default::default()),
            norm2: GroupNorm::new(&p / "norm2", groups, c_out),
            conv2: conv(&p / "conv2", c_out, c_out, 3, 1, 1),
            skip: (c_in != c_out).then(|| conv(&p / "skip", c_in, c_out, 1, 1, 0)),
        }
    }

    fn forward(&self, x: &Tensor, emb: &Tensor) -> Tensor {
        let h = self.conv1.forward(&silu(&self.norm1.forward(x)));
        let h = h + broadcast_time(&self.time, emb);
        let h = self.conv2.forward(&silu(&self.norm2.forward(&h)));
        match &self.skip {
            Some(s) => s.forward(x) + h,
            None => x + h,
        }
    }
}

#[derive(Debug)]
struct ConvNextBlock {
    dw: nn::Conv2D,
    time: nn::Linear,
    norm: GroupNorm,
    pw1: nn::Conv2D,
    pw2: nn::Conv2D,
    skip: Option<nn::Conv2D>,
}

impl ConvNextBlock {
    fn new(p: nn::Path, c_in: i64, c_out: i64, t_dim: i64, arch: &mut Architecture, tag: &str) -> Self {
        arch.push(format!(
            "{tag}: convnext({c_in}->{c_out}) depthwise7x7 +time layernorm conv1x1({c_in}->{}) gelu conv1x1",
            4 * c_out
        ));
        Self {
            dw: depthwise(&p / "dw", c_in, 7),
            time: nn::linear(&p / "time", t_dim, c_in, Default::default()),
            norm: GroupNorm::new(&p / "norm", 1, c_in),
            pw1: conv(&p / "pw1", c_in, 4 * c_out, 1, 1, 0),
            pw2: conv(&p / "pw2", 4 * c_out, c_out, 1, 1, 0),
            skip: (c_in != c_out).then(|| conv(&p / "skip", c_in, c_out, 1, 1, 0)),
        }
    }

    fn forward(&self, x: &Tensor, emb: &Tensor) -> Tensor {
        let h = self.dw.forward(x) + broadcast_time(&self.time, emb);
        let h = self.pw1.forward(&self.norm.forward(&h)).gelu("none");
        let h = self.pw2.forward(&h);
        match &self.skip {
            Some(s) => s.forward(x) + h,
            None => x + h,
        }
    }
}

#[derive(Debug)]
enum Block {
    Res(ResBlock),
    ConvNext(ConvNextBlock),
}

impl Block {
    #[allow(clippy::too_many_arguments)]
    fn new(
        variant: DenoiserVariant,
        p: nn::Path,
        c_in: i64,
        c_out: i64,
        t_dim: i64,
        groups: i64,
        arch: &mut Architecture,
        tag: &str,
    ) -> Self {
        match variant {
            DenoiserVariant::Convnext => Block::ConvNext(ConvNextBlock::new(p, c_in, c_out, t_dim, arch, tag)),
            _ => Block::Res(ResBlock::new(p, c_in, c_out, t_dim, groups, arch, tag)),
        }
    }

    fn forward(&self, x: &Tensor, emb: &Tensor) -> Tensor {
        match self {
            Block::Res(b) => b.forward(x, emb),
            Block::ConvNext(b) => b.forward(x, emb),
        }
    }
}

/// Single-head self-attention over spatial positions.
#[derive(Debug)]
struct Attention {
    norm: GroupNorm,
    qkv: nn::Conv2D,
    proj: nn::Conv2D,
    channels: i64,
}

impl Attention {
    fn new(p: nn::Path, c: i64, groups: i64, arch: &mut Architecture, tag: &str) -> Self {
        arch.push(format!("{tag}: self-attention({c})"));
        Self {
            norm: GroupNorm::new(&p / "norm", groups, c),
            qkv: conv(&p / "qkv", c, 3 * c, 1, 1, 0),
            proj: conv(&p / "proj", c, c, 1, 1, 0),
            channels: c,
        }
    }

    fn forward(&self, x: &Tensor) -> Tensor {
        let (b, c, h, w) = x.size4().expect("4-d input");
        let qkv = self.qkv.forward(&self.norm.forward(x)).view([b, 3, c, h * w]);
        let q = qkv.select(1, 0).transpose(1, 2);
        let k = qkv.select(1, 1);
        let v = qkv.select(1, 2).transpose(1, 2);
        let attn = (q.matmul(&k) / (self.channels as f64).sqrt()).softmax(-1, q.kind());
        let out = attn.matmul(&v).transpose(1, 2).reshape([b, c, h, w]);
        x + self.proj.forward(&out)
    }
}

#[derive(Debug)]
struct TimeMlp {
    l1: nn::Linear,
    l2: nn::Linear,
    dim: usize,
}

impl TimeMlp {
    fn new(p: nn::Path, dim: usize, arch: &mut Architecture) -> Self {
        let d = dim as i64;
        arch.push(format!("time: sinusoidal({dim}) linear({d}->{}) silu linear", 4 * d));
        Self {
            l1: nn::linear(&p / "l1", d, 4 * d, Default::default()),
            l2: nn::linear(&p / "l2", 4 * d, 4 * d, Default::default()),
            dim,
        }
    }

    fn forward(&self, t: &[usize], kind: Kind) -> Tensor {
        let e = time_embedding_tensor(t, self.dim, kind);
        self.l2.forward(&self.l1.forward(&e).silu())
    }
}

#[derive(Debug)]
struct VanillaUnet {
    time: TimeMlp,
    down: Vec<PlainBlock>,
    up: Vec<PlainBlock>,
    out: nn::Conv2D,
}

impl VanillaUnet {
    fn new(p: nn::Path, spec: &DenoiserSpec, arch: &mut Architecture) -> Self {
        let ch = spec.channels();
        let t_dim = 4 * spec.time_embed_dim as i64;
        let time = TimeMlp::new(&p / "time", spec.time_embed_dim, arch);
        let sizes = spec.level_sizes();
        let mut down = Vec::new();
        let mut c_prev = 1;
        for (i, &c) in ch.iter().enumerate() {
            down.push(PlainBlock::new(&p / "down" / i, c_prev, c, t_dim, arch, &format!("down{i}@{0}x{0}", sizes[i])));
            if i + 1 < ch.len() {
                arch.push(format!("maxpool2x2 {0}x{0}->{1}x{1}", sizes[i], sizes[i + 1]));
            }
            c_prev = c;
        }
        let mut up = Vec::new();
        for i in (0..ch.len() - 1).rev() {
            arch.push(format!("upsample {0}x{0}->{1}x{1} concat", sizes[i + 1], sizes[i]));
            up.push(PlainBlock::new(&p / "up" / i, ch[i + 1] + ch[i], ch[i], t_dim, arch, &format!("up{i}@{0}x{0}", sizes[i])));
        }
        arch.push(format!("out: conv1x1({}->1)", ch[0]));
        let out = conv(&p / "out", ch[0], 1, 1, 1, 0);
        Self { time, down, up, out }
    }

    fn forward(&self, x: &Tensor, t: &[usize], trace: &mut Vec<Vec<i64>>) -> Tensor {
        let emb = self.time.forward(t, x.kind());
        let mut skips = Vec::new();
        let mut h = x.shallow_clone();
        for (i, block) in self.down.iter().enumerate() {
            if i > 0 {
                h = h.max_pool2d([2, 2], [2, 2], [0, 0], [1, 1], false);
            }
            h = block.forward(&h, &emb);
            trace.push(h.size());
            skips.push(h.shallow_clone());
        }
        skips.pop();
        for block in &self.up {
            let skip = skips.pop().expect("one skip per level");
            h = Tensor::cat(&[upsample_to(&h, &skip), skip], 1);
            h = block.forward(&h, &emb);
            trace.push(h.size());
        }
        self.out.forward(&h)
    }
}

#[derive(Debug)]
struct Level {
    blocks: Vec<(Block, Option<Attention>)>,
}

impl Level {
    fn forward(&self, mut h: Tensor, emb: &Tensor) -> Tensor {
        for (block, attn) in &self.blocks {
            h = block.forward(&h, emb);
            if let Some(a) = attn {
                h = a.forward(&h);
            }
        }
        h
    }
}

#[derive(Debug)]
struct BlockUnet {
    time: TimeMlp,
    conv_in: nn::Conv2D,
    down: Vec<Level>,
    downsample: Vec<nn::Conv2D>,
    mid1: Block,
    mid_attn: Attention,
    mid2: Block,
    upsample: Vec<nn::Conv2D>,
    up: Vec<Level>,
    out_norm: GroupNorm,
    out: nn::Conv2D,
}

impl BlockUnet {
    fn new(p: nn::Path, spec: &DenoiserSpec, arch: &mut Architecture) -> Self {
        let v = spec.variant;
        let ch = spec.channels();
        let levels = ch.len();
        let groups = spec.norm_groups as i64;
        let t_dim = 4 * spec.time_embed_dim as i64;
        let sizes = spec.level_sizes();
        let attn_from = levels - spec.attention_levels;
        let time = TimeMlp::new(&p / "time", spec.time_embed_dim, arch);
        arch.push(format!("conv_in: conv3x3(1->{})", ch[0]));
        let conv_in = conv(&p / "conv_in", 1, ch[0], 3, 1, 1);

        let mut down = Vec::new();
        let mut downsample = Vec::new();
        let mut c_prev = ch[0];
        for (i, &c) in ch.iter().enumerate() {
            let lp = &p / "down" / i;
            let mut blocks = Vec::new();
            for j in 0..spec.res_blocks {
                let tag = format!("down{i}.{j}@{0}x{0}", sizes[i]);
                let block = Block::new(v, &lp / "block" / j, c_prev, c, t_dim, groups, arch, &tag);
                let attn = (i >= attn_from).then(|| Attention::new(&lp / "attn" / j, c, groups, arch, &tag));
                blocks.push((block, attn));
                c_prev = c;
            }
            down.push(Level { blocks });
            if i + 1 < levels {
                arch.push(format!("downsample conv3x3/2 {0}x{0}->{1}x{1}", sizes[i], sizes[i + 1]));
                downsample.push(conv(&lp / "downsample", c, c, 3, 2, 1));
            }
        }

        let c_mid = ch[levels - 1];
        let mid1 = Block::new(v, &p / "mid1", c_mid, c_mid, t_dim, groups, arch, "mid");
        let mid_attn = Attention::new(&p / "mid_attn", c_mid, groups, arch, "mid");
        let mid2 = Block::new(v, &p / "mid2", c_mid, c_mid, t_dim, groups, arch, "mid");

        let mut up = Vec::new();
        let mut upsample = Vec::new();
        let mut c_prev = c_mid;
        for i in (0..levels).rev() {
            let lp = &p / "up" / i;
            if i + 1 < levels {
                arch.push(format!("upsample nearest+conv3x3 {0}x{0}->{1}x{1}", sizes[i + 1], sizes[i]));
                upsample.push(conv(&lp / "upsample", c_prev, c_prev, 3, 1, 1));
            }
            let c = ch[i];
            let mut blocks = Vec::new();
            for j in 0..spec.res_blocks {
                let c_in = if j == 0 { c_prev + c } else { c };
                let tag = format!("up{i}.{j}@{0}x{0}", sizes[i]);
                let block = Block::new(v, &lp / "block" / j, c_in, c, t_dim, groups, arch, &tag);
                let attn = (i >= attn_from).then(|| Attention::new(&lp / "attn" / j, c, groups, arch, &tag));
                blocks.push((block, attn));
            }
            up.push(Level { blocks });
            c_prev = c;
        }
        arch.push(format!("out: groupnorm silu conv3x3({}->1)", ch[0]));
        let out_norm = GroupNorm::new(&p / "out_norm", groups, ch[0]);
        let out = conv(&p / "out", ch[0], 1, 3, 1, 1);
        Self { time, conv_in, down, downsample, mid1, mid_attn, mid2, upsample, up, out_norm, out }
    }

    fn forward(&self, x: &Tensor, t: &[usize], trace: &mut Vec<Vec<i64>>) -> Tensor {
        let emb = self.time.forward(t, x.kind());
        let mut h = self.conv_in.forward(x);
        let mut skips = Vec::new();
        for (i, level) in self.down.iter().enumerate() {
            h = level.forward(h, &emb);
            trace.push(h.size());
            skips.push(h.shallow_clone());
            if let Some(ds) = self.downsample.get(i) {
                h = ds.forward(&h);
            }
        }
        h = self.mid1.forward(&h, &emb);
        h = self.mid_attn.forward(&h);
        h = self.mid2.forward(&h, &emb);
        trace.push(h.size());
        let mut ups = self.upsample.iter();
        for (k, level) in self.up.iter().enumerate() {
            let skip = skips.pop().expect("one skip per level");
            if k > 0 {
                h = ups.next().expect("upsample per level").forward(&upsample_to(&h, &skip));
            }
            h = level.forward(Tensor::cat(&[h, skip], 1), &emb);
            trace.push(h.size());
        }
        self.out.forward(&silu(&self.out_norm.forward(&h)))
    }
}

#[derive(Debug)]
enum Net {
    Vanilla(Box<VanillaUnet>),
    Blocks(Box<BlockUnet>),
}

/// Anything that can estimate the noise component of `x_t`.
pub trait NoisePredictor {
    /// `xt` is `B x 1 x H x W`; `t` holds one 1-based step per sample.
    fn predict(&self, xt: &Tensor, t: &[usize]) -> Tensor;

    /// Step count the predictor was built for, when it has one.
    fn timesteps(&self) -> Option<usize> {
        None
    }

    fn input_size(&self) -> Option<usize> {
        None
    }

    fn kind(&self) -> Kind {
        Kind::Float
    }
}

pub struct Denoiser {
    spec: DenoiserSpec,
    precision: Precision,
    vs: VarStore,
    net: Net,
    arch: Architecture,
}

impl std::fmt::Debug for Denoiser {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Denoiser").field("spec", &self.spec).field("precision", &self.precision).finish()
    }
}

impl Denoiser {
    pub fn build(spec: &DenoiserSpec, seed: u64) -> Result<Self> {
        Self::build_with_precision(spec, seed, Precision::Single)
    }

    pub fn build_with_precision(spec: &DenoiserSpec, seed: u64, precision: Precision) -> Result<Self> {
        spec.validate()?;
        let mut vs = VarStore::new(Device::Cpu);
        let mut arch = Architecture::default();
        let net = match spec.variant {
            DenoiserVariant::Vanilla => Net::Vanilla(Box::new(VanillaUnet::new(vs.root(), spec, &mut arch))),
            _ => Net::Blocks(Box::new(BlockUnet::new(vs.root(), spec, &mut arch))),
        };
        if precision == Precision::Double {
            vs.double();
        }
        seeded_init(&vs, seed);
        Ok(Self { spec: spec.clone(), precision, vs, net, arch })
    }

    pub fn spec(&self) -> &DenoiserSpec {
        &self.spec
    }

    pub fn var_store(&self) -> &VarStore {
        &self.vs
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn parameter_count(&self) -> usize {
        parameter_count(&self.vs)
    }

    /// Differentiable forward pass.
    pub fn forward(&self, x: &Tensor, t: &[usize]) -> Tensor {
        self.forward_traced(x, t, &mut Vec::new())
    }

    /// Forward pass that also records the shape of every level's feature map.
    pub fn forward_traced(&self, x: &Tensor, t: &[usize], trace: &mut Vec<Vec<i64>>) -> Tensor {
        let x = x.to_kind(self.precision.kind());
        match &self.net {
            Net::Vanilla(n) => n.forward(&x, t, trace),
            Net::Blocks(n) => n.forward(&x, t, trace),
        }
    }

    /// Inference on an image batch at a single step.
    pub fn predict_noise(&self, xt: &ImageBatch, t: usize) -> Result<ImageBatch> {
        if xt.height() != self.spec.input_size || xt.width() != self.spec.input_size {
            return Err(arg_err(format!(
                "model expects {0}x{0} inputs, got {1}x{2}",
                self.spec.input_size,
                xt.height(),
                xt.width()
            )));
        }
        if t == 0 || t > self.spec.timesteps {
            return Err(arg_err(format!("step {t} outside 1..={}", self.spec.timesteps)));
        }
        let x = xt.to_tensor(self.precision.kind());
        let steps = vec![t; xt.len()];
        let out = tch::no_grad(|| self.forward(&x, &steps));
        ImageBatch::from_tensor(&out)
    }

    pub fn checkpoint(&self, meta: serde_json::Value, optimizer: Option<&Adam>) -> Checkpoint {
        let spec = serde_json::to_value(&self.spec).expect("spec serializes");
        let mut ck = Checkpoint::new(CHECKPOINT_KIND, spec, meta);
        ck.insert_prefixed("", checkpoint::var_tensors(&self.vs));
        if let Some(opt) = optimizer {
            ck.insert_prefixed("", opt.state_tensors());
        }
        ck
    }

    pub fn save(&self, path: &Path, meta: serde_json::Value, optimizer: Option<&Adam>) -> Result<()> {
        self.checkpoint(meta, optimizer).save(path)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_kind(CHECKPOINT_KIND)?;
        let spec: DenoiserSpec =
            serde_json::from_value(ck.spec.clone()).map_err(|e| crate::Error::Checkpoint(e.to_string()))?;
        let model = Self::build(&spec, 0)?;
        checkpoint::load_into(&model.vs, &ck.tensors)?;
        Ok(model)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

impl NoisePredictor for Denoiser {
    fn predict(&self, xt: &Tensor, t: &[usize]) -> Tensor {
        self.forward(xt, t)
    }

    fn timesteps(&self) -> Option<usize> {
        Some(self.spec.timesteps)
    }

    fn input_size(&self) -> Option<usize> {
        Some(self.spec.input_size)
    }

    fn kind(&self) -> Kind {
        self.precision.kind()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const VARIANTS: [DenoiserVariant; 3] =
        [DenoiserVariant::Vanilla, DenoiserVariant::ResnetAttention, DenoiserVariant::Convnext];

    #[test]
    fn embedding_at_zero() {
        let e = sinusoidal_time_embedding(0.0, 8).unwrap();
        for pair in e.chunks(2) {
            assert_eq!(pair, &[0.0, 1.0]);
        }
    }

    #[test]
    fn embedding_rejects_odd_dim() {
        assert!(matches!(sinusoidal_time_embedding(3.0, 5), Err(crate::Error::Config(_))));
    }

    #[test]
    fn vanilla_full_pools_to_three() {
        let spec = DenoiserSpec::vanilla_full();
        assert_eq!(spec.level_sizes(), vec![112, 56, 28, 14, 7, 3]);
        spec.validate().unwrap();
    }

    #[test]
    fn too_many_levels_is_a_config_error() {
        let mut spec = DenoiserSpec::tiny(DenoiserVariant::Vanilla);
        spec.channel_mults = vec![1, 1, 1, 1];
        assert!(matches!(Denoiser::build(&spec, 0), Err(crate::Error::Config(_))));
    }

    #[test]
    fn shape_preserved_for_all_variants() {
        for v in VARIANTS {
            for size in [8usize, 12] {
                let spec = DenoiserSpec { input_size: size, ..DenoiserSpec::tiny(v) };
                let m = Denoiser::build(&spec, 1).unwrap();
                let x = Tensor::randn([2, 1, size as i64, size as i64], (Kind::Float, Device::Cpu));
                let y = m.forward(&x, &[1, 7]);
                assert_eq!(y.size(), vec![2, 1, size as i64, size as i64], "{v:?}");
                assert!(m.parameter_count() > 0);
            }
        }
    }

    #[test]
    fn odd_sizes_survive_the_round_trip() {
        let spec = DenoiserSpec { input_size: 11, ..DenoiserSpec::tiny(DenoiserVariant::ResnetAttention) };
        let m = Denoiser::build(&spec, 1).unwrap();
        let x = Tensor::zeros([1, 1, 11, 11], (Kind::Float, Device::Cpu));
        assert_eq!(m.forward(&x, &[3]).size(), vec![1, 1, 11, 11]);
    }

    #[test]
    fn predict_noise_checks_inputs() {
        let m = Denoiser::build(&DenoiserSpec::tiny(DenoiserVariant::Vanilla), 0).unwrap();
        let bad = ImageBatch::zeros(1, 9, 9);
        assert!(matches!(m.predict_noise(&bad, 1), Err(crate::Error::Argument(_))));
        let ok = ImageBatch::zeros(1, 8, 8);
        assert!(m.predict_noise(&ok, 0).is_err());
        assert!(m.predict_noise(&ok, 11).is_err());
        assert_eq!(m.predict_noise(&ok, 10).unwrap().shape(), [1, 1, 8, 8]);
    }

    #[test]
    fn vanilla_uses_layernorm_and_silu() {
        let m = Denoiser::build(&DenoiserSpec::tiny(DenoiserVariant::Vanilla), 0).unwrap();
        assert!(m.architecture().contains("layernorm"));
        assert!(m.architecture().contains("silu"));
        assert!(!m.architecture().contains("self-attention"));
    }

    #[test]
    fn variants_have_their_signature_blocks() {
        let r = Denoiser::build(&DenoiserSpec::tiny(DenoiserVariant::ResnetAttention), 0).unwrap();
        assert!(r.architecture().contains("resblock"));
        assert!(r.architecture().contains("self-attention"));
        let c = Denoiser::build(&DenoiserSpec::tiny(DenoiserVariant::Convnext), 0).unwrap();
        assert!(c.architecture().contains("convnext"));
        assert!(!c.architecture().contains("resblock"));
    }

    #[test]
    fn checkpoint_round_trip_preserves_outputs() {
        let spec = DenoiserSpec::tiny(DenoiserVariant::Convnext);
        let m = Denoiser::build(&spec, 5).unwrap();
        let back = Denoiser::from_checkpoint(
            &Checkpoint::from_bytes(&m.checkpoint(serde_json::Value::Null, None).to_bytes().unwrap()).unwrap(),
        )
        .unwrap();
        let x = ImageBatch::filled(1, 8, 8, 0.3);
        assert_eq!(m.predict_noise(&x, 4).unwrap(), back.predict_noise(&x, 4).unwrap());
    }
}
