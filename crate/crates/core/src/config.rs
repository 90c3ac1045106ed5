//! Run configuration: a TOML file with top-level keys and one section per
//! concern. Unknown keys are rejected. Keys left out take the defaults of the
//! selected model, and [`RunConfig::resolve`] fills every one of them in so
//! the frozen copy written next to a run lists the values actually used.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use crate::cycle::{CycleGeneratorSpec, CycleTrainConfig, CycleWeights};
use crate::data::{AugmentConfig, AugmentOp, RidgeParams, SpoofCorruption};
use crate::denoiser::{DenoiserSpec, DenoiserVariant};
use crate::diffusion::{DdpmTrainConfig, DiffusionLossConfig, LossKind};
use crate::error::{config_err, Error, Result};
use crate::gan::{CriticSpec, GanTrainConfig, LatentGeneratorSpec};
use crate::nn::AdamConfig;
use crate::schedule::{NoiseSchedule, ScheduleKind, DEFAULT_COSINE_OFFSET};

pub const DEFAULT_CHECKPOINT_EVERY: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    TrainDdpm,
    TrainWgan,
    TrainCycle,
    Sample,
    Translate,
    Evaluate,
    FarAnalysis,
    SpoofHist,
    SynthData,
}

impl Task {
    pub const ALL: [Task; 9] = [
        Task::TrainDdpm,
        Task::TrainWgan,
        Task::TrainCycle,
        Task::Sample,
        Task::Translate,
        Task::Evaluate,
        Task::FarAnalysis,
        Task::SpoofHist,
        Task::SynthData,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Task::TrainDdpm => "train-ddpm",
            Task::TrainWgan => "train-wgan",
            Task::TrainCycle => "train-cycle",
            Task::Sample => "sample",
            Task::Translate => "translate",
            Task::Evaluate => "evaluate",
            Task::FarAnalysis => "far-analysis",
            Task::SpoofHist => "spoof-hist",
            Task::SynthData => "synth-data",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Task::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| config_err(format!("unknown task {s:?}")))
    }
}

/// Model names, used to pick defaults.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelName {
    #[serde(rename = "vddpm-v1")]
    VddpmV1,
    #[serde(rename = "ddpm-v2")]
    DdpmV2,
    #[serde(rename = "ddpm-aug")]
    DdpmAug,
    #[serde(rename = "ddpm-conv")]
    DdpmConv,
    WganGp,
    CycleWganGp,
}

impl ModelName {
    pub fn denoiser_variant(self) -> Option<DenoiserVariant> {
        match self {
            ModelName::VddpmV1 => Some(DenoiserVariant::Vanilla),
            ModelName::DdpmV2 | ModelName::DdpmAug => Some(DenoiserVariant::ResnetAttention),
            ModelName::DdpmConv => Some(DenoiserVariant::Convnext),
            _ => None,
        }
    }
}

/// `full` uses the full-size settings; `desk` is the reduced CPU profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    #[default]
    Full,
    Desk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeEmbedding {
    Sinusoidal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GanLoss {
    Wasserstein,
}

/// Where images come from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Training images (or the live domain A for translation).
    pub train_dir: Option<PathBuf>,
    /// Spoof domain B for translation.
    pub domain_b_dir: Option<PathBuf>,
    /// Reference images for evaluation and FAR analysis.
    pub real_dir: Option<PathBuf>,
    pub pad_to: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffusionConfig {
    pub image_size: Option<usize>,
    pub time_embedding: Option<TimeEmbedding>,
    pub time_schedule: Option<ScheduleKind>,
    pub time_steps: Option<usize>,
    pub noise_level: Option<[f64; 2]>,
    pub cosine_offset: Option<f64>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub epochs: Option<usize>,
    pub loss: Option<LossKind>,
    pub huber_delta: Option<f64>,
    pub optimizer: Option<Optimizer>,
    pub base_channels: Option<usize>,
    pub channel_mults: Option<Vec<usize>>,
    pub time_embed_dim: Option<usize>,
    pub res_blocks: Option<usize>,
    pub attention_levels: Option<usize>,
    pub norm_groups: Option<usize>,
    /// Augmentation names; empty means none.
    pub augment: Option<Vec<AugmentOp>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WganConfig {
    pub image_size: Option<usize>,
    pub latent_dim: Option<i64>,
    pub generator_width: Option<i64>,
    pub up_blocks: Option<usize>,
    pub critic_width: Option<i64>,
    pub critic_blocks: Option<usize>,
    pub batch_size: Option<usize>,
    pub epochs: Option<usize>,
    pub n_critic: Option<usize>,
    pub lambda_gp: Option<f64>,
    pub learning_rate: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub loss: Option<GanLoss>,
    pub optimizer: Option<Optimizer>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CycleConfig {
    pub input: Option<usize>,
    pub lambda_cycle: Option<f64>,
    pub lambda_identity: Option<f64>,
    pub lambda_gp: Option<f64>,
    pub batch_size: Option<usize>,
    pub epochs: Option<usize>,
    /// Final epochs over which the learning rate decays linearly to zero.
    pub decay_epochs: Option<usize>,
    pub n_critic: Option<usize>,
    pub loss: Option<GanLoss>,
    pub optimizer: Option<Optimizer>,
    pub learning_rate: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub generator_width: Option<i64>,
    pub res_blocks: Option<usize>,
    pub critic_width: Option<i64>,
    pub critic_blocks: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleConfig {
    pub checkpoint: Option<PathBuf>,
    pub count: Option<usize>,
    pub chunk: Option<usize>,
    pub grid_cols: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    AToB,
    BToA,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranslateConfig {
    pub checkpoint: Option<PathBuf>,
    pub input_dir: Option<PathBuf>,
    pub direction: Option<Direction>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExtractorKind {
    PixelPca,
    Torchscript,
}

/// A named image folder to compare against the reference set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedDir {
    pub name: String,
    pub dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateConfig {
    pub datasets: Option<Vec<NamedDir>>,
    pub extractor: Option<ExtractorKind>,
    pub pca_components: Option<usize>,
    pub torchscript_path: Option<PathBuf>,
    pub torchscript_input: Option<i64>,
    pub torchscript_rgb: Option<bool>,
    pub kid_subset_size: Option<usize>,
    pub kid_subsets: Option<usize>,
    pub prdc_k: Option<usize>,
    pub fid: Option<bool>,
    pub kid: Option<bool>,
    pub prdc: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FarConfig {
    pub synthetic_dir: Option<PathBuf>,
    pub target_far: Option<Vec<f64>>,
    pub impostor_pairs: Option<usize>,
    pub synthetic_pairs: Option<usize>,
    pub genuine_pairs: Option<usize>,
    pub max_shift: Option<usize>,
    pub max_rotation_deg: Option<f64>,
    pub rotation_step_deg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpoofConfig {
    pub live_dir: Option<PathBuf>,
    pub spoof_dir: Option<PathBuf>,
    /// Further image sets to score, e.g. translated live images.
    pub extra: Option<Vec<NamedDir>>,
    pub bins: Option<usize>,
    pub classifier_epochs: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub count: Option<usize>,
    pub size: Option<usize>,
    pub ridge: Option<RidgeParams>,
    /// Also write a spoof-style copy of the corpus.
    pub spoof_copy: Option<bool>,
    pub corruption: Option<SpoofCorruption>,
}

macro_rules! empty_default {
    ($($t:ty),*) => {$(
        impl Default for $t {
            fn default() -> Self {
                toml::from_str("").expect("all fields are optional")
            }
        }
    )*};
}

empty_default!(
    DiffusionConfig,
    WganConfig,
    CycleConfig,
    SampleConfig,
    TranslateConfig,
    EvaluateConfig,
    FarConfig,
    SpoofConfig,
    SynthConfig
);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub task: Option<Task>,
    pub model: Option<ModelName>,
    pub profile: Option<Profile>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub checkpoint_every: Option<usize>,
    pub data: Option<DataConfig>,
    pub diffusion: Option<DiffusionConfig>,
    pub wgan: Option<WganConfig>,
    pub cycle: Option<CycleConfig>,
    pub sample: Option<SampleConfig>,
    pub translate: Option<TranslateConfig>,
    pub evaluate: Option<EvaluateConfig>,
    pub far: Option<FarConfig>,
    pub spoof: Option<SpoofConfig>,
    pub synth: Option<SynthConfig>,
}

fn need<T: Clone>(v: &Option<T>, key: &str) -> Result<T> {
    v.clone().ok_or_else(|| config_err(format!("missing required key {key}")))
}

fn positive(v: usize, key: &str) -> Result<usize> {
    if v == 0 {
        return Err(config_err(format!("{key} must be positive")));
    }
    Ok(v)
}

fn rate(v: f64, key: &str) -> Result<f64> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(config_err(format!("{key} must be a positive number, got {v}")));
    }
    Ok(v)
}

fn beta(v: f64, key: &str) -> Result<f64> {
    if !(0.0..1.0).contains(&v) {
        return Err(config_err(format!("{key} must lie in [0, 1), got {v}")));
    }
    Ok(v)
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| config_err(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Load { path: path.to_path_buf(), reason: e.to_string() })?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks the task and fills every key the task uses with its effective
    /// value. Sections the task does not use are dropped.
    pub fn resolve(&self, task: Task) -> Result<Self> {
        if let Some(t) = self.task {
            if t != task {
                return Err(config_err(format!("config is for task {t} but {task} was requested")));
            }
        }
        let profile = self.profile.unwrap_or_default();
        let mut out = RunConfig {
            task: Some(task),
            model: self.model,
            profile: Some(profile),
            seed: Some(self.seed.unwrap_or(0)),
            out_dir: self.out_dir.clone(),
            checkpoint_every: None,
            data: None,
            diffusion: None,
            wgan: None,
            cycle: None,
            sample: None,
            translate: None,
            evaluate: None,
            far: None,
            spoof: None,
            synth: None,
        };
        let data = self.data.clone().unwrap_or_default();
        let every = positive(self.checkpoint_every.unwrap_or(DEFAULT_CHECKPOINT_EVERY), "checkpoint_every")?;
        match task {
            Task::TrainDdpm => {
                let model = self.model.unwrap_or(ModelName::DdpmV2);
                if model.denoiser_variant().is_none() {
                    return Err(config_err(format!("model {model:?} is not a diffusion model")));
                }
                out.model = Some(model);
                out.checkpoint_every = Some(every);
                need(&data.train_dir, "data.train_dir")?;
                let d = resolve_diffusion(&self.diffusion.clone().unwrap_or_default(), model, profile)?;
                out.data = Some(DataConfig { pad_to: Some(data.pad_to.unwrap_or(d.image_size.unwrap())), ..data });
                out.diffusion = Some(d);
            }
            Task::TrainWgan => {
                out.model = Some(ModelName::WganGp);
                out.checkpoint_every = Some(every);
                need(&data.train_dir, "data.train_dir")?;
                let w = resolve_wgan(&self.wgan.clone().unwrap_or_default(), profile)?;
                out.data = Some(DataConfig { pad_to: Some(data.pad_to.unwrap_or(w.image_size.unwrap())), ..data });
                out.wgan = Some(w);
            }
            Task::TrainCycle => {
                out.model = Some(ModelName::CycleWganGp);
                out.checkpoint_every = Some(every);
                need(&data.train_dir, "data.train_dir")?;
                need(&data.domain_b_dir, "data.domain_b_dir")?;
                let c = resolve_cycle(&self.cycle.clone().unwrap_or_default(), profile)?;
                out.data = Some(DataConfig { pad_to: Some(data.pad_to.unwrap_or(c.input.unwrap())), ..data });
                out.cycle = Some(c);
            }
            Task::Sample => {
                let s = self.sample.clone().unwrap_or_default();
                need(&s.checkpoint, "sample.checkpoint")?;
                out.sample = Some(SampleConfig {
                    checkpoint: s.checkpoint,
                    count: Some(positive(s.count.unwrap_or(64), "sample.count")?),
                    chunk: Some(positive(s.chunk.unwrap_or(64), "sample.chunk")?),
                    grid_cols: Some(positive(s.grid_cols.unwrap_or(8), "sample.grid_cols")?),
                });
            }
            Task::Translate => {
                let t = self.translate.clone().unwrap_or_default();
                need(&t.checkpoint, "translate.checkpoint")?;
                need(&t.input_dir, "translate.input_dir")?;
                out.data = self.data.clone().filter(|d| d.pad_to.is_some());
                out.translate = Some(TranslateConfig { direction: Some(t.direction.unwrap_or(Direction::AToB)), ..t });
            }
            Task::Evaluate => {
                need(&data.real_dir, "data.real_dir")?;
                let e = self.evaluate.clone().unwrap_or_default();
                let datasets = need(&e.datasets, "evaluate.datasets")?;
                if datasets.is_empty() {
                    return Err(config_err("evaluate.datasets must name at least one image folder"));
                }
                let extractor = e.extractor.unwrap_or(ExtractorKind::PixelPca);
                if extractor == ExtractorKind::Torchscript {
                    need(&e.torchscript_path, "evaluate.torchscript_path")?;
                }
                out.data = Some(data);
                out.evaluate = Some(EvaluateConfig {
                    datasets: Some(datasets),
                    extractor: Some(extractor),
                    pca_components: Some(positive(e.pca_components.unwrap_or(32), "evaluate.pca_components")?),
                    torchscript_input: e.torchscript_path.as_ref().map(|_| e.torchscript_input.unwrap_or(299)),
                    torchscript_rgb: e.torchscript_path.as_ref().map(|_| e.torchscript_rgb.unwrap_or(true)),
                    torchscript_path: e.torchscript_path,
                    kid_subset_size: Some(positive(
                        e.kid_subset_size.unwrap_or(crate::metrics::kid::DEFAULT_SUBSET_SIZE),
                        "evaluate.kid_subset_size",
                    )?),
                    kid_subsets: Some(positive(e.kid_subsets.unwrap_or(crate::metrics::kid::DEFAULT_SUBSETS), "evaluate.kid_subsets")?),
                    prdc_k: Some(positive(e.prdc_k.unwrap_or(crate::metrics::prdc::DEFAULT_K), "evaluate.prdc_k")?),
                    fid: Some(e.fid.unwrap_or(true)),
                    kid: Some(e.kid.unwrap_or(true)),
                    prdc: Some(e.prdc.unwrap_or(true)),
                });
            }
            Task::FarAnalysis => {
                need(&data.real_dir, "data.real_dir")?;
                let f = self.far.clone().unwrap_or_default();
                need(&f.synthetic_dir, "far.synthetic_dir")?;
                let targets = f.target_far.unwrap_or_else(|| vec![1e-3, 1e-2]);
                if targets.is_empty() || targets.iter().any(|t| !(*t > 0.0 && *t < 1.0)) {
                    return Err(config_err("far.target_far entries must lie in (0, 1)"));
                }
                let m = crate::biometric::NccMatcher::default();
                out.data = Some(data);
                out.far = Some(FarConfig {
                    synthetic_dir: f.synthetic_dir,
                    target_far: Some(targets),
                    impostor_pairs: Some(positive(f.impostor_pairs.unwrap_or(5000), "far.impostor_pairs")?),
                    synthetic_pairs: Some(positive(f.synthetic_pairs.unwrap_or(5000), "far.synthetic_pairs")?),
                    genuine_pairs: Some(f.genuine_pairs.unwrap_or(1000)),
                    max_shift: Some(f.max_shift.unwrap_or(m.max_shift)),
                    max_rotation_deg: Some(f.max_rotation_deg.unwrap_or(m.max_rotation_deg)),
                    rotation_step_deg: Some(f.rotation_step_deg.unwrap_or(m.rotation_step_deg)),
                });
            }
            Task::SpoofHist => {
                let s = self.spoof.clone().unwrap_or_default();
                need(&s.live_dir, "spoof.live_dir")?;
                need(&s.spoof_dir, "spoof.spoof_dir")?;
                out.data = self.data.clone().filter(|d| d.pad_to.is_some());
                out.spoof = Some(SpoofConfig {
                    extra: Some(s.extra.unwrap_or_default()),
                    bins: Some(positive(s.bins.unwrap_or(20), "spoof.bins")?),
                    classifier_epochs: Some(positive(s.classifier_epochs.unwrap_or(5), "spoof.classifier_epochs")?),
                    ..s
                });
            }
            Task::SynthData => {
                let s = self.synth.clone().unwrap_or_default();
                let ridge = s.ridge.unwrap_or_default();
                ridge.validate()?;
                out.synth = Some(SynthConfig {
                    count: Some(positive(s.count.unwrap_or(2000), "synth.count")?),
                    size: Some(positive(s.size.unwrap_or(32), "synth.size")?),
                    ridge: Some(ridge),
                    spoof_copy: Some(s.spoof_copy.unwrap_or(false)),
                    corruption: Some(s.corruption.unwrap_or_default()),
                });
            }
        }
        Ok(out)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn data(&self) -> DataConfig {
        self.data.clone().unwrap_or_default()
    }
}

fn resolve_diffusion(d: &DiffusionConfig, model: ModelName, profile: Profile) -> Result<DiffusionConfig> {
    let variant = model.denoiser_variant().expect("checked by caller");
    let base = match (profile, variant) {
        (Profile::Desk, v) => DenoiserSpec::desk(v),
        (Profile::Full, DenoiserVariant::Vanilla) => DenoiserSpec::vanilla_full(),
        (Profile::Full, DenoiserVariant::ResnetAttention) => DenoiserSpec::resnet_attention_full(),
        (Profile::Full, DenoiserVariant::Convnext) => DenoiserSpec::convnext_full(),
    };
    let v1 = model == ModelName::VddpmV1;
    let augment = d.augment.clone().unwrap_or_else(|| {
        if model == ModelName::DdpmAug {
            AugmentConfig::default().ops
        } else {
            Vec::new()
        }
    });
    let noise = d.noise_level.unwrap_or([1e-5, 1e-2]);
    let out = DiffusionConfig {
        image_size: Some(d.image_size.unwrap_or(base.input_size)),
        time_embedding: Some(d.time_embedding.unwrap_or(TimeEmbedding::Sinusoidal)),
        time_schedule: Some(d.time_schedule.unwrap_or(if v1 { ScheduleKind::Linear } else { ScheduleKind::Cosine })),
        time_steps: Some(positive(d.time_steps.unwrap_or(1000), "diffusion.time_steps")?),
        noise_level: Some(noise),
        cosine_offset: Some(rate(d.cosine_offset.unwrap_or(DEFAULT_COSINE_OFFSET), "diffusion.cosine_offset")?),
        batch_size: Some(positive(d.batch_size.unwrap_or(64), "diffusion.batch_size")?),
        learning_rate: Some(rate(d.learning_rate.unwrap_or(1e-4), "diffusion.learning_rate")?),
        epochs: Some(d.epochs.unwrap_or(500)),
        loss: Some(d.loss.unwrap_or(if v1 { LossKind::Mse } else { LossKind::Huber })),
        huber_delta: Some(rate(d.huber_delta.unwrap_or(1.0), "diffusion.huber_delta")?),
        optimizer: Some(d.optimizer.unwrap_or(Optimizer::Adam)),
        base_channels: Some(d.base_channels.unwrap_or(base.base_channels)),
        channel_mults: Some(d.channel_mults.clone().unwrap_or(base.channel_mults)),
        time_embed_dim: Some(d.time_embed_dim.unwrap_or(base.time_embed_dim)),
        res_blocks: Some(d.res_blocks.unwrap_or(base.res_blocks)),
        attention_levels: Some(d.attention_levels.unwrap_or(base.attention_levels)),
        norm_groups: Some(d.norm_groups.unwrap_or(base.norm_groups)),
        augment: Some(augment),
    };
    out.denoiser_spec(variant)?.validate()?;
    out.schedule()?;
    Ok(out)
}

impl DiffusionConfig {
    /// Denoiser spec of a resolved section.
    pub fn denoiser_spec(&self, variant: DenoiserVariant) -> Result<DenoiserSpec> {
        Ok(DenoiserSpec {
            variant,
            input_size: need(&self.image_size, "diffusion.image_size")?,
            base_channels: need(&self.base_channels, "diffusion.base_channels")?,
            channel_mults: need(&self.channel_mults, "diffusion.channel_mults")?,
            time_embed_dim: need(&self.time_embed_dim, "diffusion.time_embed_dim")?,
            res_blocks: need(&self.res_blocks, "diffusion.res_blocks")?,
            attention_levels: need(&self.attention_levels, "diffusion.attention_levels")?,
            norm_groups: need(&self.norm_groups, "diffusion.norm_groups")?,
            timesteps: need(&self.time_steps, "diffusion.time_steps")?,
        })
    }

    /// Linear schedules span the noise level; cosine schedules have their
    /// betas clipped to it.
    pub fn schedule(&self) -> Result<NoiseSchedule> {
        let steps = need(&self.time_steps, "diffusion.time_steps")?;
        let [lo, hi] = need(&self.noise_level, "diffusion.noise_level")?;
        match need(&self.time_schedule, "diffusion.time_schedule")? {
            ScheduleKind::Linear => NoiseSchedule::linear(steps, lo, hi),
            ScheduleKind::Cosine => NoiseSchedule::cosine_clipped(
                steps,
                need(&self.cosine_offset, "diffusion.cosine_offset")?,
                Some((lo, hi)),
            ),
        }
    }

    pub fn train_config(&self, seed: u64) -> Result<DdpmTrainConfig> {
        let ops = need(&self.augment, "diffusion.augment")?;
        Ok(DdpmTrainConfig {
            epochs: need(&self.epochs, "diffusion.epochs")?,
            batch_size: need(&self.batch_size, "diffusion.batch_size")?,
            adam: AdamConfig { lr: need(&self.learning_rate, "diffusion.learning_rate")?, ..AdamConfig::default() },
            loss: DiffusionLossConfig {
                loss_kind: need(&self.loss, "diffusion.loss")?,
                huber_delta: need(&self.huber_delta, "diffusion.huber_delta")?,
            },
            augment: if ops.is_empty() { None } else { Some(AugmentConfig { ops, ..AugmentConfig::default() }) },
            seed,
        })
    }
}

fn resolve_wgan(w: &WganConfig, profile: Profile) -> Result<WganConfig> {
    let size = w.image_size.unwrap_or(match profile {
        Profile::Full => 112,
        Profile::Desk => 32,
    });
    let (gen, critic) = match profile {
        Profile::Full => (LatentGeneratorSpec::full(size), CriticSpec::full(size)),
        Profile::Desk => (
            LatentGeneratorSpec { latent_dim: 64, output_size: size, base_width: 16, up_blocks: 2 },
            CriticSpec { input_size: size, base_width: 16, blocks: 3 },
        ),
    };
    let d = GanTrainConfig::default();
    let out = WganConfig {
        image_size: Some(size),
        latent_dim: Some(w.latent_dim.unwrap_or(gen.latent_dim)),
        generator_width: Some(w.generator_width.unwrap_or(gen.base_width)),
        up_blocks: Some(w.up_blocks.unwrap_or(gen.up_blocks)),
        critic_width: Some(w.critic_width.unwrap_or(critic.base_width)),
        critic_blocks: Some(w.critic_blocks.unwrap_or(critic.blocks)),
        batch_size: Some(positive(w.batch_size.unwrap_or(d.batch_size), "wgan.batch_size")?),
        epochs: Some(w.epochs.unwrap_or(d.epochs)),
        n_critic: Some(positive(w.n_critic.unwrap_or(d.n_critic), "wgan.n_critic")?),
        lambda_gp: Some(w.lambda_gp.unwrap_or(d.lambda_gp)),
        learning_rate: Some(rate(w.learning_rate.unwrap_or(d.adam.lr), "wgan.learning_rate")?),
        beta1: Some(beta(w.beta1.unwrap_or(d.adam.beta1), "wgan.beta1")?),
        beta2: Some(beta(w.beta2.unwrap_or(d.adam.beta2), "wgan.beta2")?),
        loss: Some(w.loss.unwrap_or(GanLoss::Wasserstein)),
        optimizer: Some(w.optimizer.unwrap_or(Optimizer::Adam)),
    };
    out.generator_spec()?.validate()?;
    out.critic_spec()?.validate()?;
    Ok(out)
}

impl WganConfig {
    pub fn generator_spec(&self) -> Result<LatentGeneratorSpec> {
        Ok(LatentGeneratorSpec {
            latent_dim: need(&self.latent_dim, "wgan.latent_dim")?,
            output_size: need(&self.image_size, "wgan.image_size")?,
            base_width: need(&self.generator_width, "wgan.generator_width")?,
            up_blocks: need(&self.up_blocks, "wgan.up_blocks")?,
        })
    }

    pub fn critic_spec(&self) -> Result<CriticSpec> {
        Ok(CriticSpec {
            input_size: need(&self.image_size, "wgan.image_size")?,
            base_width: need(&self.critic_width, "wgan.critic_width")?,
            blocks: need(&self.critic_blocks, "wgan.critic_blocks")?,
        })
    }

    pub fn train_config(&self, seed: u64) -> Result<GanTrainConfig> {
        Ok(GanTrainConfig {
            epochs: need(&self.epochs, "wgan.epochs")?,
            batch_size: need(&self.batch_size, "wgan.batch_size")?,
            n_critic: need(&self.n_critic, "wgan.n_critic")?,
            lambda_gp: need(&self.lambda_gp, "wgan.lambda_gp")?,
            adam: AdamConfig {
                lr: need(&self.learning_rate, "wgan.learning_rate")?,
                beta1: need(&self.beta1, "wgan.beta1")?,
                beta2: need(&self.beta2, "wgan.beta2")?,
                ..AdamConfig::default()
            },
            seed,
        })
    }
}

fn resolve_cycle(c: &CycleConfig, profile: Profile) -> Result<CycleConfig> {
    let input = c.input.unwrap_or(match profile {
        Profile::Full => 128,
        Profile::Desk => 32,
    });
    let (gen, critic) = match profile {
        Profile::Full => (CycleGeneratorSpec::full(input), CriticSpec::full(input)),
        Profile::Desk => (
            CycleGeneratorSpec { input_size: input, base_width: 16, res_blocks: 2 },
            CriticSpec { input_size: input, base_width: 8, blocks: 3 },
        ),
    };
    let d = CycleTrainConfig::default();
    let epochs = c.epochs.unwrap_or(500);
    let decay = c.decay_epochs.unwrap_or(d.decay_epochs);
    if decay > epochs {
        return Err(config_err(format!("cycle.decay_epochs ({decay}) exceeds cycle.epochs ({epochs})")));
    }
    let out = CycleConfig {
        input: Some(input),
        lambda_cycle: Some(c.lambda_cycle.unwrap_or(d.weights.lambda_cycle)),
        lambda_identity: Some(c.lambda_identity.unwrap_or(d.weights.lambda_identity)),
        lambda_gp: Some(c.lambda_gp.unwrap_or(d.weights.lambda_gp)),
        batch_size: Some(positive(c.batch_size.unwrap_or(d.batch_size), "cycle.batch_size")?),
        epochs: Some(epochs),
        decay_epochs: Some(decay),
        n_critic: Some(positive(c.n_critic.unwrap_or(d.n_critic), "cycle.n_critic")?),
        loss: Some(c.loss.unwrap_or(GanLoss::Wasserstein)),
        optimizer: Some(c.optimizer.unwrap_or(Optimizer::Adam)),
        learning_rate: Some(rate(c.learning_rate.unwrap_or(d.adam.lr), "cycle.learning_rate")?),
        beta1: Some(beta(c.beta1.unwrap_or(d.adam.beta1), "cycle.beta1")?),
        beta2: Some(beta(c.beta2.unwrap_or(d.adam.beta2), "cycle.beta2")?),
        generator_width: Some(c.generator_width.unwrap_or(gen.base_width)),
        res_blocks: Some(c.res_blocks.unwrap_or(gen.res_blocks)),
        critic_width: Some(c.critic_width.unwrap_or(critic.base_width)),
        critic_blocks: Some(c.critic_blocks.unwrap_or(critic.blocks)),
    };
    out.generator_spec()?.validate()?;
    out.critic_spec()?.validate()?;
    out.train_config(0)?.validate()?;
    Ok(out)
}

impl CycleConfig {
    pub fn generator_spec(&self) -> Result<CycleGeneratorSpec> {
        Ok(CycleGeneratorSpec {
            input_size: need(&self.input, "cycle.input")?,
            base_width: need(&self.generator_width, "cycle.generator_width")?,
            res_blocks: need(&self.res_blocks, "cycle.res_blocks")?,
        })
    }

    pub fn critic_spec(&self) -> Result<CriticSpec> {
        Ok(CriticSpec {
            input_size: need(&self.input, "cycle.input")?,
            base_width: need(&self.critic_width, "cycle.critic_width")?,
            blocks: need(&self.critic_blocks, "cycle.critic_blocks")?,
        })
    }

    pub fn train_config(&self, seed: u64) -> Result<CycleTrainConfig> {
        let epochs = need(&self.epochs, "cycle.epochs")?;
        let decay = need(&self.decay_epochs, "cycle.decay_epochs")?;
        Ok(CycleTrainConfig {
            constant_epochs: epochs - decay.min(epochs),
            decay_epochs: decay,
            batch_size: need(&self.batch_size, "cycle.batch_size")?,
            n_critic: need(&self.n_critic, "cycle.n_critic")?,
            weights: CycleWeights {
                lambda_cycle: need(&self.lambda_cycle, "cycle.lambda_cycle")?,
                lambda_identity: need(&self.lambda_identity, "cycle.lambda_identity")?,
                lambda_gp: need(&self.lambda_gp, "cycle.lambda_gp")?,
            },
            adam: AdamConfig {
                lr: need(&self.learning_rate, "cycle.learning_rate")?,
                beta1: need(&self.beta1, "cycle.beta1")?,
                beta2: need(&self.beta2, "cycle.beta2")?,
                ..AdamConfig::default()
            },
            seed,
        })
    }
}
