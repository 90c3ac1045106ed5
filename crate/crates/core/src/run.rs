//! Executes one configured task inside an output directory.
//!
//! Every run writes `config.toml` (the resolved configuration) first, then
//! its task artifacts, then `report.txt`. A failing run keeps whatever it had
//! written and adds `failure.txt`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::batch::ImageBatch;
use crate::biometric::{
    calibrate_far_threshold, compute_synthetic_far, cumulative_distribution, far::far_report_text, make_pairs,
    score_pairs, spoof_score_histogram, FarRow, NccMatcher, PairPopulation, SpoofClassifier,
};
use crate::config::{Direction, ExtractorKind, RunConfig, Task};
use crate::cycle::{translate, CycleTrainer, CycleEpochLog, CYCLE_CHECKPOINT_KIND};
use crate::data::{corrupt_to_spoof, load_image_dataset, mosaic, save_png, synth_ridge_dataset, PatchDataset};
use crate::denoiser::{Denoiser, CHECKPOINT_KIND as DENOISER_KIND};
use crate::diffusion::{sample_many, DdpmTrainer};
use crate::error::{config_err, Error, Result};
use crate::gan::{WganTrainer, WGAN_CHECKPOINT_KIND};
use crate::metrics::{
    compute_fid, compute_kid, compute_prdc, extract_chunked, FeatureExtractor, MetricReport, PixelPca,
    TorchScriptExtractor,
};
use crate::nn::checkpoint::write_atomic;
use crate::nn::Checkpoint;
use crate::report::report_bundle;

pub const CONFIG_FILE: &str = "config.toml";
pub const FAILURE_FILE: &str = "failure.txt";
pub const TRAIN_LOG: &str = "train_log.txt";
pub const PREVIEW_COUNT: usize = 16;
const EXTRACT_CHUNK: usize = 256;

/// Overrides given on the command line.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
}

/// Output directory in priority order: explicit override, config key,
/// `runs/<task>`.
pub fn output_dir(cfg: &RunConfig, task: Task, over: &Overrides) -> PathBuf {
    over.out_dir.clone().or_else(|| cfg.out_dir.clone()).unwrap_or_else(|| PathBuf::from("runs").join(task.name()))
}

/// Resolves the configuration, runs the task and writes the report bundle.
/// Returns the output directory.
pub fn run(task: Task, cfg: &RunConfig, over: &Overrides) -> Result<PathBuf> {
    let mut cfg = cfg.clone();
    if let Some(seed) = over.seed {
        cfg.seed = Some(seed);
    }
    let out = output_dir(&cfg, task, over);
    cfg.out_dir = Some(out.clone());
    let cfg = cfg.resolve(task)?;
    fs::create_dir_all(&out)?;
    let stale = out.join(FAILURE_FILE);
    if stale.exists() {
        fs::remove_file(&stale)?;
    }
    write_atomic(&out.join(CONFIG_FILE), cfg.to_toml().as_bytes())?;
    let result = execute(task, &cfg, &out).and_then(|_| report_bundle(&out).map(|_| ()));
    if let Err(e) = &result {
        let record = format!("task {task}\nerror {}\nmessage {e}\n", error_kind(e));
        write_atomic(&out.join(FAILURE_FILE), record.as_bytes())?;
    }
    result.map(|_| out)
}

pub fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Config(_) => "config",
        Error::Argument(_) => "argument",
        Error::Numerical(_) => "numerical",
        Error::Capability(_) => "capability",
        Error::Diverged { .. } => "diverged",
        Error::Extraction { .. } => "extraction",
        Error::Load { .. } => "load",
        Error::Checkpoint(_) => "checkpoint",
        Error::Io(_) => "io",
        Error::Torch(_) => "torch",
    }
}

fn execute(task: Task, cfg: &RunConfig, out: &Path) -> Result<()> {
    match task {
        Task::TrainDdpm => train_ddpm_task(cfg, out),
        Task::TrainWgan => train_wgan_task(cfg, out),
        Task::TrainCycle => train_cycle_task(cfg, out),
        Task::Sample => sample_task(cfg, out),
        Task::Translate => translate_task(cfg, out),
        Task::Evaluate => evaluate_task(cfg, out),
        Task::FarAnalysis => far_task(cfg, out),
        Task::SpoofHist => spoof_task(cfg, out),
        Task::SynthData => synth_task(cfg, out),
    }
}

fn required<'a, T>(v: &'a Option<T>, key: &str) -> Result<&'a T> {
    v.as_ref().ok_or_else(|| config_err(format!("missing required key {key}")))
}

fn load_dir(dir: &Path, pad_to: Option<usize>) -> Result<PatchDataset> {
    let (ds, warnings) = load_image_dataset(dir, pad_to)?;
    for w in warnings {
        log::warn!("{w}");
    }
    Ok(ds)
}

fn nonempty(ds: PatchDataset, what: &str) -> Result<PatchDataset> {
    if ds.is_empty() {
        return Err(config_err(format!("{what} has no images")));
    }
    Ok(ds)
}

fn save_grid(path: &Path, batch: &ImageBatch, cols: usize) -> Result<()> {
    let (img, h, w) = mosaic(batch, cols);
    save_png(path, &img, h, w)
}

/// Checkpoints land after epoch 1, every `every` epochs and after the last one.
pub fn is_checkpoint_epoch(epoch: usize, every: usize, last: usize) -> bool {
    epoch == 1 || epoch == last || (every > 0 && epoch.is_multiple_of(every))
}

fn epoch_tag(epoch: usize) -> String {
    format!("epoch_{epoch:05}")
}

/// Accumulates a text log and rewrites it atomically after each line.
struct TextLog {
    path: PathBuf,
    text: String,
}

impl TextLog {
    fn new(path: PathBuf, header: &str) -> Result<Self> {
        let log = Self { path, text: format!("{header}\n") };
        write_atomic(&log.path, log.text.as_bytes())?;
        Ok(log)
    }

    fn push(&mut self, line: &str) -> Result<()> {
        log::info!("{line}");
        self.text.push_str(line);
        self.text.push('\n');
        write_atomic(&self.path, self.text.as_bytes())
    }
}

fn train_ddpm_task(cfg: &RunConfig, out: &Path) -> Result<()> {
    let data = cfg.data();
    let d = required(&cfg.diffusion, "diffusion")?;
    let model_name = *required(&cfg.model, "model")?;
    let variant = model_name.denoiser_variant().ok_or_else(|| config_err("model is not a diffusion model"))?;
    let spec = d.denoiser_spec(variant)?;
    let schedule = d.schedule()?;
    let train_cfg = d.train_config(cfg.seed())?;
    let images = nonempty(load_dir(required(&data.train_dir, "data.train_dir")?, data.pad_to)?, "data.train_dir")?;
    let batch = images.to_batch();
    let model = Denoiser::build(&spec, cfg.seed())?;
    let epochs = train_cfg.epochs;
    let every = cfg.checkpoint_every.unwrap_or(crate::config::DEFAULT_CHECKPOINT_EVERY);
    let aug = train_cfg.augment.as_ref().map(|a| format!("{:?}", a.ops)).unwrap_or_else(|| "none".into());
    let mut log = TextLog::new(out.join(TRAIN_LOG), &format!("# augment {aug}\nepoch mean_loss iterations"))?;
    let meta_base = serde_json::json!({ "model": model_name, "diffusion": d });
    let mut trainer = DdpmTrainer::new(&model, &schedule, train_cfg)?;
    for _ in 0..epochs {
        let l = trainer.train_epoch(&batch)?;
        log.push(&format!("{} {:.9e} {}", l.epoch, l.mean_loss, l.iterations))?;
        if is_checkpoint_epoch(l.epoch, every, epochs) {
            let mut meta = meta_base.clone();
            meta["epoch"] = l.epoch.into();
            let tag = epoch_tag(l.epoch);
            model.save(&out.join("checkpoints").join(format!("{tag}.ckpt")), meta, Some(&trainer.optimizer))?;
            let preview = sample_many(&model, &schedule, PREVIEW_COUNT, spec.input_size, PREVIEW_COUNT, cfg.seed())?;
            save_grid(&out.join("grids").join(format!("{tag}.png")), &preview, 4)?;
        }
    }
    let mut meta = meta_base;
    meta["epoch"] = epochs.into();
    model.save(&out.join("model.ckpt"), meta, None)
}

fn train_wgan_task(cfg: &RunConfig, out: &Path) -> Result<()> {
    let data = cfg.data();
    let w = required(&cfg.wgan, "wgan")?;
    let train_cfg = w.train_config(cfg.seed())?;
    let epochs = train_cfg.epochs;
    let images = nonempty(load_dir(required(&data.train_dir, "data.train_dir")?, data.pad_to)?, "data.train_dir")?;
    let batch = images.to_batch();
    let mut trainer = WganTrainer::new(&w.generator_spec()?, &w.critic_spec()?, train_cfg)?;
    let every = cfg.checkpoint_every.unwrap_or(crate::config::DEFAULT_CHECKPOINT_EVERY);
    let mut log = TextLog::new(out.join(TRAIN_LOG), "epoch critic_loss generator_loss penalty_mean")?;
    let z = trainer.preview_latent(PREVIEW_COUNT);
    for _ in 0..epochs {
        let l = trainer.train_epoch(&batch)?;
        log.push(&l.line())?;
        if is_checkpoint_epoch(l.epoch, every, epochs) {
            let tag = epoch_tag(l.epoch);
            trainer.checkpoint().save(&out.join("checkpoints").join(format!("{tag}.ckpt")))?;
            save_grid(&out.join("grids").join(format!("{tag}.png")), &trainer.sample(&z)?, 4)?;
        }
    }
    trainer.checkpoint().save(&out.join("model.ckpt"))
}

fn train_cycle_task(cfg: &RunConfig, out: &Path) -> Result<()> {
    let data = cfg.data();
    let c = required(&cfg.cycle, "cycle")?;
    let train_cfg = c.train_config(cfg.seed())?;
    let epochs = train_cfg.epochs();
    let a = nonempty(load_dir(required(&data.train_dir, "data.train_dir")?, data.pad_to)?, "data.train_dir")?.to_batch();
    let b = nonempty(load_dir(required(&data.domain_b_dir, "data.domain_b_dir")?, data.pad_to)?, "data.domain_b_dir")?
        .to_batch();
    let mut trainer = CycleTrainer::new(&c.generator_spec()?, &c.critic_spec()?, train_cfg)?;
    let every = cfg.checkpoint_every.unwrap_or(crate::config::DEFAULT_CHECKPOINT_EVERY);
    let mut log = TextLog::new(out.join(TRAIN_LOG), CycleEpochLog::HEADER)?;
    let k = a.len().min(b.len()).min(8);
    let (pa, pb) = (a.slice(0..k), b.slice(0..k));
    for _ in 0..epochs {
        let l = trainer.train_epoch(&a, &b)?;
        log.push(&l.line())?;
        if is_checkpoint_epoch(l.epoch, every, epochs) {
            let tag = epoch_tag(l.epoch);
            trainer.checkpoint().save(&out.join("checkpoints").join(format!("{tag}.ckpt")))?;
            let m = &trainer.models;
            let grid =
                ImageBatch::concat(&[pa.clone(), translate(&m.g_ab, &pa)?, pb.clone(), translate(&m.g_ba, &pb)?])?;
            save_grid(&out.join("grids").join(format!("{tag}.png")), &grid, k)?;
        }
    }
    trainer.checkpoint().save(&out.join("model.ckpt"))
}

fn write_images(dir: &Path, batch: &ImageBatch, prefix: &str) -> Result<()> {
    for (i, img) in batch.images().enumerate() {
        save_png(&dir.join(format!("{prefix}_{i:05}.png")), img, batch.height(), batch.width())?;
    }
    Ok(())
}

fn sample_task(cfg: &RunConfig, out: &Path) -> Result<()> {
    let s = required(&cfg.sample, "sample")?;
    let ck = Checkpoint::load(required(&s.checkpoint, "sample.checkpoint")?)?;
    let count = *required(&s.count, "sample.count")?;
    let chunk = *required(&s.chunk, "sample.chunk")?;
    let cols = *required(&s.grid_cols, "sample.grid_cols")?;
    let seed = cfg.seed();
    let samples = match ck.kind.as_str() {
        DENOISER_KIND => {
            let model = Denoiser::from_checkpoint(&ck)?;
            let d: crate::config::DiffusionConfig = ck
                .meta
                .get("diffusion")
                .cloned()
                .and_then(|v| serde_json::from_value(v).ok())
                .ok_or_else(|| Error::Checkpoint("denoiser checkpoint lacks its diffusion settings".into()))?;
            sample_many(&model, &d.schedule()?, count, model.spec().input_size, chunk, seed)?
        }
        WGAN_CHECKPOINT_KIND => {
            let trainer = WganTrainer::from_checkpoint(&ck)?;
            let mut parts = Vec::new();
            let mut done = 0;
            let mut i = 0u64;
            while done < count {
                let n = chunk.min(count - done);
                let z = trainer.latent(n, &mut crate::rng::stream_rng(seed, i));
                parts.push(trainer.sample(&z)?);
                done += n;
                i += 1;
            }
            ImageBatch::concat(&parts)?
        }
        other => return Err(config_err(format!("cannot sample from a {other} checkpoint"))),
    };
    write_images(&out.join("samples"), &samples, "sample")?;
    save_grid(&out.join("grid.png"), &samples, cols)
}

fn translate_task(cfg: &RunConfig, out: &Path) -> Result<()> {
    let t = required(&cfg.translate, "translate")?;
    let ck = Checkpoint::load(required(&t.checkpoint, "translate.checkpoint")?)?;
    ck.expect_kind(CYCLE_CHECKPOINT_KIND)?;
    let trainer = CycleTrainer::from_checkpoint(&ck)?;
    let size = trainer.models.g_ab.spec.input_size;
    let pad = cfg.data.as_ref().and_then(|d| d.pad_to).unwrap_or(size);
    let input = load_dir(required(&t.input_dir, "translate.input_dir")?, Some(pad))?;
    let g = match t.direction.unwrap_or(Direction::AToB) {
        Direction::AToB => &trainer.models.g_ab,
        Direction::BToA => &trainer.models.g_ba,
    };
    let translated = translate(g, &input.to_batch())?;
    let mut ds = input.clone();
    for (item, img) in ds.items.iter_mut().zip(translated.images()) {
        item.image = img.to_vec();
    }
    ds.save(&out.join("translated"))?;
    if !translated.is_empty() {
        save_grid(&out.join("grid.png"), &translated.slice(0..translated.len().min(64)), 8)?;
    }
    Ok(())
}

fn evaluate_task(cfg: &RunConfig, out: &Path) -> Result<()> {
    let data = cfg.data();
    let e = required(&cfg.evaluate, "evaluate")?;
    let real = nonempty(load_dir(required(&data.real_dir, "data.real_dir")?, data.pad_to)?, "data.real_dir")?.to_batch();
    let extractor: Box<dyn FeatureExtractor> = match e.extractor.unwrap_or(ExtractorKind::PixelPca) {
        ExtractorKind::PixelPca => Box::new(PixelPca::fit(&real, *required(&e.pca_components, "evaluate.pca_components")?)?),
        ExtractorKind::Torchscript => Box::new(TorchScriptExtractor::load(
            required(&e.torchscript_path, "evaluate.torchscript_path")?,
            e.torchscript_input.unwrap_or(299),
            e.torchscript_rgb.unwrap_or(true),
        )?),
    };
    let feat_real = extract_chunked(extractor.as_ref(), &real, EXTRACT_CHUNK, "real")?;
    feat_real.save(&out.join("features").join("real.feat"))?;
    for ds in required(&e.datasets, "evaluate.datasets")? {
        let imgs = nonempty(load_dir(&ds.dir, Some(real.height()))?, &ds.name)?.to_batch();
        let feat = extract_chunked(extractor.as_ref(), &imgs, EXTRACT_CHUNK, &ds.name)?;
        feat.save(&out.join("features").join(format!("{}.feat", ds.name)))?;
        let mut report = MetricReport { n_a: feat_real.n, n_b: feat.n, ..Default::default() };
        if e.fid.unwrap_or(true) {
            report.fid = Some(compute_fid(&feat_real, &feat)?);
        }
        if e.kid.unwrap_or(true) {
            let subset = e.kid_subset_size.unwrap_or(100).min(feat_real.n).min(feat.n);
            report.kid = Some(compute_kid(&feat_real, &feat, subset, e.kid_subsets.unwrap_or(10), cfg.seed())?);
        }
        if e.prdc.unwrap_or(true) {
            let k = e.prdc_k.unwrap_or(5);
            report = report.with_prdc(compute_prdc(&feat_real, &feat, k)?);
        }
        write_atomic(&out.join("metrics").join(format!("{}.txt", ds.name)), report.to_text().as_bytes())?;
    }
    Ok(())
}

fn far_task(cfg: &RunConfig, out: &Path) -> Result<()> {
    let data = cfg.data();
    let f = required(&cfg.far, "far")?;
    let real = nonempty(load_dir(required(&data.real_dir, "data.real_dir")?, data.pad_to)?, "data.real_dir")?;
    let synthetic = nonempty(load_dir(required(&f.synthetic_dir, "far.synthetic_dir")?, Some(real.size))?, "far.synthetic_dir")?
        .to_batch();
    let matcher = NccMatcher {
        max_shift: f.max_shift.unwrap_or(8),
        max_rotation_deg: f.max_rotation_deg.unwrap_or(15.0),
        rotation_step_deg: f.rotation_step_deg.unwrap_or(5.0),
    };
    let seed = cfg.seed();
    let mut populations = vec![(PairPopulation::Impostor, f.impostor_pairs.unwrap_or(5000))];
    if f.genuine_pairs.unwrap_or(0) > 0 {
        populations.push((PairPopulation::Genuine, f.genuine_pairs.unwrap_or(0)));
    }
    let n_syn = f.synthetic_pairs.unwrap_or(5000);
    populations.push((PairPopulation::SyntheticReal, n_syn));
    if synthetic.len() >= 2 {
        populations.push((PairPopulation::SyntheticSynthetic, n_syn));
    }
    let mut scores = Vec::new();
    for (pop, n) in populations {
        let pairs = make_pairs(&real, synthetic.len(), pop, n, seed)?;
        let table = score_pairs(&matcher, &pairs, &real, Some(&synthetic))?;
        write_atomic(&out.join("scores").join(format!("{}.csv", pop.name())), table.to_text().as_bytes())?;
        let mut curve = String::from("score,cumulative_fraction\n");
        for (s, p) in cumulative_distribution(&table.scores) {
            writeln!(curve, "{s:.9},{p:.9}").expect("string write");
        }
        write_atomic(&out.join("far_curves").join(format!("{}.csv", pop.name())), curve.as_bytes())?;
        scores.push((pop, table.scores));
    }
    let impostor = &scores[0].1;
    let mut rows = Vec::new();
    for &target in required(&f.target_far, "far.target_far")? {
        let thr = calibrate_far_threshold(impostor, target)?;
        for (pop, s) in &scores {
            rows.push(FarRow {
                population: pop.name().to_string(),
                baseline_far: target,
                threshold: thr.threshold,
                synthetic_far: compute_synthetic_far(s, thr.threshold),
                tie: thr.tie,
            });
        }
    }
    write_atomic(&out.join("far_report.csv"), far_report_text(&rows).as_bytes())
}

fn spoof_task(cfg: &RunConfig, out: &Path) -> Result<()> {
    let s = required(&cfg.spoof, "spoof")?;
    let pad = cfg.data.as_ref().and_then(|d| d.pad_to);
    let live = nonempty(load_dir(required(&s.live_dir, "spoof.live_dir")?, pad)?, "spoof.live_dir")?;
    let pad = Some(live.size);
    let spoof = nonempty(load_dir(required(&s.spoof_dir, "spoof.spoof_dir")?, pad)?, "spoof.spoof_dir")?;
    let (live, spoof) = (live.to_batch(), spoof.to_batch());
    let epochs = s.classifier_epochs.unwrap_or(5);
    let scorer = SpoofClassifier::train(&live, &spoof, epochs, cfg.seed())?;
    let bins = s.bins.unwrap_or(20);
    let mut sets = vec![("live".to_string(), live), ("spoof".to_string(), spoof)];
    for extra in s.extra.iter().flatten() {
        sets.push((extra.name.clone(), nonempty(load_dir(&extra.dir, pad)?, &extra.name)?.to_batch()));
    }
    let mut hists = Vec::new();
    for (name, batch) in &sets {
        let h = spoof_score_histogram(&scorer, batch, bins)?;
        write_atomic(&out.join("histograms").join(format!("{name}.txt")), h.to_text().as_bytes())?;
        hists.push((name.clone(), h));
    }
    let spoof_hist = &hists[1].1;
    let mut text = String::from("set,overlap_with_spoof\n");
    for (name, h) in &hists {
        writeln!(text, "{name},{:.9}", h.overlap(spoof_hist)?).expect("string write");
    }
    write_atomic(&out.join("overlap.csv"), text.as_bytes())
}

fn synth_task(cfg: &RunConfig, out: &Path) -> Result<()> {
    let s = required(&cfg.synth, "synth")?;
    let ridge = s.ridge.clone().unwrap_or_default();
    let ds = synth_ridge_dataset(*required(&s.count, "synth.count")?, *required(&s.size, "synth.size")?, &ridge, cfg.seed())?;
    ds.save(&out.join("images"))?;
    if s.spoof_copy.unwrap_or(false) {
        let corr = s.corruption.clone().unwrap_or_default();
        corrupt_to_spoof(&ds, &corr, 1, cfg.seed().wrapping_add(1)).save(&out.join("spoof"))?;
    }
    Ok(())
}
