use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::batch::ImageBatch;
use crate::error::{config_err, Error, Result};
use crate::imgops;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AugmentOp {
    /// Horizontal flip with probability one half.
    Hflip,
    Rotate,
    /// Brightness and contrast jitter.
    Jitter,
    Translate,
}

impl FromStr for AugmentOp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "hflip" | "flip" => Ok(AugmentOp::Hflip),
            "rotate" | "rotation" => Ok(AugmentOp::Rotate),
            "jitter" => Ok(AugmentOp::Jitter),
            "translate" | "translation" => Ok(AugmentOp::Translate),
            other => Err(config_err(format!("unknown augmentation {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentConfig {
    pub ops: Vec<AugmentOp>,
    pub max_rotation_deg: f64,
    /// Relative brightness and contrast change, `0.1` for +-10%.
    pub max_jitter: f64,
    pub max_shift: usize,
}

impl Default for AugmentConfig {
    /// The DDPM-Aug set: all four operations at their maximum strength.
    fn default() -> Self {
        Self {
            ops: vec![AugmentOp::Hflip, AugmentOp::Rotate, AugmentOp::Jitter, AugmentOp::Translate],
            max_rotation_deg: 10.0,
            max_jitter: 0.1,
            max_shift: 4,
        }
    }
}

impl AugmentConfig {
    pub fn none() -> Self {
        Self { ops: Vec::new(), ..Self::default() }
    }

    pub fn from_names(names: &[&str]) -> Result<Self> {
        let ops = names.iter().map(|n| n.parse()).collect::<Result<Vec<_>>>()?;
        Ok(Self { ops, ..Self::default() })
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=10.0).contains(&self.max_rotation_deg) {
            return Err(config_err("max_rotation_deg must be within [0, 10]"));
        }
        if !(0.0..=0.1).contains(&self.max_jitter) {
            return Err(config_err("max_jitter must be within [0, 0.1]"));
        }
        if self.max_shift > 4 {
            return Err(config_err("max_shift must be at most 4 pixels"));
        }
        Ok(())
    }
}

/// Applies the configured operations, in declaration order, to every image
/// independently. Output is clamped to `[-1, 1]`.
pub fn augment_batch<R: Rng + ?Sized>(batch: &ImageBatch, cfg: &AugmentConfig, rng: &mut R) -> Result<ImageBatch> {
    cfg.validate()?;
    if cfg.ops.is_empty() {
        return Ok(batch.clone());
    }
    let (h, w) = (batch.height(), batch.width());
    let mut out = batch.clone();
    for i in 0..batch.len() {
        let mut img = batch.image(i).to_vec();
        for op in &cfg.ops {
            img = match op {
                AugmentOp::Hflip => {
                    if rng.random_bool(0.5) {
                        imgops::hflip(&img, h, w)
                    } else {
                        img
                    }
                }
                AugmentOp::Rotate => {
                    let deg = rng.random_range(-cfg.max_rotation_deg..=cfg.max_rotation_deg);
                    imgops::rotate(&img, h, w, deg)
                }
                AugmentOp::Jitter => {
                    let j = cfg.max_jitter;
                    let contrast = 1.0 + rng.random_range(-j..=j) as f32;
                    // 10% of the two-unit value range
                    let brightness = 2.0 * rng.random_range(-j..=j) as f32;
                    let mean = img.iter().sum::<f32>() / img.len() as f32;
                    img.iter().map(|v| (v - mean) * contrast + mean + brightness).collect()
                }
                AugmentOp::Translate => {
                    let m = cfg.max_shift as i64;
                    let dy = rng.random_range(-m..=m);
                    let dx = rng.random_range(-m..=m);
                    imgops::translate(&img, h, w, dy, dx)
                }
            };
        }
        out.image_mut(i).copy_from_slice(&img);
    }
    out.clamp_to_range();
    Ok(out)
}

/// Deterministic left-right flip of every image.
pub fn hflip_batch(batch: &ImageBatch) -> ImageBatch {
    let mut out = batch.clone();
    for i in 0..batch.len() {
        let f = imgops::hflip(batch.image(i), batch.height(), batch.width());
        out.image_mut(i).copy_from_slice(&f);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn batch() -> ImageBatch {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut b = ImageBatch::gaussian(4, 8, 8, &mut rng);
        b.clamp_to_range();
        b
    }

    #[test]
    fn empty_set_is_identity() {
        let b = batch();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(augment_batch(&b, &AugmentConfig::none(), &mut rng).unwrap(), b);
    }

    #[test]
    fn flip_twice_restores() {
        let b = batch();
        assert_eq!(hflip_batch(&hflip_batch(&b)), b);
    }

    #[test]
    fn jitter_stays_in_range() {
        let mut b = batch();
        for v in b.data_mut() {
            *v = v.signum();
        }
        let cfg = AugmentConfig { ops: vec![AugmentOp::Jitter], ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            assert!(augment_batch(&b, &cfg, &mut rng).unwrap().is_in_range());
        }
    }

    #[test]
    fn unknown_name_is_config_error() {
        assert!(matches!(AugmentConfig::from_names(&["hflip", "cutout"]), Err(Error::Config(_))));
        assert_eq!(AugmentConfig::from_names(&["rotate"]).unwrap().ops, vec![AugmentOp::Rotate]);
    }

    #[test]
    fn full_set_keeps_shape() {
        let b = batch();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let out = augment_batch(&b, &AugmentConfig::default(), &mut rng).unwrap();
        assert_eq!(out.shape(), b.shape());
        assert!(out.is_in_range());
    }
}
