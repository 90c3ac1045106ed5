//! Synthetic ridge-pattern corpus: oriented band-pass filtering of seeded
//! noise, in the spirit of classical Gabor-based fingerprint synthesis.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};
use crate::imgops;
use crate::rng::stream_rng;

use super::dataset::{Condition, FingerId, PatchDataset, PatchItem};

const ORIENTATION_BINS: usize = 16;
const FILTER_PASSES: usize = 4;
const IDENTITY_STREAM: u64 = 1 << 40;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RidgeParams {
    /// Ridge frequency in cycles per pixel.
    pub frequency: f64,
    /// Number of random low-frequency terms in the orientation field.
    pub orientation_modes: usize,
    /// Amplitude of the orientation field variation, in radians.
    pub orientation_amplitude: f64,
    /// Probability that a finger gets a loop-like singular point.
    pub singular_point_prob: f64,
    /// Standard deviation of per-impression pixel noise.
    pub noise_level: f64,
    pub contrast: f64,
    /// Distinct fingers; 0 gives every patch its own finger.
    pub identities: usize,
    /// Maximum displacement of an impression inside its finger's canvas.
    pub max_offset: usize,
    pub max_rotation_deg: f64,
}

impl Default for RidgeParams {
    fn default() -> Self {
        Self {
            frequency: 0.11,
            orientation_modes: 3,
            orientation_amplitude: 0.9,
            singular_point_prob: 0.3,
            noise_level: 0.08,
            contrast: 1.0,
            identities: 0,
            max_offset: 3,
            max_rotation_deg: 4.0,
        }
    }
}

impl RidgeParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.frequency > 0.0 && self.frequency < 0.5) {
            return Err(config_err(format!("ridge frequency {} must lie in (0, 0.5)", self.frequency)));
        }
        if !(0.0..=1.0).contains(&self.singular_point_prob) {
            return Err(config_err("singular_point_prob must be a probability"));
        }
        if !(self.noise_level >= 0.0 && self.contrast > 0.0 && self.max_rotation_deg >= 0.0) {
            return Err(config_err("noise_level and max_rotation_deg must be >= 0 and contrast > 0"));
        }
        Ok(())
    }

    fn margin(&self) -> usize {
        self.max_offset + (self.max_rotation_deg / 2.0).ceil() as usize + 2
    }
}

/// Zero-mean Gabor kernels for orientations `k * pi / bins`.
fn gabor_bank(frequency: f64) -> (Vec<Vec<f64>>, usize) {
    let sigma = 0.38 / frequency;
    let radius = (2.2 * sigma).ceil() as usize;
    let side = 2 * radius + 1;
    let bank = (0..ORIENTATION_BINS)
        .map(|b| {
            let theta = b as f64 * PI / ORIENTATION_BINS as f64;
            let (s, c) = theta.sin_cos();
            let mut k: Vec<f64> = (0..side * side)
                .map(|i| {
                    let u = (i % side) as f64 - radius as f64;
                    let v = (i / side) as f64 - radius as f64;
                    let env = (-(u * u + v * v) / (2.0 * sigma * sigma)).exp();
                    env * (2.0 * PI * frequency * (u * c + v * s)).cos()
                })
                .collect();
            let mean = k.iter().sum::<f64>() / k.len() as f64;
            k.iter_mut().for_each(|v| *v -= mean);
            k
        })
        .collect();
    (bank, radius)
}

fn orientation_field<R: Rng>(side: usize, p: &RidgeParams, rng: &mut R) -> Vec<f64> {
    let base: f64 = rng.random_range(0.0..PI);
    let modes: Vec<(f64, f64, f64, f64)> = (0..p.orientation_modes)
        .map(|_| {
            let dir: f64 = rng.random_range(0.0..2.0 * PI);
            let wavelength = side as f64 * rng.random_range(1.2..3.0);
            let phase = rng.random_range(0.0..2.0 * PI);
            let amp = p.orientation_amplitude * rng.random_range(0.3..1.0);
            (dir.cos() * 2.0 * PI / wavelength, dir.sin() * 2.0 * PI / wavelength, phase, amp)
        })
        .collect();
    let core = rng.random_bool(p.singular_point_prob).then(|| {
        let c = side as f64;
        (rng.random_range(0.2 * c..0.8 * c), rng.random_range(0.2 * c..0.8 * c))
    });
    let mut field = Vec::with_capacity(side * side);
    for y in 0..side {
        for x in 0..side {
            let (xf, yf) = (x as f64, y as f64);
            let mut th = base;
            for &(kx, ky, ph, amp) in &modes {
                th += amp * (kx * xf + ky * yf + ph).sin();
            }
            if let Some((cx, cy)) = core {
                th += 0.5 * (yf - cy).atan2(xf - cx);
            }
            field.push(th.rem_euclid(PI));
        }
    }
    field
}

/// Builds the full canvas of one finger: noise repeatedly filtered with the
/// kernel matching the local orientation, then squashed into `[-1, 1]`.
fn finger_canvas<R: Rng>(side: usize, p: &RidgeParams, rng: &mut R) -> Vec<f32> {
    let field = orientation_field(side, p, rng);
    let (bank, radius) = gabor_bank(p.frequency);
    let kside = 2 * radius + 1;
    let bins: Vec<usize> = field
        .iter()
        .map(|th| ((th / PI * ORIENTATION_BINS as f64).round() as usize) % ORIENTATION_BINS)
        .collect();
    let mut img: Vec<f64> = (0..side * side).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let mut next = vec![0.0f64; side * side];
    for _ in 0..FILTER_PASSES {
        for y in 0..side {
            for x in 0..side {
                let k = &bank[bins[y * side + x]];
                let mut acc = 0.0;
                for ky in 0..kside {
                    let sy = (y + ky).saturating_sub(radius).min(side - 1);
                    let row = &img[sy * side..(sy + 1) * side];
                    let krow = &k[ky * kside..(ky + 1) * kside];
                    for (kx, kv) in krow.iter().enumerate() {
                        let sx = (x + kx).saturating_sub(radius).min(side - 1);
                        acc += kv * row[sx];
                    }
                }
                next[y * side + x] = acc;
            }
        }
        let n = next.len() as f64;
        let mean = next.iter().sum::<f64>() / n;
        let std = (next.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt().max(1e-12);
        for (dst, v) in img.iter_mut().zip(&next) {
            *dst = (1.5 * (v - mean) / std).tanh();
        }
    }
    img.into_iter().map(|v| v as f32).collect()
}

fn impression<R: Rng>(canvas: &[f32], side: usize, size: usize, p: &RidgeParams, rng: &mut R) -> Vec<f32> {
    let deg = if p.max_rotation_deg > 0.0 { rng.random_range(-p.max_rotation_deg..=p.max_rotation_deg) } else { 0.0 };
    let rotated = imgops::rotate(canvas, side, side, deg);
    let m = p.max_offset as i64;
    let (dy, dx) = (rng.random_range(-m..=m), rng.random_range(-m..=m));
    let top = ((side - size) / 2) as i64 + dy;
    let left = ((side - size) / 2) as i64 + dx;
    let mut out = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let v = rotated[(top as usize + y) * side + left as usize + x] as f64;
            let noise: f64 = rng.sample(StandardNormal);
            out.push((p.contrast * v + p.noise_level * noise).clamp(-1.0, 1.0) as f32);
        }
    }
    out
}

/// `n` ridge patches of `size x size`. Patch `i` belongs to finger
/// `i % identities`; all impressions of a finger are crops of one canvas at
/// different offsets, rotations and noise. Each item draws from its own
/// stream, so the corpus is a pure function of `(n, size, params, seed)`.
pub fn synth_ridge_dataset(n: usize, size: usize, params: &RidgeParams, seed: u64) -> Result<PatchDataset> {
    params.validate()?;
    if n == 0 || size == 0 {
        return Err(config_err("synthetic corpus needs n >= 1 and size >= 1"));
    }
    let identities = if params.identities == 0 { n } else { params.identities.min(n) };
    let side = size + 2 * params.margin();
    let mut canvases: Vec<Option<Vec<f32>>> = vec![None; identities];
    let mut items = Vec::with_capacity(n);
    for i in 0..n {
        let id = i % identities;
        let canvas = canvases[id].get_or_insert_with(|| {
            let mut rng = stream_rng(seed, IDENTITY_STREAM + id as u64);
            finger_canvas(side, params, &mut rng)
        });
        let mut rng = stream_rng(seed, i as u64);
        let image = impression(canvas, side, size, params, &mut rng);
        items.push(PatchItem {
            name: format!("ridge_{i:05}"),
            image,
            finger: Some(FingerId { person: format!("f{id:04}"), finger: "0".into() }),
            condition: Condition::Live,
            device: None,
        });
        if identities == n {
            canvases[id] = None;
        }
    }
    Ok(PatchDataset { items, size })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpoofCorruption {
    pub blur_sigma: f64,
    pub contrast: f64,
    pub shift: f64,
    pub blotches: usize,
    pub blotch_strength: f64,
}

impl Default for SpoofCorruption {
    fn default() -> Self {
        Self { blur_sigma: 1.0, contrast: 0.6, shift: 0.25, blotches: 3, blotch_strength: 0.7 }
    }
}

impl SpoofCorruption {
    pub fn apply<R: Rng>(&self, img: &[f32], size: usize, rng: &mut R) -> Vec<f32> {
        let blurred = imgops::gaussian_blur(img, size, size, self.blur_sigma);
        let mut out: Vec<f32> =
            blurred.iter().map(|&v| (self.contrast as f32) * v + self.shift as f32).collect();
        for _ in 0..self.blotches {
            let cy = rng.random_range(0.0..size as f64);
            let cx = rng.random_range(0.0..size as f64);
            let r = rng.random_range(0.08..0.18) * size as f64;
            for y in 0..size {
                for x in 0..size {
                    let d2 = (y as f64 - cy).powi(2) + (x as f64 - cx).powi(2);
                    out[y * size + x] += (self.blotch_strength * (-d2 / (2.0 * r * r)).exp()) as f32;
                }
            }
        }
        out.iter_mut().for_each(|v| *v = v.clamp(-1.0, 1.0));
        out
    }
}

/// Spoof-condition copy of a live dataset: every image passes through the
/// fixed corruption and is tagged `spoof_material_<material>`.
pub fn corrupt_to_spoof(live: &PatchDataset, corruption: &SpoofCorruption, material: u8, seed: u64) -> PatchDataset {
    let items = live
        .items
        .iter()
        .enumerate()
        .map(|(i, item)| {
            let mut rng = stream_rng(seed, i as u64);
            PatchItem {
                name: format!("{}_spoof{material}", item.name),
                image: corruption.apply(&item.image, live.size, &mut rng),
                finger: item.finger.clone(),
                condition: Condition::Spoof(material.max(1)),
                device: item.device.clone(),
            }
        })
        .collect();
    PatchDataset { items, size: live.size }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_corpus() {
        let p = RidgeParams { identities: 3, ..Default::default() };
        let a = synth_ridge_dataset(6, 24, &p, 9).unwrap();
        let b = synth_ridge_dataset(6, 24, &p, 9).unwrap();
        assert_eq!(a, b);
        let c = synth_ridge_dataset(6, 24, &p, 10).unwrap();
        assert_ne!(a.items[0].image, c.items[0].image);
    }

    #[test]
    fn prefix_is_stable_when_n_grows() {
        let p = RidgeParams { identities: 2, ..Default::default() };
        let a = synth_ridge_dataset(3, 16, &p, 1).unwrap();
        let b = synth_ridge_dataset(5, 16, &p, 1).unwrap();
        assert_eq!(a.items[..], b.items[..3]);
    }

    #[test]
    fn bad_frequency_rejected() {
        for f in [0.0, 0.5, -0.1] {
            let p = RidgeParams { frequency: f, ..Default::default() };
            assert!(synth_ridge_dataset(1, 16, &p, 0).is_err());
        }
    }

    #[test]
    fn spoof_keeps_identity_and_range() {
        let live = synth_ridge_dataset(4, 16, &RidgeParams::default(), 2).unwrap();
        let spoof = corrupt_to_spoof(&live, &SpoofCorruption::default(), 2, 3);
        assert_eq!(spoof.len(), 4);
        assert!(spoof.items.iter().all(|i| i.condition == Condition::Spoof(2)));
        assert_eq!(spoof.items[1].finger, live.items[1].finger);
        assert!(spoof.to_batch().is_in_range());
    }
}
