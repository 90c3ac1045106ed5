use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::batch::ImageBatch;
use crate::error::{arg_err, config_err, Error, Result};
use crate::imgops;

pub const MANIFEST_FILE: &str = "manifest.csv";

/// Value used for padding borders, i.e. raw pixel 0.
pub const PAD_VALUE: f32 = -1.0;

pub fn u8_to_unit(v: u8) -> f32 {
    v as f32 / 127.5 - 1.0
}

pub fn unit_to_u8(v: f32) -> u8 {
    ((v.clamp(-1.0, 1.0) + 1.0) * 127.5).round() as u8
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Condition {
    Live,
    /// Spoof made of material `k` (1-based).
    Spoof(u8),
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Condition::Live => write!(f, "live"),
            Condition::Spoof(k) => write!(f, "spoof_material_{k}"),
        }
    }
}

impl FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if s == "live" {
            return Ok(Condition::Live);
        }
        s.strip_prefix("spoof_material_")
            .and_then(|k| k.parse::<u8>().ok())
            .filter(|k| *k >= 1)
            .map(Condition::Spoof)
            .ok_or_else(|| config_err(format!("unknown condition tag {s:?} (expected live or spoof_material_<k>)")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FingerId {
    pub person: String,
    pub finger: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchItem {
    pub name: String,
    pub image: Vec<f32>,
    pub finger: Option<FingerId>,
    pub condition: Condition,
    pub device: Option<String>,
}

/// Square single-channel patches, padded and normalized to `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchDataset {
    pub items: Vec<PatchItem>,
    pub size: usize,
}

impl PatchDataset {
    pub fn empty(size: usize) -> Self {
        Self { items: Vec::new(), size }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn to_batch(&self) -> ImageBatch {
        let imgs: Vec<&[f32]> = self.items.iter().map(|i| i.image.as_slice()).collect();
        ImageBatch::stack(&imgs, self.size, self.size).expect("items share the dataset size")
    }

    pub fn filter_condition(&self, condition: Condition) -> Self {
        Self {
            items: self.items.iter().filter(|i| i.condition == condition).cloned().collect(),
            size: self.size,
        }
    }

    /// Splits off every `k`-th item (starting at index `k - 1`) as a held-out set.
    pub fn split_every(&self, k: usize) -> (Self, Self) {
        let (mut train, mut held) = (Vec::new(), Vec::new());
        for (i, item) in self.items.iter().enumerate() {
            if k > 0 && i % k == k - 1 {
                held.push(item.clone());
            } else {
                train.push(item.clone());
            }
        }
        (Self { items: train, size: self.size }, Self { items: held, size: self.size })
    }

    /// Writes every item as an 8-bit PNG plus a manifest.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut manifest = String::from("filename,person,finger,condition,device\n");
        for item in &self.items {
            let file = format!("{}.png", item.name);
            save_png(&dir.join(&file), &item.image, self.size, self.size)?;
            let (p, f) = item.finger.as_ref().map(|id| (id.person.as_str(), id.finger.as_str())).unwrap_or(("", ""));
            manifest.push_str(&format!(
                "{file},{p},{f},{},{}\n",
                item.condition,
                item.device.as_deref().unwrap_or("")
            ));
        }
        crate::nn::checkpoint::write_atomic(&dir.join(MANIFEST_FILE), manifest.as_bytes())
    }
}

pub fn load_png(path: &Path) -> Result<(Vec<f32>, usize, usize)> {
    let img = image::open(path).map_err(|e| Error::Load { path: path.to_path_buf(), reason: e.to_string() })?;
    let gray = img.into_luma8();
    let (w, h) = gray.dimensions();
    let data = gray.into_raw().into_iter().map(u8_to_unit).collect();
    Ok((data, h as usize, w as usize))
}

pub fn png_bytes(img: &[f32], h: usize, w: usize) -> Result<Vec<u8>> {
    let raw: Vec<u8> = img.iter().map(|&v| unit_to_u8(v)).collect();
    let buf = image::GrayImage::from_raw(w as u32, h as u32, raw).ok_or_else(|| arg_err("image buffer size mismatch"))?;
    let mut out = std::io::Cursor::new(Vec::new());
    buf.write_to(&mut out, image::ImageFormat::Png)
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    Ok(out.into_inner())
}

pub fn save_png(path: &Path, img: &[f32], h: usize, w: usize) -> Result<()> {
    crate::nn::checkpoint::write_atomic(path, &png_bytes(img, h, w)?)
}

/// Tiles a batch into a grayscale mosaic with `cols` columns and a 1-pixel gap.
pub fn mosaic(batch: &ImageBatch, cols: usize) -> (Vec<f32>, usize, usize) {
    let cols = cols.max(1).min(batch.len().max(1));
    let rows = batch.len().div_ceil(cols).max(1);
    let (h, w) = (batch.height(), batch.width());
    let (mh, mw) = (rows * (h + 1) - 1, cols * (w + 1) - 1);
    let mut out = vec![1.0f32; mh * mw];
    for (i, img) in batch.images().enumerate() {
        let (r, c) = (i / cols, i % cols);
        for y in 0..h {
            let dst = (r * (h + 1) + y) * mw + c * (w + 1);
            out[dst..dst + w].copy_from_slice(&img[y * w..(y + 1) * w]);
        }
    }
    (out, mh, mw)
}

struct ManifestRow {
    finger: Option<FingerId>,
    condition: Condition,
    device: Option<String>,
}

fn read_manifest(path: &Path) -> Result<HashMap<String, ManifestRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::Load { path: path.to_path_buf(), reason: e.to_string() })?;
    let mut rows = HashMap::new();
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'));
    let header: Vec<String> = match lines.next() {
        Some((_, l)) => l.split(',').map(|c| c.trim().to_ascii_lowercase()).collect(),
        None => return Ok(rows),
    };
    let col = |name: &str| header.iter().position(|c| c == name);
    let file_col = col("filename").ok_or_else(|| config_err("manifest needs a filename column"))?;
    let (person_col, finger_col, cond_col, device_col) = (col("person"), col("finger"), col("condition"), col("device"));
    for (lineno, line) in lines {
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        let get = |c: Option<usize>| c.and_then(|i| cells.get(i).copied()).filter(|s| !s.is_empty());
        let file = get(Some(file_col))
            .ok_or_else(|| config_err(format!("manifest line {}: missing filename", lineno + 1)))?;
        let finger = match (get(person_col), get(finger_col)) {
            (Some(p), f) => Some(FingerId { person: p.to_string(), finger: f.unwrap_or("").to_string() }),
            _ => None,
        };
        let condition = match get(cond_col) {
            Some(c) => c.parse().map_err(|e: Error| config_err(format!("manifest line {}: {e}", lineno + 1)))?,
            None => Condition::Live,
        };
        rows.insert(file.to_string(), ManifestRow { finger, condition, device: get(device_col).map(String::from) });
    }
    Ok(rows)
}

/// Loads every PNG in `dir` (sorted by name), centers each on a
/// `pad_to x pad_to` canvas and attaches identities from `manifest.csv`
/// when present. Returns the dataset and any warnings.
pub fn load_image_dataset(dir: &Path, pad_to: Option<usize>) -> Result<(PatchDataset, Vec<String>)> {
    let entries = fs::read_dir(dir).map_err(|e| Error::Load { path: dir.to_path_buf(), reason: e.to_string() })?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("png")))
        .collect();
    files.sort();
    let manifest_path = dir.join(MANIFEST_FILE);
    let manifest = if manifest_path.exists() { Some(read_manifest(&manifest_path)?) } else { None };
    let mut warnings = Vec::new();
    if files.is_empty() {
        let msg = format!("no PNG images found in {}", dir.display());
        log::warn!("{msg}");
        warnings.push(msg);
        return Ok((PatchDataset::empty(pad_to.unwrap_or(0)), warnings));
    }

    let mut items = Vec::with_capacity(files.len());
    let mut size = pad_to;
    for path in &files {
        let (img, h, w) = load_png(path)?;
        let target = match size {
            Some(s) => s,
            None => {
                if h != w {
                    return Err(Error::Load {
                        path: path.clone(),
                        reason: format!("{w}x{h} image is not square and no padding size was given"),
                    });
                }
                size = Some(h);
                h
            }
        };
        let image = if pad_to.is_some() {
            imgops::pad_center(&img, h, w, target, PAD_VALUE).ok_or_else(|| Error::Load {
                path: path.clone(),
                reason: format!("{w}x{h} image does not fit in {target}x{target}"),
            })?
        } else if h != target || w != target {
            return Err(Error::Load {
                path: path.clone(),
                reason: format!("{w}x{h} differs from {target}x{target} and no padding size was given"),
            });
        } else {
            img
        };
        let file_name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
        let row = manifest.as_ref().and_then(|m| m.get(&file_name));
        if manifest.is_some() && row.is_none() {
            warnings.push(format!("{file_name} is not listed in the manifest"));
        }
        items.push(PatchItem {
            name: path.file_stem().and_then(|n| n.to_str()).unwrap_or_default().to_string(),
            image,
            finger: row.and_then(|r| r.finger.clone()),
            condition: row.map(|r| r.condition).unwrap_or(Condition::Live),
            device: row.and_then(|r| r.device.clone()),
        });
    }
    Ok((PatchDataset { items, size: size.unwrap_or(0) }, warnings))
}
