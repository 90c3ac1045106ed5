use std::cmp::Ordering;

use crate::error::{arg_err, Result};
use crate::imgops;

/// Similarity between two equally sized images; higher means more alike.
pub trait Matcher {
    fn id(&self) -> String;
    fn score(&self, a: &[f32], b: &[f32], h: usize, w: usize) -> Result<f64>;
}

/// Maximum normalized cross-correlation over a grid of translations and
/// rotations, mapped from `[-1, 1]` to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NccMatcher {
    pub max_shift: usize,
    pub max_rotation_deg: f64,
    pub rotation_step_deg: f64,
}

impl Default for NccMatcher {
    fn default() -> Self {
        Self { max_shift: 8, max_rotation_deg: 15.0, rotation_step_deg: 5.0 }
    }
}

impl NccMatcher {
    fn angles(&self) -> Vec<f64> {
        if self.rotation_step_deg <= 0.0 || self.max_rotation_deg <= 0.0 {
            return vec![0.0];
        }
        let steps = (self.max_rotation_deg / self.rotation_step_deg).floor() as i64;
        (-steps..=steps).map(|i| i as f64 * self.rotation_step_deg).collect()
    }

    /// Best correlation of `a` against rotated and shifted copies of `b`.
    fn directed(&self, a: &[f32], b: &[f32], h: usize, w: usize) -> f64 {
        let s = self.max_shift.min(h.saturating_sub(1)).min(w.saturating_sub(1)) as i64;
        let mut best = -1.0f64;
        for deg in self.angles() {
            let rb = imgops::rotate(b, h, w, deg);
            for dy in -s..=s {
                for dx in -s..=s {
                    best = best.max(overlap_ncc(a, &rb, h, w, dy, dx));
                }
            }
        }
        best
    }
}

/// NCC of `a(y, x)` against `b(y + dy, x + dx)` over the overlapping window.
/// Flat windows correlate as 0.
pub fn overlap_ncc(a: &[f32], b: &[f32], h: usize, w: usize, dy: i64, dx: i64) -> f64 {
    let y0 = 0.max(-dy) as usize;
    let y1 = (h as i64).min(h as i64 - dy) as usize;
    let x0 = 0.max(-dx) as usize;
    let x1 = (w as i64).min(w as i64 - dx) as usize;
    if y1 <= y0 || x1 <= x0 {
        return 0.0;
    }
    let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for y in y0..y1 {
        let ra = &a[y * w + x0..y * w + x1];
        let yb = (y as i64 + dy) as usize;
        let xb = (x0 as i64 + dx) as usize;
        let rb = &b[yb * w + xb..yb * w + xb + (x1 - x0)];
        // f32 partial sums per row keep the inner loop vectorizable
        let (mut pa, mut pb, mut paa, mut pbb, mut pab) = (0.0f32, 0.0f32, 0.0f32, 0.0f32, 0.0f32);
        for (&u, &v) in ra.iter().zip(rb) {
            pa += u;
            pb += v;
            paa += u * u;
            pbb += v * v;
            pab += u * v;
        }
        sa += pa as f64;
        sb += pb as f64;
        saa += paa as f64;
        sbb += pbb as f64;
        sab += pab as f64;
    }
    let n = ((y1 - y0) * (x1 - x0)) as f64;
    let cov = sab - sa * sb / n;
    let va = saa - sa * sa / n;
    let vb = sbb - sb * sb / n;
    if va <= 1e-9 * n || vb <= 1e-9 * n {
        return 0.0;
    }
    (cov / (va * vb).sqrt()).clamp(-1.0, 1.0)
}

fn lexical(a: &[f32], b: &[f32]) -> Ordering {
    a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(Ordering::Equal)
}

impl Matcher for NccMatcher {
    fn id(&self) -> String {
        format!("ncc-s{}-r{}-d{}", self.max_shift, self.max_rotation_deg, self.rotation_step_deg)
    }

    /// Exactly symmetric: the lexically smaller image is always the fixed one.
    fn score(&self, a: &[f32], b: &[f32], h: usize, w: usize) -> Result<f64> {
        if a.len() != h * w || b.len() != h * w {
            return Err(arg_err(format!("match inputs have {} and {} pixels, expected {}", a.len(), b.len(), h * w)));
        }
        let ncc = match lexical(a, b) {
            Ordering::Greater => self.directed(b, a, h, w),
            _ => self.directed(a, b, h, w),
        };
        Ok((ncc + 1.0) / 2.0)
    }
}

/// Score with the default matcher.
pub fn default_match_score(a: &[f32], b: &[f32], h: usize, w: usize) -> Result<f64> {
    NccMatcher::default().score(a, b, h, w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img(seed: u32) -> Vec<f32> {
        (0..256u32).map(|i| (((i * 7919 + seed * 104_729) % 1000) as f32 / 500.0) - 1.0).collect()
    }

    #[test]
    fn identical_images_score_one() {
        let a = img(1);
        assert!((default_match_score(&a, &a, 16, 16).unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn negation_scores_near_zero() {
        let a = img(2);
        let neg: Vec<f32> = a.iter().map(|v| -v).collect();
        let m = NccMatcher { max_shift: 0, max_rotation_deg: 0.0, ..Default::default() };
        assert!(m.score(&a, &neg, 16, 16).unwrap() < 1e-6);
    }

    #[test]
    fn symmetric() {
        let (a, b) = (img(3), img(4));
        let m = NccMatcher { max_shift: 3, ..Default::default() };
        assert_eq!(m.score(&a, &b, 16, 16).unwrap(), m.score(&b, &a, 16, 16).unwrap());
    }

    #[test]
    fn size_mismatch() {
        assert!(default_match_score(&[0.0; 4], &[0.0; 9], 2, 2).is_err());
    }
}
