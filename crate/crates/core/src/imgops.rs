//! Small geometric and filtering operations on single-channel row-major images.

/// Mirror left-right.
pub fn hflip(img: &[f32], h: usize, w: usize) -> Vec<f32> {
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = img[y * w + (w - 1 - x)];
        }
    }
    out
}

fn sample_clamped(img: &[f32], h: usize, w: usize, y: f64, x: f64) -> f32 {
    let y = y.clamp(0.0, (h - 1) as f64);
    let x = x.clamp(0.0, (w - 1) as f64);
    let (y0, x0) = (y.floor() as usize, x.floor() as usize);
    let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
    let (fy, fx) = ((y - y0 as f64) as f32, (x - x0 as f64) as f32);
    let top = img[y0 * w + x0] * (1.0 - fx) + img[y0 * w + x1] * fx;
    let bot = img[y1 * w + x0] * (1.0 - fx) + img[y1 * w + x1] * fx;
    top * (1.0 - fy) + bot * fy
}

/// Rotation about the image center with bilinear sampling and edge
/// replication. Zero degrees returns an exact copy.
pub fn rotate(img: &[f32], h: usize, w: usize, degrees: f64) -> Vec<f32> {
    if degrees == 0.0 {
        return img.to_vec();
    }
    let (s, c) = degrees.to_radians().sin_cos();
    let cy = (h as f64 - 1.0) / 2.0;
    let cx = (w as f64 - 1.0) / 2.0;
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let (dy, dx) = (y as f64 - cy, x as f64 - cx);
            // inverse map: rotate the destination coordinate by -angle
            let sx = c * dx + s * dy + cx;
            let sy = -s * dx + c * dy + cy;
            out[y * w + x] = sample_clamped(img, h, w, sy, sx);
        }
    }
    out
}

/// Integer translation with edge replication; positive `dx` moves content right.
pub fn translate(img: &[f32], h: usize, w: usize, dy: i64, dx: i64) -> Vec<f32> {
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        let sy = (y as i64 - dy).clamp(0, h as i64 - 1) as usize;
        for x in 0..w {
            let sx = (x as i64 - dx).clamp(0, w as i64 - 1) as usize;
            out[y * w + x] = img[sy * w + sx];
        }
    }
    out
}

/// Separable Gaussian blur with edge replication.
pub fn gaussian_blur(img: &[f32], h: usize, w: usize, sigma: f64) -> Vec<f32> {
    if sigma <= 0.0 {
        return img.to_vec();
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let kernel: Vec<f64> = (-radius..=radius).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let norm: f64 = kernel.iter().sum();
    let kernel: Vec<f64> = kernel.iter().map(|k| k / norm).collect();
    let mut tmp = vec![0.0f32; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, kv) in kernel.iter().enumerate() {
                let sx = (x as i64 + k as i64 - radius).clamp(0, w as i64 - 1) as usize;
                acc += kv * img[y * w + sx] as f64;
            }
            tmp[y * w + x] = acc as f32;
        }
    }
    let mut out = vec![0.0f32; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, kv) in kernel.iter().enumerate() {
                let sy = (y as i64 + k as i64 - radius).clamp(0, h as i64 - 1) as usize;
                acc += kv * tmp[sy * w + x] as f64;
            }
            out[y * w + x] = acc as f32;
        }
    }
    out
}

/// Centers an `h x w` image on a `size x size` canvas filled with `fill`.
pub fn pad_center(img: &[f32], h: usize, w: usize, size: usize, fill: f32) -> Option<Vec<f32>> {
    if h > size || w > size {
        return None;
    }
    let (top, left) = ((size - h) / 2, (size - w) / 2);
    let mut out = vec![fill; size * size];
    for y in 0..h {
        out[(top + y) * size + left..(top + y) * size + left + w].copy_from_slice(&img[y * w..(y + 1) * w]);
    }
    Some(out)
}

/// Inverse of [`pad_center`].
pub fn unpad_center(img: &[f32], size: usize, h: usize, w: usize) -> Vec<f32> {
    let (top, left) = ((size - h) / 2, (size - w) / 2);
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        out.extend_from_slice(&img[(top + y) * size + left..(top + y) * size + left + w]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flip_is_an_involution() {
        let img: Vec<f32> = (0..12).map(|v| v as f32).collect();
        assert_eq!(hflip(&hflip(&img, 3, 4), 3, 4), img);
        assert_eq!(&hflip(&img, 3, 4)[..4], &[3.0, 2.0, 1.0, 0.0]);
    }

    #[test]
    fn rotating_by_ninety_degrees_permutes_pixels() {
        let img: Vec<f32> = (0..9).map(|v| v as f32).collect();
        let r = rotate(&img, 3, 3, 90.0);
        let back = rotate(&r, 3, 3, -90.0);
        for (a, b) in back.iter().zip(&img) {
            assert!((a - b).abs() < 1e-4);
        }
        assert!((r[4] - 4.0).abs() < 1e-6);
    }

    #[test]
    fn pad_then_unpad() {
        let img: Vec<f32> = (0..6).map(|v| v as f32).collect();
        let p = pad_center(&img, 2, 3, 7, -1.0).unwrap();
        assert_eq!(p.len(), 49);
        assert_eq!(unpad_center(&p, 7, 2, 3), img);
        assert!(pad_center(&img, 2, 3, 2, 0.0).is_none());
    }

    #[test]
    fn blur_preserves_constants() {
        let img = vec![0.5f32; 25];
        assert!(gaussian_blur(&img, 5, 5, 1.2).iter().all(|v| (v - 0.5).abs() < 1e-6));
    }
}
