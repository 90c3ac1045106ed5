//! Single-channel image batches in the normalized `[-1, 1]` range.

use rand::Rng;
use rand_distr::StandardNormal;
use tch::{Device, Kind, Tensor};

use crate::error::{arg_err, Result};

pub const VALUE_MIN: f32 = -1.0;
pub const VALUE_MAX: f32 = 1.0;

/// `B x 1 x H x W` images stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBatch {
    data: Vec<f32>,
    batch: usize,
    height: usize,
    width: usize,
}

impl ImageBatch {
    pub fn new(batch: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != batch * height * width {
            return Err(arg_err(format!(
                "batch {batch}x1x{height}x{width} needs {} values, got {}",
                batch * height * width,
                data.len()
            )));
        }
        Ok(Self { data, batch, height, width })
    }

    pub fn filled(batch: usize, height: usize, width: usize, value: f32) -> Self {
        Self { data: vec![value; batch * height * width], batch, height, width }
    }

    pub fn zeros(batch: usize, height: usize, width: usize) -> Self {
        Self::filled(batch, height, width, 0.0)
    }

    /// Unit Gaussian noise.
    pub fn gaussian<R: Rng + ?Sized>(batch: usize, height: usize, width: usize, rng: &mut R) -> Self {
        let data = (0..batch * height * width).map(|_| rng.sample::<f32, _>(StandardNormal)).collect();
        Self { data, batch, height, width }
    }

    /// Stacks equally sized single images.
    pub fn stack(images: &[&[f32]], height: usize, width: usize) -> Result<Self> {
        let mut data = Vec::with_capacity(images.len() * height * width);
        for (i, img) in images.iter().enumerate() {
            if img.len() != height * width {
                return Err(arg_err(format!("image {i} has {} pixels, expected {}", img.len(), height * width)));
            }
            data.extend_from_slice(img);
        }
        Ok(Self { data, batch: images.len(), height, width })
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let size = t.size();
        let (b, h, w) = match size.as_slice() {
            [b, 1, h, w] => (*b as usize, *h as usize, *w as usize),
            [b, h, w] => (*b as usize, *h as usize, *w as usize),
            other => return Err(arg_err(format!("expected a Bx1xHxW tensor, got {other:?}"))),
        };
        let flat = t.detach().to_device(Device::Cpu).to_kind(Kind::Float).contiguous().view([-1]);
        let data = Vec::<f32>::try_from(&flat)?;
        Self::new(b, h, w, data)
    }

    pub fn to_tensor(&self, kind: Kind) -> Tensor {
        Tensor::from_slice(&self.data)
            .view([self.batch as i64, 1, self.height as i64, self.width as i64])
            .to_kind(kind)
    }

    pub fn len(&self) -> usize {
        self.batch
    }

    pub fn is_empty(&self) -> bool {
        self.batch == 0
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels_per_image(&self) -> usize {
        self.height * self.width
    }

    pub fn shape(&self) -> [usize; 4] {
        [self.batch, 1, self.height, self.width]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn image(&self, i: usize) -> &[f32] {
        let n = self.pixels_per_image();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn image_mut(&mut self, i: usize) -> &mut [f32] {
        let n = self.pixels_per_image();
        &mut self.data[i * n..(i + 1) * n]
    }

    pub fn images(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks(self.pixels_per_image().max(1)).take(self.batch)
    }

    /// Copies out images `range` as a new batch.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        let n = self.pixels_per_image();
        Self {
            data: self.data[range.start * n..range.end * n].to_vec(),
            batch: range.len(),
            height: self.height,
            width: self.width,
        }
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.pixels_per_image());
        for &i in indices {
            data.extend_from_slice(self.image(i));
        }
        Self { data, batch: indices.len(), height: self.height, width: self.width }
    }

    pub fn concat(parts: &[ImageBatch]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| arg_err("nothing to concatenate"))?;
        let mut data = Vec::new();
        let mut batch = 0;
        for p in parts {
            first.check_same_image_size(p)?;
            data.extend_from_slice(&p.data);
            batch += p.batch;
        }
        Ok(Self { data, batch, height: first.height, width: first.width })
    }

    pub fn check_same_shape(&self, other: &ImageBatch) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(arg_err(format!("shape mismatch: {:?} vs {:?}", self.shape(), other.shape())));
        }
        Ok(())
    }

    pub fn check_same_image_size(&self, other: &ImageBatch) -> Result<()> {
        if (self.height, self.width) != (other.height, other.width) {
            return Err(arg_err(format!(
                "image size mismatch: {}x{} vs {}x{}",
                self.height, self.width, other.height, other.width
            )));
        }
        Ok(())
    }

    pub fn clamp_to_range(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(VALUE_MIN, VALUE_MAX);
        }
    }

    pub fn is_in_range(&self) -> bool {
        self.data.iter().all(|v| (VALUE_MIN..=VALUE_MAX).contains(v))
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn tensor_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = ImageBatch::gaussian(3, 4, 5, &mut rng);
        let t = b.to_tensor(Kind::Double);
        assert_eq!(t.size(), vec![3, 1, 4, 5]);
        assert_eq!(ImageBatch::from_tensor(&t).unwrap(), b);
    }

    #[test]
    fn rejects_wrong_length() {
        assert!(ImageBatch::new(2, 2, 2, vec![0.0; 7]).is_err());
    }

    #[test]
    fn select_and_slice() {
        let b = ImageBatch::new(3, 1, 2, vec![0., 1., 2., 3., 4., 5.]).unwrap();
        assert_eq!(b.slice(1..3).data(), &[2., 3., 4., 5.]);
        assert_eq!(b.select(&[2, 0]).data(), &[4., 5., 0., 1.]);
        assert_eq!(b.images().count(), 3);
    }
}
