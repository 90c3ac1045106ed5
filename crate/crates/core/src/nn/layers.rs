use tch::nn::{self, Module};
use tch::Tensor;

pub fn conv(p: nn::Path, c_in: i64, c_out: i64, k: i64, stride: i64, padding: i64) -> nn::Conv2D {
    let cfg = nn::ConvConfig { stride, padding, ..Default::default() };
    nn::conv2d(p, c_in, c_out, k, cfg)
}

pub fn depthwise(p: nn::Path, c: i64, k: i64) -> nn::Conv2D {
    let cfg = nn::ConvConfig { padding: k / 2, groups: c, ..Default::default() };
    nn::conv2d(p, c, c, k, cfg)
}

/// Transposed 3x3 convolution with stride 2 that exactly doubles H and W.
pub fn up_conv(p: nn::Path, c_in: i64, c_out: i64) -> nn::ConvTranspose2D {
    let cfg = nn::ConvTransposeConfig { stride: 2, padding: 1, output_padding: 1, ..Default::default() };
    nn::conv_transpose2d(p, c_in, c_out, 3, cfg)
}

pub fn leaky_relu(x: &Tensor, slope: f64) -> Tensor {
    x.maximum(&(x * slope))
}

/// Per-sample, per-channel normalization over H and W without learned affine
/// parameters. Written out in elementary ops so it supports double backward.
pub fn instance_norm(x: &Tensor) -> Tensor {
    let mean = x.mean_dim(&[2i64, 3][..], true, None);
    let centered = x - mean;
    let var = (&centered * &centered).mean_dim(&[2i64, 3][..], true, None);
    centered / (var + 1e-5).sqrt()
}

/// Group normalization with learned scale/shift. One group is layer
/// normalization over C, H and W.
#[derive(Debug)]
pub struct GroupNorm {
    inner: nn::GroupNorm,
}

impl GroupNorm {
    pub fn new(p: nn::Path, groups: i64, channels: i64) -> Self {
        let groups = largest_divisor_at_most(channels, groups);
        Self { inner: nn::group_norm(p, groups, channels, Default::default()) }
    }
}

impl Module for GroupNorm {
    fn forward(&self, xs: &Tensor) -> Tensor {
        self.inner.forward(xs)
    }
}

fn largest_divisor_at_most(n: i64, k: i64) -> i64 {
    (1..=k.min(n)).rev().find(|d| n % d == 0).unwrap_or(1)
}

/// Human-readable record of a network's layer sequence, used for
/// architecture introspection.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Architecture {
    pub layers: Vec<String>,
}

impl Architecture {
    pub fn push(&mut self, layer: impl Into<String>) {
        self.layers.push(layer.into());
    }

    pub fn contains(&self, needle: &str) -> bool {
        self.layers.iter().any(|l| l.contains(needle))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tch::{Device, Kind};

    #[test]
    fn instance_norm_standardizes_each_map() {
        let x = Tensor::arange(2 * 3 * 16, (Kind::Double, Device::Cpu)).view([2, 3, 4, 4]);
        let y = instance_norm(&x);
        let m = y.mean_dim(&[2i64, 3][..], false, None);
        assert!(m.abs().max().double_value(&[]) < 1e-12);
        let v = y.var_dim(&[2i64, 3][..], false, false);
        assert!((v - 1.0).abs().max().double_value(&[]) < 1e-4);
    }

    #[test]
    fn leaky_relu_slope() {
        let x = Tensor::from_slice(&[-1.0f64, 2.0]);
        let y = Vec::<f64>::try_from(&leaky_relu(&x, 0.2)).unwrap();
        assert_eq!(y, vec![-0.2, 2.0]);
    }

    #[test]
    fn group_count_falls_back_to_divisor() {
        assert_eq!(largest_divisor_at_most(12, 8), 6);
        assert_eq!(largest_divisor_at_most(7, 8), 7);
        assert_eq!(largest_divisor_at_most(5, 2), 1);
    }
}
