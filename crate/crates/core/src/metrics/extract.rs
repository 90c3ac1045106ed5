use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use tch::nn::{self, Module, OptimizerConfig};
use tch::{CModule, Device, Kind, Tensor};

use super::features::FeatureSet;
use crate::batch::ImageBatch;
use crate::error::{arg_err, Error, Result};
use crate::nn::layers::{conv, leaky_relu};
use crate::nn::seeded_init;
use crate::rng::stream_rng;

/// Maps images to fixed-length embeddings.
pub trait FeatureExtractor {
    fn id(&self) -> String;
    fn dim(&self) -> usize;
    /// Row-major `batch.len() x dim()` embeddings.
    fn embed(&self, batch: &ImageBatch) -> Result<Vec<f64>>;
}

/// Runs the extractor over a stream of batches. Non-finite activations abort
/// with an error naming the batch.
pub fn extract_features<I>(extractor: &dyn FeatureExtractor, batches: I, source_id: &str) -> Result<FeatureSet>
where
    I: IntoIterator<Item = ImageBatch>,
{
    let d = extractor.dim();
    let (mut data, mut n) = (Vec::new(), 0);
    for (bi, batch) in batches.into_iter().enumerate() {
        let rows = extractor.embed(&batch).map_err(|e| Error::Extraction { batch: bi, reason: e.to_string() })?;
        if rows.len() != batch.len() * d {
            return Err(Error::Extraction { batch: bi, reason: format!("extractor returned {} values", rows.len()) });
        }
        if let Some(i) = rows.iter().position(|v| !v.is_finite()) {
            return Err(Error::Extraction { batch: bi, reason: format!("non-finite activation in image {}", i / d) });
        }
        n += batch.len();
        data.extend(rows);
    }
    Ok(FeatureSet::new(data, n, d)?.with_ids(extractor.id(), source_id))
}

/// Splits a batch into chunks and extracts features from all of them.
pub fn extract_chunked(extractor: &dyn FeatureExtractor, batch: &ImageBatch, chunk: usize, source_id: &str) -> Result<FeatureSet> {
    let chunk = chunk.max(1);
    let chunks = (0..batch.len()).step_by(chunk).map(|s| batch.slice(s..(s + chunk).min(batch.len())));
    extract_features(extractor, chunks, source_id)
}

/// Deterministic principal-component projection of raw pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelPca {
    pub mean: Vec<f64>,
    /// `k` unit-norm components, each `pixels` long.
    pub components: Vec<Vec<f64>>,
    pub pixels: usize,
}

impl PixelPca {
    /// Fits up to `k` components on `reference`. Each component's largest
    /// magnitude entry is made positive so the basis is unique.
    pub fn fit(reference: &ImageBatch, k: usize) -> Result<Self> {
        let (n, p) = (reference.len(), reference.pixels_per_image());
        if n < 2 || k == 0 {
            return Err(arg_err("pixel PCA needs at least two images and one component"));
        }
        let mut mean = vec![0.0f64; p];
        for img in reference.images() {
            mean.iter_mut().zip(img).for_each(|(m, v)| *m += *v as f64);
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let x = DMatrix::from_fn(n, p, |i, j| reference.image(i)[j] as f64 - mean[j]);

        // eigenvectors of X^T X, through the smaller Gram matrix when n < p
        let small = n < p;
        let gram = if small { &x * x.transpose() } else { x.transpose() * &x };
        let eig = SymmetricEigen::try_new(gram, 1e-13, 10_000)
            .ok_or_else(|| Error::Numerical("pixel PCA eigendecomposition did not converge".into()))?;
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
        let top = eig.eigenvalues[order[0]].max(0.0);
        let mut components = Vec::new();
        for &i in order.iter().take(k) {
            let lambda = eig.eigenvalues[i];
            if lambda <= top * 1e-10 || lambda <= 0.0 {
                break;
            }
            let u = eig.eigenvectors.column(i);
            let mut v: Vec<f64> = if small {
                (x.transpose() * u).iter().map(|c| c / lambda.sqrt()).collect()
            } else {
                u.iter().copied().collect()
            };
            let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
            v.iter_mut().for_each(|c| *c /= norm);
            let lead = v.iter().enumerate().fold(0, |best, (j, c)| if c.abs() > v[best].abs() { j } else { best });
            if v[lead] < 0.0 {
                v.iter_mut().for_each(|c| *c = -*c);
            }
            components.push(v);
        }
        Ok(Self { mean, components, pixels: p })
    }

    pub fn project(&self, img: &[f32]) -> Vec<f64> {
        self.components
            .iter()
            .map(|c| c.iter().zip(img).zip(&self.mean).map(|((w, v), m)| w * (*v as f64 - m)).sum())
            .collect()
    }
}

impl FeatureExtractor for PixelPca {
    fn id(&self) -> String {
        format!("pixel-pca-{}x{}", self.components.len(), self.pixels)
    }

    fn dim(&self) -> usize {
        self.components.len()
    }

    fn embed(&self, batch: &ImageBatch) -> Result<Vec<f64>> {
        if batch.pixels_per_image() != self.pixels {
            return Err(arg_err(format!("PCA fitted on {} pixels, got {}", self.pixels, batch.pixels_per_image())));
        }
        Ok(batch.images().flat_map(|img| self.project(img)).collect())
    }
}

/// Small convolutional embedding network, optionally trained as a
/// classifier on labelled toy data. The embedding is the pooled output of
/// the last convolution.
pub struct CnnExtractor {
    vs: nn::VarStore,
    body: Vec<nn::Conv2D>,
    head: Option<nn::Linear>,
    width: i64,
    seed: u64,
}

impl std::fmt::Debug for CnnExtractor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CnnExtractor").field("width", &self.width).field("seed", &self.seed).finish()
    }
}

impl CnnExtractor {
    pub fn new(width: i64, classes: Option<i64>, seed: u64) -> Self {
        let vs = nn::VarStore::new(Device::Cpu);
        let root = vs.root();
        let body = vec![
            conv(&root / "c0", 1, width, 3, 2, 1),
            conv(&root / "c1", width, 2 * width, 3, 2, 1),
            conv(&root / "c2", 2 * width, 4 * width, 3, 2, 1),
        ];
        let head = classes.map(|c| nn::linear(&root / "head", 4 * width, c, Default::default()));
        seeded_init(&vs, seed);
        Self { vs, body, head, width, seed }
    }

    fn features(&self, x: &Tensor) -> Tensor {
        let mut h = x.shallow_clone();
        for c in &self.body {
            h = leaky_relu(&c.forward(&h), 0.2);
        }
        h.mean_dim(&[2i64, 3][..], false, None)
    }

    /// Trains the classifier head and body with Adam on `(images, labels)`.
    /// Returns the final epoch's mean cross-entropy.
    pub fn train(&mut self, images: &ImageBatch, labels: &[i64], epochs: usize, batch_size: usize) -> Result<f64> {
        let head = self.head.as_ref().ok_or_else(|| arg_err("extractor has no classification head"))?;
        if labels.len() != images.len() || images.is_empty() {
            return Err(arg_err("need one label per image"));
        }
        let mut opt = nn::Adam::default().build(&self.vs, 1e-3)?;
        let mut last = f64::NAN;
        for epoch in 0..epochs {
            let mut rng = stream_rng(self.seed, epoch as u64 + 1);
            let mut order: Vec<usize> = (0..images.len()).collect();
            order.shuffle(&mut rng);
            let (mut total, mut count) = (0.0, 0);
            for idx in order.chunks(batch_size.max(1)) {
                let x = images.select(idx).to_tensor(Kind::Float);
                let y = Tensor::from_slice(&idx.iter().map(|&i| labels[i]).collect::<Vec<_>>());
                let loss = head.forward(&self.features(&x)).cross_entropy_for_logits(&y);
                opt.backward_step(&loss);
                total += loss.double_value(&[]);
                count += 1;
            }
            last = total / count as f64;
        }
        Ok(last)
    }

    /// Softmax class probabilities, one row per image.
    pub fn class_probabilities(&self, batch: &ImageBatch) -> Result<Vec<Vec<f64>>> {
        let head = self.head.as_ref().ok_or_else(|| arg_err("extractor has no classification head"))?;
        let p = tch::no_grad(|| head.forward(&self.features(&batch.to_tensor(Kind::Float))).softmax(-1, Kind::Double));
        let classes = p.size()[1] as usize;
        let flat = Vec::<f64>::try_from(p.contiguous().view([-1]))?;
        Ok(flat.chunks(classes).map(<[f64]>::to_vec).collect())
    }
}

impl FeatureExtractor for CnnExtractor {
    fn id(&self) -> String {
        format!("cnn-w{}-s{}", self.width, self.seed)
    }

    fn dim(&self) -> usize {
        4 * self.width as usize
    }

    fn embed(&self, batch: &ImageBatch) -> Result<Vec<f64>> {
        let f = tch::no_grad(|| self.features(&batch.to_tensor(Kind::Float)));
        Ok(Vec::<f64>::try_from(f.to_kind(Kind::Double).contiguous().view([-1]))?)
    }
}

/// A serialized TorchScript embedding network, such as a pretrained
/// classifier exported without its final layer.
pub struct TorchScriptExtractor {
    module: CModule,
    path: PathBuf,
    input_size: i64,
    rgb: bool,
    dim: usize,
}

impl TorchScriptExtractor {
    /// Loads the module and probes its output width with one zero image.
    /// Inputs are resized bilinearly to `input_size` and, with `rgb`,
    /// replicated to three channels.
    pub fn load(path: &Path, input_size: i64, rgb: bool) -> Result<Self> {
        let module = CModule::load(path).map_err(|e| Error::Load { path: path.to_path_buf(), reason: e.to_string() })?;
        let mut ex = Self { module, path: path.to_path_buf(), input_size, rgb, dim: 0 };
        let probe = ex.run(&Tensor::zeros([1, 1, 8, 8], (Kind::Float, Device::Cpu)))?;
        ex.dim = probe.size().iter().skip(1).product::<i64>() as usize;
        Ok(ex)
    }

    fn run(&self, x: &Tensor) -> Result<Tensor> {
        let mut x = x.upsample_bilinear2d([self.input_size, self.input_size], false, None, None);
        if self.rgb {
            x = x.repeat([1, 3, 1, 1]);
        }
        let out = tch::no_grad(|| self.module.forward_ts(&[x]))?;
        let b = out.size()[0];
        Ok(out.view([b, -1]))
    }
}

impl FeatureExtractor for TorchScriptExtractor {
    fn id(&self) -> String {
        format!("torchscript:{}", self.path.display())
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, batch: &ImageBatch) -> Result<Vec<f64>> {
        let out = self.run(&batch.to_tensor(Kind::Float))?;
        Ok(Vec::<f64>::try_from(out.to_kind(Kind::Double).contiguous().view([-1]))?)
    }
}
