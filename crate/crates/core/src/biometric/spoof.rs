use std::fmt::Write as _;

use crate::batch::ImageBatch;
use crate::error::{arg_err, Result};
use crate::metrics::CnnExtractor;

/// Scores in `[0, 1]`; higher means more spoof-like.
pub trait SpoofScorer {
    fn id(&self) -> String;
    fn score(&self, batch: &ImageBatch) -> Result<Vec<f64>>;
}

/// Small convolutional live/spoof classifier trained on labelled toy data.
#[derive(Debug)]
pub struct SpoofClassifier {
    net: CnnExtractor,
}

impl SpoofClassifier {
    /// Trains on live (label 0) and spoof (label 1) images.
    pub fn train(live: &ImageBatch, spoof: &ImageBatch, epochs: usize, seed: u64) -> Result<Self> {
        if live.is_empty() || spoof.is_empty() {
            return Err(arg_err("spoof classifier needs both live and spoof examples"));
        }
        let images = ImageBatch::concat(&[live.clone(), spoof.clone()])?;
        let labels: Vec<i64> = (0..images.len()).map(|i| (i >= live.len()) as i64).collect();
        let mut net = CnnExtractor::new(8, Some(2), seed);
        net.train(&images, &labels, epochs, 16)?;
        Ok(Self { net })
    }
}

impl SpoofScorer for SpoofClassifier {
    fn id(&self) -> String {
        format!("spoof-classifier/{}", crate::metrics::FeatureExtractor::id(&self.net))
    }

    fn score(&self, batch: &ImageBatch) -> Result<Vec<f64>> {
        Ok(self.net.class_probabilities(batch)?.into_iter().map(|p| p[1]).collect())
    }
}

/// Fixed-width histogram over `[0, 1]` with summary statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreHistogram {
    pub counts: Vec<usize>,
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl ScoreHistogram {
    pub fn from_scores(scores: &[f64], bins: usize) -> Result<Self> {
        if scores.is_empty() {
            return Err(arg_err("histogram of an empty score set"));
        }
        if bins == 0 {
            return Err(arg_err("histogram needs at least one bin"));
        }
        let mut counts = vec![0usize; bins];
        for &s in scores {
            let b = ((s.clamp(0.0, 1.0) * bins as f64).floor() as usize).min(bins - 1);
            counts[b] += 1;
        }
        let n = scores.len();
        let mean = scores.iter().sum::<f64>() / n as f64;
        let std = (scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(Self { counts, n, mean, std, min, max })
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    /// Overlap coefficient: sum over bins of the smaller normalized count.
    pub fn overlap(&self, other: &ScoreHistogram) -> Result<f64> {
        if self.bins() != other.bins() {
            return Err(arg_err("histograms have different bin counts"));
        }
        Ok(self
            .counts
            .iter()
            .zip(&other.counts)
            .map(|(&a, &b)| (a as f64 / self.n as f64).min(b as f64 / other.n as f64))
            .sum())
    }

    /// Rows `bin_left,bin_right,count`.
    pub fn to_text(&self) -> String {
        let mut out = format!("# n {} mean {:.6} std {:.6} min {:.6} max {:.6}\nbin_left,bin_right,count\n", self.n, self.mean, self.std, self.min, self.max);
        let w = 1.0 / self.bins() as f64;
        for (i, c) in self.counts.iter().enumerate() {
            writeln!(out, "{:.6},{:.6},{c}", i as f64 * w, (i + 1) as f64 * w).expect("string write");
        }
        out
    }
}

pub fn spoof_score_histogram(scorer: &dyn SpoofScorer, images: &ImageBatch, bins: usize) -> Result<ScoreHistogram> {
    if images.is_empty() {
        return Err(arg_err("spoof histogram of an empty dataset"));
    }
    ScoreHistogram::from_scores(&scorer.score(images)?, bins)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_scores_fill_one_bin() {
        let h = ScoreHistogram::from_scores(&[0.5; 7], 10).unwrap();
        assert_eq!(h.counts.iter().filter(|&&c| c > 0).count(), 1);
        assert_eq!(h.counts.iter().sum::<usize>(), 7);
        assert_eq!(h.counts[5], 7);
    }

    #[test]
    fn overlap_extremes() {
        let a = ScoreHistogram::from_scores(&[0.1, 0.2, 0.25], 4).unwrap();
        let b = ScoreHistogram::from_scores(&[0.9, 0.95], 4).unwrap();
        assert_eq!(a.overlap(&a).unwrap(), 1.0);
        assert_eq!(a.overlap(&b).unwrap(), 0.0);
    }

    #[test]
    fn upper_edge_in_last_bin() {
        let h = ScoreHistogram::from_scores(&[1.0, 0.0], 5).unwrap();
        assert_eq!(h.counts, vec![1, 0, 0, 0, 1]);
    }
}
