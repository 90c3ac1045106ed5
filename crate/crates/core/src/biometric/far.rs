use std::fmt::Write as _;

use crate::error::{arg_err, Result};

/// Accept threshold calibrated on real impostor scores. Pairs with
/// `score >= threshold` are accepted; an infinite threshold accepts nothing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FarThreshold {
    pub baseline_far: f64,
    pub threshold: f64,
    /// Number of impostor accepts the target allows, `floor(N * far)`.
    pub k: usize,
    pub realized_far: f64,
    /// Ties at the threshold push the realized rate above the target.
    pub tie: bool,
}

/// Threshold at the k-th highest impostor score, `k = floor(N * far)`.
pub fn calibrate_far_threshold(impostor_scores: &[f64], baseline_far: f64) -> Result<FarThreshold> {
    if impostor_scores.is_empty() {
        return Err(arg_err("FAR calibration needs at least one impostor score"));
    }
    if !(baseline_far > 0.0 && baseline_far < 1.0) {
        return Err(arg_err(format!("baseline FAR {baseline_far} must lie in (0, 1)")));
    }
    if let Some(bad) = impostor_scores.iter().find(|s| !s.is_finite()) {
        return Err(arg_err(format!("non-finite impostor score {bad}")));
    }
    let n = impostor_scores.len();
    // the relative nudge keeps products such as 100 * 0.07 from flooring one low
    let k = ((n as f64 * baseline_far) * (1.0 + 1e-12)).floor() as usize;
    if k == 0 {
        return Ok(FarThreshold { baseline_far, threshold: f64::INFINITY, k, realized_far: 0.0, tie: false });
    }
    let mut sorted = impostor_scores.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let threshold = sorted[k - 1];
    let accepted = sorted.iter().take_while(|&&s| s >= threshold).count();
    Ok(FarThreshold { baseline_far, threshold, k, realized_far: accepted as f64 / n as f64, tie: accepted > k })
}

/// Fraction of scores at or above the threshold.
pub fn compute_synthetic_far(scores: &[f64], threshold: f64) -> f64 {
    if scores.is_empty() {
        return 0.0;
    }
    scores.iter().filter(|&&s| s >= threshold).count() as f64 / scores.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct FarRow {
    pub population: String,
    pub baseline_far: f64,
    pub threshold: f64,
    pub synthetic_far: f64,
    pub tie: bool,
}

/// Structured text keyed by population and baseline FAR.
pub fn far_report_text(rows: &[FarRow]) -> String {
    let mut out = String::from("pair_population,baseline_far,threshold,synthetic_far,tie_flag\n");
    for r in rows {
        let thr = if r.threshold.is_infinite() { "inf".to_string() } else { format!("{:.9}", r.threshold) };
        writeln!(out, "{},{:e},{thr},{:.9},{}", r.population, r.baseline_far, r.synthetic_far, r.tie).expect("string write");
    }
    out
}

/// Empirical cumulative distribution `(score, fraction <= score)` with one
/// point per distinct score.
pub fn cumulative_distribution(scores: &[f64]) -> Vec<(f64, f64)> {
    let mut s = scores.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, v) in s.iter().enumerate() {
        let frac = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == *v => last.1 = frac,
            _ => out.push((*v, frac)),
        }
    }
    out
}
