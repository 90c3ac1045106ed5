//! Variance schedules for the diffusion forward process.
//!
//! Steps are 1-based: `beta(1)` is the first noising step and `beta(T)` the
//! last. `alpha_bar(0)` is defined as 1 so that formulas which reach back one
//! step work uniformly.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};

pub const DEFAULT_COSINE_OFFSET: f64 = 0.008;
pub const MAX_COSINE_BETA: f64 = 0.999;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    Linear,
    Cosine,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    kind: ScheduleKind,
    betas: Vec<f64>,
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
    sigmas: Vec<f64>,
}

impl NoiseSchedule {
    /// Linearly spaced betas from `beta_min` at step 1 to `beta_max` at step T.
    pub fn linear(steps: usize, beta_min: f64, beta_max: f64) -> Result<Self> {
        if steps == 0 {
            return Err(config_err("schedule needs at least one step"));
        }
        if !(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0) {
            return Err(config_err(format!(
                "linear schedule needs 0 < beta_min <= beta_max < 1, got [{beta_min}, {beta_max}]"
            )));
        }
        let betas = if steps == 1 {
            vec![beta_min]
        } else {
            let span = (beta_max - beta_min) / (steps - 1) as f64;
            (0..steps).map(|i| beta_min + span * i as f64).collect()
        };
        Self::from_betas(ScheduleKind::Linear, betas)
    }

    /// Squared-cosine schedule with betas clipped to `(0, 0.999]`.
    pub fn cosine(steps: usize, offset: f64) -> Result<Self> {
        Self::cosine_clipped(steps, offset, None)
    }

    /// Cosine schedule with an optional extra `[lo, hi]` clip on every beta.
    pub fn cosine_clipped(steps: usize, offset: f64, clip: Option<(f64, f64)>) -> Result<Self> {
        if steps == 0 {
            return Err(config_err("schedule needs at least one step"));
        }
        if !(offset > 0.0 && offset.is_finite()) {
            return Err(config_err(format!("cosine offset must be positive, got {offset}")));
        }
        let (lo, hi) = match clip {
            Some((lo, hi)) => {
                if !(lo > 0.0 && lo <= hi && hi < 1.0) {
                    return Err(config_err(format!("invalid beta clip range [{lo}, {hi}]")));
                }
                (lo, hi.min(MAX_COSINE_BETA))
            }
            None => (f64::MIN_POSITIVE, MAX_COSINE_BETA),
        };
        let betas = (1..=steps)
            .map(|t| {
                let prev = cosine_alpha_bar(t - 1, steps, offset);
                let cur = cosine_alpha_bar(t, steps, offset);
                (1.0 - cur / prev).clamp(lo, hi)
            })
            .collect();
        Self::from_betas(ScheduleKind::Cosine, betas)
    }

    pub fn from_betas(kind: ScheduleKind, betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(config_err("schedule needs at least one step"));
        }
        if let Some((i, b)) = betas.iter().enumerate().find(|(_, b)| !(**b > 0.0 && **b < 1.0)) {
            return Err(config_err(format!("beta at step {} is {b}, expected (0, 1)", i + 1)));
        }
        let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bars = Vec::with_capacity(alphas.len());
        let mut acc = 1.0;
        for a in &alphas {
            acc *= a;
            alpha_bars.push(acc);
        }
        let sigmas = (0..betas.len())
            .map(|i| {
                if i == 0 {
                    0.0
                } else {
                    let var = betas[i] * (1.0 - alpha_bars[i - 1]) / (1.0 - alpha_bars[i]);
                    var.max(0.0).sqrt()
                }
            })
            .collect();
        Ok(Self { kind, betas, alphas, alpha_bars, sigmas })
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    fn idx(&self, t: usize) -> usize {
        assert!(t >= 1 && t <= self.steps(), "step {t} outside 1..={}", self.steps());
        t - 1
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.betas[self.idx(t)]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alphas[self.idx(t)]
    }

    /// Cumulative product of alphas up to and including step `t`; 1 at `t = 0`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bars[self.idx(t)]
        }
    }

    /// Posterior standard deviation used by the reverse step; zero at step 1.
    pub fn sigma(&self, t: usize) -> f64 {
        self.sigmas[self.idx(t)]
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    pub fn check_step(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps() {
            Err(Error::Argument(format!("step {t} outside 1..={}", self.steps())))
        } else {
            Ok(())
        }
    }

    /// Plain-text table with one row per step: `t beta alpha_bar sigma`.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let kind = match self.kind {
            ScheduleKind::Linear => "linear",
            ScheduleKind::Cosine => "cosine",
        };
        writeln!(out, "# kind {kind} steps {}", self.steps()).unwrap();
        writeln!(out, "# t beta alpha_bar sigma").unwrap();
        for t in 1..=self.steps() {
            writeln!(
                out,
                "{t} {:.12e} {:.12e} {:.12e}",
                self.beta(t),
                self.alpha_bar(t),
                self.sigma(t)
            )
            .unwrap();
        }
        out
    }

    /// Rebuilds a schedule from [`NoiseSchedule::to_table`] output. Only the
    /// beta column is authoritative; the other columns are recomputed.
    pub fn from_table(text: &str) -> Result<Self> {
        let mut kind = None;
        let mut betas = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let mut words = rest.split_whitespace();
                if words.next() == Some("kind") {
                    kind = match words.next() {
                        Some("linear") => Some(ScheduleKind::Linear),
                        Some("cosine") => Some(ScheduleKind::Cosine),
                        other => {
                            return Err(config_err(format!("unknown schedule kind {other:?}")))
                        }
                    };
                }
                continue;
            }
            let cols: Vec<&str> = line.split_whitespace().collect();
            if cols.len() != 4 {
                return Err(config_err(format!("line {}: expected 4 columns", lineno + 1)));
            }
            let t: usize = cols[0]
                .parse()
                .map_err(|_| config_err(format!("line {}: bad step index", lineno + 1)))?;
            if t != betas.len() + 1 {
                return Err(config_err(format!("line {}: steps out of order", lineno + 1)));
            }
            let beta: f64 = cols[1]
                .parse()
                .map_err(|_| config_err(format!("line {}: bad beta", lineno + 1)))?;
            betas.push(beta);
        }
        let kind = kind.ok_or_else(|| config_err("schedule table has no kind header"))?;
        Self::from_betas(kind, betas)
    }
}

/// `f(t) / f(0)` with `f(t) = cos^2(((t/T + s) / (1 + s)) * pi/2)`, unclipped.
pub fn cosine_alpha_bar(t: usize, steps: usize, offset: f64) -> f64 {
    let f = |t: f64| {
        let c = ((t / steps as f64 + offset) / (1.0 + offset) * std::f64::consts::FRAC_PI_2).cos();
        c * c
    };
    f(t as f64) / f(0.0)
}
