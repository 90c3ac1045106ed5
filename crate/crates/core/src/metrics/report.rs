use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::prdc::Prdc;
use crate::error::{config_err, Result};

pub const REPORT_KEYS: [&str; 9] = ["fid", "kid", "precision", "recall", "density", "coverage", "k", "n_a", "n_b"];

/// Metric values for one (reference, candidate) comparison. Values that were
/// not computed stay `None` and are written as `absent`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub fid: Option<f64>,
    pub kid: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub density: Option<f64>,
    pub coverage: Option<f64>,
    pub k: Option<usize>,
    pub n_a: usize,
    pub n_b: usize,
}

impl MetricReport {
    pub fn with_prdc(mut self, p: Prdc) -> Self {
        self.precision = Some(p.precision);
        self.recall = Some(p.recall);
        self.density = Some(p.density);
        self.coverage = Some(p.coverage);
        self.k = Some(p.k);
        self
    }

    fn value(&self, key: &str) -> Option<f64> {
        match key {
            "fid" => self.fid,
            "kid" => self.kid,
            "precision" => self.precision,
            "recall" => self.recall,
            "density" => self.density,
            "coverage" => self.coverage,
            "k" => self.k.map(|k| k as f64),
            "n_a" => Some(self.n_a as f64),
            "n_b" => Some(self.n_b as f64),
            _ => None,
        }
    }

    /// One `key value [display]` line per fixed key. Floats carry full
    /// precision; fid and kid also get a two-decimal display column.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in REPORT_KEYS {
            match (key, self.value(key)) {
                (_, None) => writeln!(out, "{key} absent"),
                ("k" | "n_a" | "n_b", Some(v)) => writeln!(out, "{key} {}", v as u64),
                ("fid" | "kid", Some(v)) => writeln!(out, "{key} {v:.17e} {v:.2}"),
                (_, Some(v)) => writeln!(out, "{key} {v:.17e}"),
            }
            .expect("writing to a string");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut r = MetricReport::default();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let mut parts = line.split_whitespace();
            let key = parts.next().unwrap_or_default();
            let raw = parts.next().ok_or_else(|| config_err(format!("metric line {line:?} has no value")))?;
            if raw == "absent" {
                continue;
            }
            let v: f64 = raw.parse().map_err(|_| config_err(format!("bad metric value in {line:?}")))?;
            match key {
                "fid" => r.fid = Some(v),
                "kid" => r.kid = Some(v),
                "precision" => r.precision = Some(v),
                "recall" => r.recall = Some(v),
                "density" => r.density = Some(v),
                "coverage" => r.coverage = Some(v),
                "k" => r.k = Some(v as usize),
                "n_a" => r.n_a = v as usize,
                "n_b" => r.n_b = v as usize,
                other => return Err(config_err(format!("unknown metric key {other:?}"))),
            }
        }
        Ok(r)
    }
}
