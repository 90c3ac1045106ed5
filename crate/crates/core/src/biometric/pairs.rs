use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matcher::Matcher;
use crate::batch::ImageBatch;
use crate::data::{FingerId, PatchDataset};
use crate::error::{arg_err, config_err, Error, Result};
use crate::rng::stream_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairType {
    Genuine,
    Impostor,
    /// At least one image is synthetic and has no true identity.
    AssumedImpostor,
}

impl fmt::Display for PairType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PairType::Genuine => "genuine",
            PairType::Impostor => "impostor",
            PairType::AssumedImpostor => "assumed_impostor",
        })
    }
}

/// Which images a pair draws from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairPopulation {
    Genuine,
    Impostor,
    SyntheticReal,
    SyntheticSynthetic,
}

impl PairPopulation {
    pub fn pair_type(self) -> PairType {
        match self {
            PairPopulation::Genuine => PairType::Genuine,
            PairPopulation::Impostor => PairType::Impostor,
            _ => PairType::AssumedImpostor,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PairPopulation::Genuine => "genuine",
            PairPopulation::Impostor => "impostor",
            PairPopulation::SyntheticReal => "synthetic_real",
            PairPopulation::SyntheticSynthetic => "synthetic_synthetic",
        }
    }
}

impl FromStr for PairPopulation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "genuine" => Ok(PairPopulation::Genuine),
            "impostor" => Ok(PairPopulation::Impostor),
            "synthetic_real" => Ok(PairPopulation::SyntheticReal),
            "synthetic_synthetic" => Ok(PairPopulation::SyntheticSynthetic),
            other => Err(config_err(format!("unknown pair population {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ImageRef {
    Real(usize),
    Synthetic(usize),
}

impl fmt::Display for ImageRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ImageRef::Real(i) => write!(f, "real:{i}"),
            ImageRef::Synthetic(i) => write!(f, "synthetic:{i}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pair {
    pub a: ImageRef,
    pub b: ImageRef,
    pub pair_type: PairType,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairSet {
    pub population: PairPopulation,
    pub pairs: Vec<Pair>,
    pub seed: u64,
}

fn distinct_pair<R: Rng>(n: usize, rng: &mut R) -> (usize, usize) {
    let i = rng.random_range(0..n);
    let mut j = rng.random_range(0..n - 1);
    if j >= i {
        j += 1;
    }
    (i, j)
}

fn identities(real: &PatchDataset) -> Result<Vec<&FingerId>> {
    real.items
        .iter()
        .enumerate()
        .map(|(i, item)| item.finger.as_ref().ok_or_else(|| arg_err(format!("real image {i} has no finger identity"))))
        .collect()
}

/// Draws `n_pairs` pairs of the requested population, uniformly over the
/// admissible unordered pairs and never pairing an image with itself.
pub fn make_pairs(
    real: &PatchDataset,
    synthetic_count: usize,
    population: PairPopulation,
    n_pairs: usize,
    seed: u64,
) -> Result<PairSet> {
    let mut rng = stream_rng(seed, population as u64);
    let mut pairs = Vec::with_capacity(n_pairs);
    let pair_type = population.pair_type();
    match population {
        PairPopulation::Genuine => {
            let ids = identities(real)?;
            let mut groups: BTreeMap<&FingerId, Vec<usize>> = BTreeMap::new();
            for (i, id) in ids.iter().enumerate() {
                groups.entry(id).or_default().push(i);
            }
            let groups: Vec<Vec<usize>> = groups.into_values().filter(|g| g.len() >= 2).collect();
            let weights: Vec<u64> = groups.iter().map(|g| (g.len() * (g.len() - 1) / 2) as u64).collect();
            let total: u64 = weights.iter().sum();
            if total == 0 {
                return Err(arg_err("no finger has two or more impressions, genuine pairs impossible"));
            }
            for _ in 0..n_pairs {
                let mut r = rng.random_range(0..total);
                let g = weights.iter().position(|&w| if r < w { true } else { r -= w; false }).expect("r < total");
                let (i, j) = distinct_pair(groups[g].len(), &mut rng);
                pairs.push(Pair { a: ImageRef::Real(groups[g][i]), b: ImageRef::Real(groups[g][j]), pair_type });
            }
        }
        PairPopulation::Impostor => {
            let ids = identities(real)?;
            if ids.iter().all(|id| *id == ids[0]) {
                return Err(arg_err("impostor pairs need at least two distinct fingers"));
            }
            while pairs.len() < n_pairs {
                let (i, j) = distinct_pair(ids.len(), &mut rng);
                if ids[i] != ids[j] {
                    pairs.push(Pair { a: ImageRef::Real(i), b: ImageRef::Real(j), pair_type });
                }
            }
        }
        PairPopulation::SyntheticReal => {
            if synthetic_count == 0 || real.is_empty() {
                return Err(arg_err("synthetic-real pairs need both synthetic and real images"));
            }
            for _ in 0..n_pairs {
                let (s, r) = (rng.random_range(0..synthetic_count), rng.random_range(0..real.len()));
                pairs.push(Pair { a: ImageRef::Synthetic(s), b: ImageRef::Real(r), pair_type });
            }
        }
        PairPopulation::SyntheticSynthetic => {
            if synthetic_count < 2 {
                return Err(arg_err("synthetic-synthetic pairs need at least two synthetic images"));
            }
            for _ in 0..n_pairs {
                let (i, j) = distinct_pair(synthetic_count, &mut rng);
                pairs.push(Pair { a: ImageRef::Synthetic(i), b: ImageRef::Synthetic(j), pair_type });
            }
        }
    }
    Ok(PairSet { population, pairs, seed })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchScoreTable {
    pub population: PairPopulation,
    pub pairs: Vec<Pair>,
    pub scores: Vec<f64>,
    pub matcher_id: String,
}

impl MatchScoreTable {
    /// Delimited rows `pair_index,id_a,id_b,pair_type,score`.
    pub fn to_text(&self) -> String {
        let mut out = format!("# matcher {}\n# population {}\npair_index,id_a,id_b,pair_type,score\n", self.matcher_id, self.population.name());
        for (i, (p, s)) in self.pairs.iter().zip(&self.scores).enumerate() {
            out.push_str(&format!("{i},{},{},{},{s:.9}\n", p.a, p.b, p.pair_type));
        }
        out
    }
}

/// Scores every pair in index order.
pub fn score_pairs(matcher: &dyn Matcher, pairs: &PairSet, real: &PatchDataset, synthetic: Option<&ImageBatch>) -> Result<MatchScoreTable> {
    let size = real.size;
    if let Some(s) = synthetic {
        if s.height() != size || s.width() != size {
            return Err(arg_err(format!("synthetic images are {}x{}, real ones {size}x{size}", s.height(), s.width())));
        }
    }
    let fetch = |r: ImageRef| -> Result<&[f32]> {
        match r {
            ImageRef::Real(i) => Ok(&real.items[i].image),
            ImageRef::Synthetic(i) => synthetic.map(|s| s.image(i)).ok_or_else(|| arg_err("pair refers to synthetic images but none were given")),
        }
    };
    let scores = pairs
        .pairs
        .iter()
        .map(|p| matcher.score(fetch(p.a)?, fetch(p.b)?, size, size))
        .collect::<Result<Vec<_>>>()?;
    Ok(MatchScoreTable { population: pairs.population, pairs: pairs.pairs.clone(), scores, matcher_id: matcher.id() })
}
