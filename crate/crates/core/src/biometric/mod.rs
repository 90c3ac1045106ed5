//! Matcher-based uniqueness analysis and spoof-score histograms.

pub mod far;
pub mod matcher;
pub mod pairs;
pub mod spoof;

pub use far::{calibrate_far_threshold, compute_synthetic_far, cumulative_distribution, FarRow, FarThreshold};
pub use matcher::{default_match_score, Matcher, NccMatcher};
pub use pairs::{make_pairs, score_pairs, ImageRef, MatchScoreTable, Pair, PairPopulation, PairSet, PairType};
pub use spoof::{spoof_score_histogram, ScoreHistogram, SpoofClassifier, SpoofScorer};
