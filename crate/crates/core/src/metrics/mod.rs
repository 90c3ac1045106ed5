//! Distribution-level comparison of image sets in a feature space.

pub mod extract;
pub mod features;
pub mod fid;
pub mod kid;
pub mod prdc;
pub mod report;

pub use extract::{extract_chunked, extract_features, CnnExtractor, FeatureExtractor, PixelPca, TorchScriptExtractor};
pub use features::FeatureSet;
pub use fid::compute_fid;
pub use kid::{compute_kid, compute_kid_detailed, mmd2_unbiased, poly_kernel};
pub use prdc::{compute_prdc, Prdc};
pub use report::MetricReport;
