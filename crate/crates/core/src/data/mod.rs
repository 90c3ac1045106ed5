pub mod augment;
pub mod dataset;
pub mod ridge;

pub use augment::{augment_batch, AugmentConfig, AugmentOp};
pub use dataset::{
    load_image_dataset, load_png, mosaic, png_bytes, save_png, u8_to_unit, unit_to_u8, Condition, FingerId, PatchDataset,
    PatchItem, PAD_VALUE,
};
pub use ridge::{corrupt_to_spoof, synth_ridge_dataset, RidgeParams, SpoofCorruption};
