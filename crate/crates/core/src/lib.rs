pub mod batch;
pub mod biometric;
pub mod config;
pub mod cycle;
pub mod data;
pub mod denoiser;
pub mod diffusion;
pub mod error;
pub mod gan;
pub mod imgops;
pub mod metrics;
pub mod nn;
pub mod report;
pub mod rng;
pub mod run;
pub mod schedule;

pub use error::{Error, Result};
