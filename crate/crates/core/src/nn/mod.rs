//! Neural-network building blocks on top of libtorch.

mod adam;
pub mod checkpoint;
mod init;
pub mod layers;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::Checkpoint;
pub use init::{flat_parameters, parameter_count, seeded_init};

use tch::Kind;

/// Floating-point precision a network runs in. Double precision exists for
/// gradient checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Precision {
    #[default]
    Single,
    Double,
}

impl Precision {
    pub fn kind(self) -> Kind {
        match self {
            Precision::Single => Kind::Float,
            Precision::Double => Kind::Double,
        }
    }
}
