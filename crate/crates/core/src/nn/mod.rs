//! Minimal dense-network numerics: forward/backward passes, Adam and Polyak
//! target averaging. Everything is 64-bit.

mod adam;
pub mod checkpoint;
mod dense;
mod polyak;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{Checkpoint, NamedTensor};
pub use dense::{Activation, DenseNet, Tape};
pub use polyak::polyak_update;
