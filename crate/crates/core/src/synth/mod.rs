//! Synthetic class-conditioned recordings and the dataset file format.

pub mod container;
pub mod generator;

pub use container::{DatasetFile, CONTAINER_VERSION};
pub use generator::{generate, generate_separable_toy, pink_noise, ClassSignature, SynthSpec};
