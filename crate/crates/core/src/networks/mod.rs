//! The four sub-networks and their wiring.

pub mod autoencoder;
pub mod checkpoint;
pub mod config;
pub mod denoiser;
pub mod layers;
pub mod model;

pub use autoencoder::{Classifier, Decoder, DecoderInputs, DecoderWiring, Encoded, Encoder};
pub use config::{
    ClassifierConfig, DecoderConfig, DenoiserConfig, DiffusionConfig, EncoderConfig, ModelConfig,
};
pub use denoiser::{DenoiseOutput, Denoiser};
pub use model::{Ablation, DiffEModel};
