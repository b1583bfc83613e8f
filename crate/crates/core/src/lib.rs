pub mod autograd;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod networks;
pub mod scheduler;
pub mod signal;
pub mod synth;
pub mod tensor;
pub mod training;

pub use dataset::EpochedDataset;
pub use error::{Error, Result};
pub use tensor::Tensor;
