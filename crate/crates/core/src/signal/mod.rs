//! Filtering, re-referencing and epoching of continuous recordings.

pub mod filter;
pub mod pipeline;
pub mod recording;

pub use filter::{butter_bandpass, notch, sos_response, sosfiltfilt, Sos};
pub use pipeline::{
    band_select, bandpass_filter, common_average_reference, epoch_and_baseline, notch_filter, preprocess,
    preprocess_with, ArtifactRemoval, NoArtifactRemoval, PipelineConfig, Preprocessed,
};
pub use recording::{ContinuousRecording, Event};
