//! Objectives, optimiser and the training loop.

pub mod loss;
pub mod optim;
pub mod split;
pub mod trainer;

pub use loss::{cae_loss, classification_loss, ddpm_loss, one_hot, residual_map};
pub use optim::{cyclic_lr, rmsprop_update, RmsProp};
pub use split::{split_dataset, stratified_split, Split};
pub use trainer::{
    build_step, fit, fit_model, input_scale_for, CaeTarget, EpochRecord, FitOptions, StepGraph, StepLosses,
    StepNoise, TrainConfig, TrainHistory, Trainer,
};
