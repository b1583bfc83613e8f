//! Labelled, fixed-length multichannel trials.

use crate::error::{data_err, dim_err, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct EpochedDataset {
    /// `[n, channels, len]`.
    pub epochs: Tensor,
    pub labels: Vec<usize>,
    pub fs: f64,
    pub class_names: Vec<String>,
}

impl EpochedDataset {
    pub fn new(epochs: Tensor, labels: Vec<usize>, fs: f64, class_names: Vec<String>) -> Result<Self> {
        let (n, _, _) = epochs.dims3()?;
        if labels.len() != n {
            return Err(dim_err!("{} labels for {n} epochs", labels.len()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_names.len()) {
            return Err(data_err!(
                "label {bad} out of range for {} classes",
                class_names.len()
            ));
        }
        if !(fs > 0.0) {
            return Err(data_err!("sampling rate must be positive, got {fs}"));
        }
        Ok(Self {
            epochs,
            labels,
            fs,
            class_names,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.epochs.shape()[1]
    }

    pub fn epoch_len(&self) -> usize {
        self.epochs.shape()[2]
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    pub fn subset(&self, indices: &[usize]) -> EpochedDataset {
        EpochedDataset {
            epochs: self.epochs.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            fs: self.fs,
            class_names: self.class_names.clone(),
        }
    }
}
