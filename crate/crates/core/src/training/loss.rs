//! Objective terms evaluated on plain tensors. The training step computes
//! the same quantities on the tape.

use crate::error::{data_err, dim_err, Result};
use crate::tensor::Tensor;

fn mean_abs(a: &Tensor, b: &Tensor) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(dim_err!("shape mismatch {:?} vs {:?}", a.shape(), b.shape()));
    }
    let s: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).sum();
    Ok(s / a.numel() as f64)
}

/// L1 between the clean signal and the denoiser's prediction.
pub fn ddpm_loss(x0: &Tensor, x0_hat: &Tensor) -> Result<f64> {
    mean_abs(x0, x0_hat)
}

/// L1 between the denoiser's residual map `|x0 − x̂|` and the decoder output.
pub fn cae_loss(residual_map: &Tensor, decoder_out: &Tensor) -> Result<f64> {
    mean_abs(residual_map, decoder_out)
}

/// Elementwise `|x0 − x̂|`.
pub fn residual_map(x0: &Tensor, x0_hat: &Tensor) -> Result<Tensor> {
    x0.zip_map(x0_hat, |a, b| (a - b).abs())
}

/// Mean squared error against one-hot targets.
pub fn classification_loss(y_hat: &Tensor, y_onehot: &Tensor) -> Result<f64> {
    if y_hat.shape() != y_onehot.shape() {
        return Err(dim_err!(
            "scores {:?} vs targets {:?}",
            y_hat.shape(),
            y_onehot.shape()
        ));
    }
    let (_, k) = y_onehot.dims2()?;
    for (i, row) in y_onehot.data().chunks(k).enumerate() {
        let ones = row.iter().filter(|&&v| v == 1.0).count();
        let zeros = row.iter().filter(|&&v| v == 0.0).count();
        if ones != 1 || zeros != k - 1 {
            return Err(data_err!("target row {i} is not a one-hot vector"));
        }
    }
    let s: f64 = y_hat
        .data()
        .iter()
        .zip(y_onehot.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(s / y_hat.numel() as f64)
}

pub fn one_hot(labels: &[usize], n_classes: usize) -> Result<Tensor> {
    let mut data = vec![0.0; labels.len() * n_classes];
    for (i, &l) in labels.iter().enumerate() {
        if l >= n_classes {
            return Err(data_err!("label {l} out of range for {n_classes} classes"));
        }
        data[i * n_classes + l] = 1.0;
    }
    Tensor::new(vec![labels.len(), n_classes], data)
}
