//! Preprocessing stages and the fixed-order chain that connects them.

use serde::{Deserialize, Serialize};

use crate::dataset::EpochedDataset;
use crate::error::{config_err, Result};
use crate::tensor::Tensor;

use super::filter::{butter_bandpass, notch, sosfiltfilt};
use super::recording::ContinuousRecording;

pub const FILTER_ORDER: usize = 4;

/// Zero-phase Butterworth bandpass per channel.
pub fn bandpass_filter(x: &ContinuousRecording, lo: f64, hi: f64) -> Result<ContinuousRecording> {
    let sos = butter_bandpass(FILTER_ORDER, lo, hi, x.fs)?;
    Ok(x.map_channels(|c| sosfiltfilt(&sos, c)))
}

/// Zero-phase notch at each frequency below Nyquist; the rest are skipped.
pub fn notch_filter(x: &ContinuousRecording, freqs: &[f64], q: f64) -> Result<ContinuousRecording> {
    let nyq = x.fs / 2.0;
    let mut sections = Vec::new();
    for &f in freqs {
        if f >= nyq {
            log::warn!("skipping {f} Hz notch: at or above Nyquist ({nyq} Hz)");
            continue;
        }
        sections.push(notch(f, q, x.fs)?);
    }
    if sections.is_empty() {
        return Ok(x.clone());
    }
    Ok(x.map_channels(|c| {
        sections
            .iter()
            .fold(c.to_vec(), |acc, s| sosfiltfilt(std::slice::from_ref(s), &acc))
    }))
}

/// Subtracts the cross-channel mean at every sample.
pub fn common_average_reference(x: &ContinuousRecording) -> Result<ContinuousRecording> {
    let c = x.channels();
    if c < 2 {
        return Err(config_err!("common average reference needs at least 2 channels, got {c}"));
    }
    let n = x.samples();
    let mut out = x.clone();
    for i in 0..n {
        let mean = x.data.iter().map(|ch| ch[i]).sum::<f64>() / c as f64;
        for ch in &mut out.data {
            ch[i] -= mean;
        }
    }
    Ok(out)
}

/// Restricts the signal to the configured high-gamma band.
pub fn band_select(x: &ContinuousRecording, band: (f64, f64)) -> Result<ContinuousRecording> {
    let (lo, hi) = band;
    if !(lo > 0.0 && lo < hi && hi < x.fs / 2.0) {
        return Err(config_err!(
            "band ({lo}, {hi}) Hz must lie within (0, {}) Hz",
            x.fs / 2.0
        ));
    }
    bandpass_filter(x, lo, hi)
}

/// Cuts `[event, event + window)` and subtracts each channel's mean over
/// `[event − baseline, event)`. Events without enough room are skipped;
/// their count is returned alongside the dataset.
pub fn epoch_and_baseline(x: &ContinuousRecording, window_s: f64, baseline_s: f64) -> Result<(EpochedDataset, usize)> {
    if !(window_s > 0.0 && baseline_s >= 0.0) {
        return Err(config_err!(
            "epoch window must be positive and baseline non-negative, got {window_s} s and {baseline_s} s"
        ));
    }
    let len = (window_s * x.fs).round() as usize;
    let base = (baseline_s * x.fs).round() as usize;
    if len == 0 {
        return Err(config_err!("epoch window of {window_s} s is shorter than one sample"));
    }
    let n = x.samples();
    let c = x.channels();
    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut skipped = 0;
    for e in &x.events {
        if e.sample < base || e.sample + len > n {
            skipped += 1;
            continue;
        }
        for ch in &x.data {
            let offset = if base > 0 {
                ch[e.sample - base..e.sample].iter().sum::<f64>() / base as f64
            } else {
                0.0
            };
            data.extend(ch[e.sample..e.sample + len].iter().map(|v| v - offset));
        }
        labels.push(e.class_id);
    }
    if skipped > 0 {
        log::warn!("skipped {skipped} event(s) too close to the recording edge");
    }
    let epochs = Tensor::new(vec![labels.len(), c, len], data)?;
    let ds = EpochedDataset::new(epochs, labels, x.fs, x.class_names.clone())?;
    Ok((ds, skipped))
}

/// Stage reserved for ocular and muscle artifact removal.
pub trait ArtifactRemoval {
    fn apply(&self, x: ContinuousRecording) -> Result<ContinuousRecording>;
}

/// Passes the recording through unchanged.
#[derive(Clone, Copy, Debug, Default)]
pub struct NoArtifactRemoval;

impl ArtifactRemoval for NoArtifactRemoval {
    fn apply(&self, x: ContinuousRecording) -> Result<ContinuousRecording> {
        Ok(x)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub bandpass_lo: f64,
    /// Clamped to 0.99 × Nyquist when at or above it.
    pub bandpass_hi: f64,
    pub notch_freqs: Vec<f64>,
    pub notch_q: f64,
    pub band: (f64, f64),
    /// Train on the broadband signal instead of the selected band.
    pub skip_band_select: bool,
    pub epoch_s: f64,
    pub baseline_s: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            bandpass_lo: 0.5,
            bandpass_hi: 125.0,
            notch_freqs: vec![60.0, 120.0],
            notch_q: 30.0,
            band: (70.0, 124.0),
            skip_band_select: false,
            epoch_s: 2.0,
            baseline_s: 0.5,
        }
    }
}

/// Outcome of the full chain.
pub struct Preprocessed {
    pub dataset: EpochedDataset,
    pub skipped_events: usize,
}

/// bandpass → notch → CAR → artifact hook → band select → epoch.
pub fn preprocess_with(
    x: &ContinuousRecording,
    cfg: &PipelineConfig,
    artifacts: &dyn ArtifactRemoval,
) -> Result<Preprocessed> {
    x.validate()?;
    let nyq = x.fs / 2.0;
    let mut hi = cfg.bandpass_hi;
    if hi >= nyq {
        hi = 0.99 * nyq;
        log::info!(
            "bandpass upper edge {} Hz is at or above Nyquist; using {hi} Hz",
            cfg.bandpass_hi
        );
    }
    let y = bandpass_filter(x, cfg.bandpass_lo, hi)?;
    let y = notch_filter(&y, &cfg.notch_freqs, cfg.notch_q)?;
    let y = common_average_reference(&y)?;
    let y = artifacts.apply(y)?;
    let y = if cfg.skip_band_select { y } else { band_select(&y, cfg.band)? };
    let (dataset, skipped_events) = epoch_and_baseline(&y, cfg.epoch_s, cfg.baseline_s)?;
    Ok(Preprocessed {
        dataset,
        skipped_events,
    })
}

pub fn preprocess(x: &ContinuousRecording, cfg: &PipelineConfig) -> Result<Preprocessed> {
    preprocess_with(x, cfg, &NoArtifactRemoval)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::recording::Event;

    fn rec(data: Vec<Vec<f64>>, fs: f64, events: Vec<Event>) -> ContinuousRecording {
        let names = (0..data.len()).map(|i| format!("ch{i}")).collect();
        ContinuousRecording::new(data, fs, names, events, vec!["a".into(), "b".into()]).unwrap()
    }

    #[test]
    fn car_two_channels() {
        let r = rec(vec![vec![3.0, 1.0], vec![1.0, 5.0]], 10.0, vec![]);
        let y = common_average_reference(&r).unwrap();
        assert_eq!(y.data, vec![vec![1.0, -2.0], vec![-1.0, 2.0]]);
        let single = rec(vec![vec![1.0, 2.0]], 10.0, vec![]);
        assert!(common_average_reference(&single).is_err());
    }

    #[test]
    fn epoch_examples() {
        let fs = 250.0;
        let n = 2000;
        let r = rec(
            vec![vec![4.0; n], vec![-1.5; n]],
            fs,
            vec![
                Event { sample: 10, class_id: 0 },
                Event { sample: 200, class_id: 1 },
                Event { sample: 1600, class_id: 0 },
            ],
        );
        let (ds, skipped) = epoch_and_baseline(&r, 2.0, 0.5).unwrap();
        assert_eq!(skipped, 2);
        assert_eq!(ds.epoch_len(), 500);
        assert_eq!(ds.labels, vec![1]);
        assert!(ds.epochs.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn notch_above_nyquist_is_skipped() {
        let r = rec(vec![vec![0.0, 1.0, 0.0, -1.0]; 2], 100.0, vec![]);
        let y = notch_filter(&r, &[60.0], 30.0).unwrap();
        assert_eq!(y, r);
    }
}
