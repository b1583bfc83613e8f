//! Class-conditioned synthetic recordings.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::dataset::EpochedDataset;
use crate::error::{config_err, Result};
use crate::signal::{ContinuousRecording, Event};
use crate::tensor::Tensor;

/// Spectral and spatial fingerprint of one class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassSignature {
    pub carrier_hz: f64,
    pub amplitude: f64,
    pub channel_weights: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub n_classes: usize,
    pub trials_per_class: usize,
    pub channels: usize,
    pub fs: f64,
    pub epoch_s: f64,
    /// Quiet lead-in before each trial onset.
    pub pre_s: f64,
    /// Quiet tail after each trial window.
    pub post_s: f64,
    /// Carriers are spaced evenly over this range when `signatures` is empty.
    pub carrier_range: (f64, f64),
    pub amplitude: f64,
    /// Explicit per-class signatures; generated from the seed when empty.
    pub signatures: Vec<ClassSignature>,
    /// Burst length within the trial window.
    pub burst_s: f64,
    /// Standard deviation of the burst onset, seconds.
    pub onset_jitter_s: f64,
    /// Standard deviation of the carrier, Hz.
    pub carrier_jitter_hz: f64,
    /// Relative standard deviation of the burst amplitude.
    pub amplitude_jitter: f64,
    /// Standard deviation of the 1/f background, per channel.
    pub pink_level: f64,
    pub line_noise_amplitude: f64,
    pub line_freq: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_classes: 13,
            trials_per_class: 100,
            channels: 8,
            fs: 250.0,
            epoch_s: 2.0,
            pre_s: 1.0,
            post_s: 0.5,
            carrier_range: (72.0, 122.0),
            amplitude: 1.5,
            signatures: Vec::new(),
            burst_s: 1.0,
            onset_jitter_s: 0.2,
            carrier_jitter_hz: 1.5,
            amplitude_jitter: 0.3,
            pink_level: 2.0,
            line_noise_amplitude: 2.0,
            line_freq: 60.0,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 {
            return Err(config_err!("data.n_classes must be at least 2, got {}", self.n_classes));
        }
        if self.trials_per_class == 0 || self.channels == 0 {
            return Err(config_err!("data.trials_per_class and data.channels must be positive"));
        }
        if !(self.fs > 0.0 && self.fs.is_finite()) {
            return Err(config_err!("data.fs must be positive, got {}", self.fs));
        }
        if !(self.epoch_s > 0.0 && self.pre_s >= 0.0 && self.post_s >= 0.0) {
            return Err(config_err!("data.epoch_s must be positive and data.pre_s, data.post_s non-negative"));
        }
        if !(self.burst_s > 0.0 && self.burst_s <= self.epoch_s) {
            return Err(config_err!("data.burst_s must lie in (0, epoch_s]"));
        }
        let nyq = self.fs / 2.0;
        for (name, v) in [
            ("data.amplitude", self.amplitude),
            ("data.onset_jitter_s", self.onset_jitter_s),
            ("data.carrier_jitter_hz", self.carrier_jitter_hz),
            ("data.amplitude_jitter", self.amplitude_jitter),
            ("data.pink_level", self.pink_level),
            ("data.line_noise_amplitude", self.line_noise_amplitude),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(config_err!("{name} must be finite and non-negative, got {v}"));
            }
        }
        if !(self.line_freq > 0.0 && self.line_freq < nyq) {
            return Err(config_err!("data.line_freq {} Hz must lie in (0, {nyq}) Hz", self.line_freq));
        }
        if self.signatures.is_empty() {
            let (lo, hi) = self.carrier_range;
            if !(lo > 0.0 && lo <= hi && hi < nyq) {
                return Err(config_err!(
                    "data.carrier_range ({lo}, {hi}) Hz must lie within (0, {nyq}) Hz"
                ));
            }
        } else {
            if self.signatures.len() != self.n_classes {
                return Err(config_err!(
                    "data.signatures has {} entries for {} classes",
                    self.signatures.len(),
                    self.n_classes
                ));
            }
            for (k, s) in self.signatures.iter().enumerate() {
                if !(s.carrier_hz > 0.0 && s.carrier_hz < nyq) {
                    return Err(config_err!(
                        "data.signatures[{k}].carrier_hz {} Hz must lie in (0, {nyq}) Hz",
                        s.carrier_hz
                    ));
                }
                if !(s.amplitude >= 0.0) {
                    return Err(config_err!("data.signatures[{k}].amplitude must be non-negative"));
                }
                if s.channel_weights.len() != self.channels {
                    return Err(config_err!(
                        "data.signatures[{k}].channel_weights has {} entries for {} channels",
                        s.channel_weights.len(),
                        self.channels
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn epoch_len(&self) -> usize {
        (self.epoch_s * self.fs).round() as usize
    }

    pub fn pre_len(&self) -> usize {
        (self.pre_s * self.fs).round() as usize
    }

    /// Samples reserved per trial: lead-in, window and tail.
    pub fn slot_len(&self) -> usize {
        self.pre_len() + self.epoch_len() + (self.post_s * self.fs).round() as usize
    }

    pub fn class_names(&self) -> Vec<String> {
        (0..self.n_classes).map(|k| format!("class_{k:02}")).collect()
    }

    /// Explicit signatures, or evenly spaced carriers with seeded weights.
    pub fn resolved_signatures(&self) -> Vec<ClassSignature> {
        if !self.signatures.is_empty() {
            return self.signatures.clone();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(1);
        let (lo, hi) = self.carrier_range;
        (0..self.n_classes)
            .map(|k| {
                let carrier_hz = lo + (hi - lo) * k as f64 / (self.n_classes - 1) as f64;
                let channel_weights = (0..self.channels).map(|_| rng.gen_range(0.2..1.0)).collect();
                ClassSignature {
                    carrier_hz,
                    amplitude: self.amplitude,
                    channel_weights,
                }
            })
            .collect()
    }
}

/// `n` samples of unit-variance noise with a 1/f power spectrum.
pub fn pink_noise<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![0.0; n];
    }
    let mut buf: Vec<Complex64> = (0..n)
        .map(|_| Complex64::new(rng.sample(StandardNormal), 0.0))
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);
    buf[0] = Complex64::new(0.0, 0.0);
    for (k, v) in buf.iter_mut().enumerate().skip(1) {
        *v /= (k.min(n - k) as f64).sqrt();
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let out: Vec<f64> = buf.iter().map(|c| c.re).collect();
    let mean = out.iter().sum::<f64>() / n as f64;
    let sd = (out.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64).sqrt();
    out.into_iter().map(|v| (v - mean) / sd).collect()
}

fn hann(i: usize, n: usize) -> f64 {
    if n < 2 {
        return 1.0;
    }
    0.5 - 0.5 * (2.0 * PI * i as f64 / (n - 1) as f64).cos()
}

/// Builds a continuous recording whose trials tile it in fixed slots.
pub fn generate(spec: &SynthSpec) -> Result<ContinuousRecording> {
    spec.validate()?;
    let sigs = spec.resolved_signatures();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n_trials = spec.n_classes * spec.trials_per_class;
    let slot = spec.slot_len();
    let total = n_trials * slot;
    let (pre, win) = (spec.pre_len(), spec.epoch_len());
    let burst = ((spec.burst_s * spec.fs).round() as usize).clamp(1, win);

    let mut order: Vec<usize> = (0..n_trials).map(|i| i % spec.n_classes).collect();
    order.shuffle(&mut rng);

    let mut data = Vec::with_capacity(spec.channels);
    for _ in 0..spec.channels {
        let phase: f64 = rng.gen_range(0.0..2.0 * PI);
        let w = 2.0 * PI * spec.line_freq / spec.fs;
        let pink = pink_noise(&mut rng, total);
        data.push(
            pink.into_iter()
                .enumerate()
                .map(|(i, p)| spec.pink_level * p + spec.line_noise_amplitude * (w * i as f64 + phase).sin())
                .collect::<Vec<f64>>(),
        );
    }

    let mut events = Vec::with_capacity(n_trials);
    for (trial, &class_id) in order.iter().enumerate() {
        let sig = &sigs[class_id];
        let onset = trial * slot + pre;
        events.push(Event { sample: onset, class_id });

        let carrier = sig.carrier_hz + spec.carrier_jitter_hz * rng.sample::<f64, _>(StandardNormal);
        let amp = sig.amplitude * (1.0 + spec.amplitude_jitter * rng.sample::<f64, _>(StandardNormal)).max(0.0);
        let phase: f64 = rng.gen_range(0.0..2.0 * PI);
        let centre = (win - burst) as f64 / 2.0 + spec.onset_jitter_s * spec.fs * rng.sample::<f64, _>(StandardNormal);
        let start = centre.round().clamp(0.0, (win - burst) as f64) as usize;
        let w = 2.0 * PI * carrier.clamp(0.0, spec.fs / 2.0) / spec.fs;
        for i in 0..burst {
            let s = amp * hann(i, burst) * (w * i as f64 + phase).sin();
            let at = onset + start + i;
            for (ch, &cw) in data.iter_mut().zip(&sig.channel_weights) {
                ch[at] += cw * s;
            }
        }
    }

    let channel_names = (0..spec.channels).map(|c| format!("ch{c:02}")).collect();
    ContinuousRecording::new(data, spec.fs, channel_names, events, spec.class_names())
}

/// Two-class set with strong, well separated carriers in white noise.
pub fn generate_separable_toy(n_per_class: usize, seed: u64) -> Result<EpochedDataset> {
    if n_per_class < 10 {
        return Err(config_err!("separable toy needs at least 10 trials per class, got {n_per_class}"));
    }
    let (fs, channels, len) = (250.0, 4, 500);
    let carriers = [80.0, 110.0];
    let weights = [[1.0, 0.8, 0.6, 0.4], [0.4, 0.6, 0.8, 1.0]];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels: Vec<usize> = (0..2 * n_per_class).map(|i| i % 2).collect();
    labels.shuffle(&mut rng);
    let mut data = Vec::with_capacity(labels.len() * channels * len);
    for &k in &labels {
        let phase: f64 = rng.gen_range(0.0..2.0 * PI);
        let w = 2.0 * PI * carriers[k] / fs;
        for &wc in &weights[k] {
            for i in 0..len {
                let noise: f64 = rng.sample(StandardNormal);
                data.push(wc * (w * i as f64 + phase).sin() + 0.5 * noise);
            }
        }
    }
    let epochs = Tensor::new(vec![labels.len(), channels, len], data)?;
    EpochedDataset::new(epochs, labels, fs, vec!["low".into(), "high".into()])
}
