use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};
use crate::scheduler::{NoiseSchedule, ScheduleKind};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiffusionConfig {
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub kind: ScheduleKind,
}

impl Default for DiffusionConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            beta_start: 1e-4,
            beta_end: 0.02,
            kind: ScheduleKind::Linear,
        }
    }
}

impl DiffusionConfig {
    pub fn schedule(&self) -> Result<NoiseSchedule> {
        NoiseSchedule::build(self.steps, self.beta_start, self.beta_end, self.kind)
    }
}

/// U-Net denoiser: one entry of `widths` per resolution level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DenoiserConfig {
    pub widths: Vec<usize>,
    pub kernel: usize,
    pub time_dim: usize,
    pub time_hidden: usize,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        Self {
            widths: vec![32, 64, 64],
            kernel: 3,
            time_dim: 128,
            time_hidden: 128,
        }
    }
}

/// Strided convolution stages; the last stage is pooled to
/// `latent_dim / widths.last()` positions and flattened.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub widths: Vec<usize>,
    pub kernel: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            widths: vec![32, 64, 64, 64],
            kernel: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecoderConfig {
    pub kernel: usize,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self { kernel: 3 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    /// Hidden widths between `z` and the class scores; empty means a single
    /// affine map.
    pub hidden: Vec<usize>,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self { hidden: vec![512] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub latent_dim: usize,
    pub groups: usize,
    pub diffusion: DiffusionConfig,
    pub denoiser: DenoiserConfig,
    pub encoder: EncoderConfig,
    pub decoder: DecoderConfig,
    pub classifier: ClassifierConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            latent_dim: 256,
            groups: 4,
            diffusion: DiffusionConfig::default(),
            denoiser: DenoiserConfig::default(),
            encoder: EncoderConfig::default(),
            decoder: DecoderConfig::default(),
            classifier: ClassifierConfig::default(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let g = self.groups;
        if g == 0 {
            return Err(config_err!("model.groups must be at least 1"));
        }
        for (name, widths) in [
            ("model.denoiser.widths", &self.denoiser.widths),
            ("model.encoder.widths", &self.encoder.widths),
        ] {
            if widths.is_empty() {
                return Err(config_err!("{name} must not be empty"));
            }
            if let Some(w) = widths.iter().find(|&&w| w == 0 || w % g != 0) {
                return Err(config_err!(
                    "{name} entry {w} is not a positive multiple of model.groups {g}"
                ));
            }
        }
        for (name, k) in [
            ("model.denoiser.kernel", self.denoiser.kernel),
            ("model.encoder.kernel", self.encoder.kernel),
            ("model.decoder.kernel", self.decoder.kernel),
        ] {
            if k == 0 || k % 2 == 0 {
                return Err(config_err!("{name} must be odd, got {k}"));
            }
        }
        if self.denoiser.time_dim < 2 || !self.denoiser.time_dim.is_multiple_of(2) {
            return Err(config_err!(
                "model.denoiser.time_dim must be even and at least 2, got {}",
                self.denoiser.time_dim
            ));
        }
        if self.denoiser.time_hidden == 0 {
            return Err(config_err!("model.denoiser.time_hidden must be positive"));
        }
        let last = *self.encoder.widths.last().expect("checked non-empty");
        if self.latent_dim == 0 || !self.latent_dim.is_multiple_of(last) {
            return Err(config_err!(
                "model.latent_dim {} must be a positive multiple of the last encoder width {last}",
                self.latent_dim
            ));
        }
        if self.classifier.hidden.contains(&0) {
            return Err(config_err!("model.classifier.hidden widths must be positive"));
        }
        self.diffusion.schedule().map(|_| ())
    }

    /// Number of positions the last encoder stage is pooled to.
    pub fn pool_len(&self) -> usize {
        self.latent_dim / self.encoder.widths.last().copied().unwrap_or(1)
    }
}
