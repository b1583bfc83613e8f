//! The assembled model: denoiser θ, encoder φ, decoder ψ, classifier ρ.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Group, ParamId, ParamStore, Var};
use crate::error::{config_err, Result};
use crate::scheduler::NoiseSchedule;
use crate::tensor::Tensor;

use super::autoencoder::{Classifier, Decoder, DecoderWiring, Encoder};
use super::config::ModelConfig;
use super::denoiser::Denoiser;

/// Which components are trained.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    /// Denoiser, conditioned decoder, encoder and classifier.
    #[default]
    Full,
    /// No denoiser; the decoder reconstructs `x0` from encoder features.
    NoDdpm,
    /// Encoder and classifier only.
    NoDdpmNoDecoder,
}

impl Ablation {
    pub const ALL: [Ablation; 3] = [Ablation::Full, Ablation::NoDdpm, Ablation::NoDdpmNoDecoder];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::NoDdpm => "no_ddpm",
            Ablation::NoDdpmNoDecoder => "no_ddpm_no_decoder",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Ablation::Full => "Diff-E",
            Ablation::NoDdpm => "w/o DDPM",
            Ablation::NoDdpmNoDecoder => "w/o DDPM & decoder",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| config_err!("unknown ablation '{s}' (expected full, no_ddpm or no_ddpm_no_decoder)"))
    }

    pub fn has_denoiser(self) -> bool {
        self == Ablation::Full
    }

    pub fn has_decoder(self) -> bool {
        self != Ablation::NoDdpmNoDecoder
    }
}

#[derive(Clone, Debug)]
pub struct DiffEModel {
    config: ModelConfig,
    arm: Ablation,
    in_channels: usize,
    n_classes: usize,
    pub(crate) store: ParamStore,
    denoiser: Option<Denoiser>,
    encoder: Encoder,
    decoder: Option<Decoder>,
    classifier: Classifier,
    schedule: NoiseSchedule,
    /// Multiplier applied to raw inputs before they enter any network.
    pub input_scale: f64,
}

impl DiffEModel {
    pub fn new(
        config: &ModelConfig,
        arm: Ablation,
        in_channels: usize,
        n_classes: usize,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        if in_channels == 0 {
            return Err(config_err!("model needs at least one input channel"));
        }
        if n_classes < 2 {
            return Err(config_err!("model needs at least two classes, got {n_classes}"));
        }
        let schedule = config.diffusion.schedule()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let denoiser = arm.has_denoiser().then(|| {
            Denoiser::new(
                &mut store,
                &mut rng,
                &config.denoiser,
                config.groups,
                in_channels,
                schedule.steps(),
            )
        });
        let encoder = Encoder::new(
            &mut store,
            &mut rng,
            &config.encoder,
            config.groups,
            in_channels,
            config.latent_dim,
        );
        let decoder = arm.has_decoder().then(|| {
            let wiring = DecoderWiring {
                encoder_widths: config.encoder.widths.clone(),
                tap_channels: denoiser
                    .as_ref()
                    .map(|d| d.tap_channels().to_vec())
                    .unwrap_or_default(),
                skip_inputs: denoiser.is_some(),
                in_channels,
            };
            Decoder::new(&mut store, &mut rng, &config.decoder, config.groups, wiring)
        });
        let classifier = Classifier::new(
            &mut store,
            &mut rng,
            &config.classifier,
            config.latent_dim,
            n_classes,
        );
        Ok(Self {
            config: config.clone(),
            arm,
            in_channels,
            n_classes,
            store,
            denoiser,
            encoder,
            decoder,
            classifier,
            schedule,
            input_scale: 1.0,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn arm(&self) -> Ablation {
        self.arm
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    pub fn denoiser(&self) -> Option<&Denoiser> {
        self.denoiser.as_ref()
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    pub fn decoder(&self) -> Option<&Decoder> {
        self.decoder.as_ref()
    }

    pub fn classifier(&self) -> &Classifier {
        &self.classifier
    }

    /// Trainable scalars per group.
    pub fn param_count(&self, group: Group) -> usize {
        self.store.count(&self.store.ids_in(&[group]))
    }

    pub fn ids_in(&self, groups: &[Group]) -> Vec<ParamId> {
        self.store.ids_in(groups)
    }

    /// Inference path: class scores from the encoder's pooled latent.
    pub fn classify(&self, g: &mut Graph, x0: Var) -> Result<Var> {
        let enc = self.encoder.forward(g, x0)?;
        self.classifier.forward(g, enc.z)
    }

    /// Class scores `[N, K]` for raw (unscaled) inputs `[N, C, L]`.
    pub fn predict_scores(&self, x: &Tensor, batch_size: usize) -> Result<Tensor> {
        let (n, _, _) = x.dims3()?;
        let mut out = Vec::with_capacity(n * self.n_classes);
        let step = batch_size.max(1);
        let mut start = 0;
        while start < n {
            let end = (start + step).min(n);
            let xb = x.slice_rows(start, end).map(|v| v * self.input_scale);
            let mut g = Graph::new(&self.store, false);
            let xv = g.tape.constant(xb)?;
            let scores = self.classify(&mut g, xv)?;
            out.extend_from_slice(g.tape.value(scores).data());
            start = end;
        }
        Tensor::new(vec![n, self.n_classes], out)
    }
}
