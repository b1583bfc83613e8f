//! Encoder, tap-conditioned decoder and classifier head.

use rand::Rng;

use crate::autograd::{Graph, Group, ParamId, ParamStore, Var};
use crate::error::{dim_err, Result};

use super::config::{ClassifierConfig, DecoderConfig, EncoderConfig};
use super::layers::{BlockSpec, Conv, ConvBlock, Dense};

#[derive(Clone, Debug)]
pub struct Encoder {
    in_channels: usize,
    stages: Vec<ConvBlock>,
    pool_len: usize,
    params: Vec<ParamId>,
}

/// Latent vector plus stage outputs ordered shallow → deep.
pub struct Encoded {
    pub z: Var,
    pub features: Vec<Var>,
}

impl Encoder {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        cfg: &EncoderConfig,
        groups: usize,
        in_channels: usize,
        latent_dim: usize,
    ) -> Self {
        let start = store.len();
        let mut c_in = in_channels;
        let stages = cfg
            .widths
            .iter()
            .enumerate()
            .map(|(i, &c_out)| {
                let block = ConvBlock::new(
                    store,
                    rng,
                    &format!("encoder.stage{i}"),
                    Group::Encoder,
                    BlockSpec {
                        c_in,
                        c_out,
                        kernel: cfg.kernel,
                        stride: 2,
                        groups,
                        time_dim: None,
                    },
                );
                c_in = c_out;
                block
            })
            .collect();
        Self {
            in_channels,
            stages,
            pool_len: latent_dim / c_in,
            params: store.ids_since(start),
        }
    }

    pub fn params(&self) -> &[ParamId] {
        &self.params
    }

    pub fn forward(&self, g: &mut Graph, x0: Var) -> Result<Encoded> {
        let (_, c, _) = g.tape.value(x0).dims3()?;
        if c != self.in_channels {
            return Err(dim_err!("encoder expects {} channels, got {c}", self.in_channels));
        }
        let mut h = x0;
        let mut features = Vec::with_capacity(self.stages.len());
        for stage in &self.stages {
            h = stage.forward(g, h, None)?;
            features.push(h);
        }
        let pooled = g.tape.adaptive_avg_pool1d(h, self.pool_len)?;
        let z = g.tape.flatten(pooled)?;
        Ok(Encoded { z, features })
    }
}

/// What the decoder is wired to besides the encoder features.
#[derive(Clone, Debug, PartialEq)]
pub struct DecoderWiring {
    pub encoder_widths: Vec<usize>,
    /// Channel counts of denoiser taps, deep → shallow; empty for none.
    pub tap_channels: Vec<usize>,
    /// Whether `x0` and `x̂` are concatenated into the last layer.
    pub skip_inputs: bool,
    pub in_channels: usize,
}

pub struct DecoderInputs<'a> {
    pub enc_features: &'a [Var],
    pub taps: &'a [Var],
    pub skip: Option<(Var, Var)>,
    pub out_len: usize,
}

/// Mirrors the encoder: each position upsamples to the matching encoder
/// stage length and concatenates that stage's features. Denoiser taps are
/// assigned to the last positions in deep → shallow order and resampled to
/// the position length; the final convolution sees `x0` and `x̂` as extra
/// channels when `skip_inputs` is set.
#[derive(Clone, Debug)]
pub struct Decoder {
    wiring: DecoderWiring,
    blocks: Vec<ConvBlock>,
    output: Conv,
    /// For each position, the index of the tap it consumes.
    tap_slots: Vec<Option<usize>>,
    params: Vec<ParamId>,
}

impl Decoder {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        cfg: &DecoderConfig,
        groups: usize,
        wiring: DecoderWiring,
    ) -> Self {
        let start = store.len();
        let n = wiring.encoder_widths.len();
        let ntaps = wiring.tap_channels.len();
        let tap_slots: Vec<Option<usize>> = (0..n)
            .map(|p| {
                let j = p as isize - n as isize + ntaps as isize;
                (j >= 0).then_some(j as usize)
            })
            .collect();
        let tap_ch = |p: usize| tap_slots[p].map(|j| wiring.tap_channels[j]).unwrap_or(0);
        let mut c_prev = wiring.encoder_widths[n - 1];
        let mut blocks = Vec::with_capacity(n.saturating_sub(1));
        for p in 0..n - 1 {
            let feat = n - 2 - p;
            let c_out = wiring.encoder_widths[feat];
            blocks.push(ConvBlock::new(
                store,
                rng,
                &format!("decoder.block{p}"),
                Group::Decoder,
                BlockSpec {
                    c_in: c_prev + wiring.encoder_widths[feat] + tap_ch(p),
                    c_out,
                    kernel: cfg.kernel,
                    stride: 1,
                    groups,
                    time_dim: None,
                },
            ));
            c_prev = c_out;
        }
        let skip_ch = if wiring.skip_inputs { 2 * wiring.in_channels } else { 0 };
        let output = Conv::new(
            store,
            rng,
            "decoder.output",
            Group::Decoder,
            c_prev + tap_ch(n - 1) + skip_ch,
            wiring.in_channels,
            cfg.kernel,
            1,
        );
        Self {
            wiring,
            blocks,
            output,
            tap_slots,
            params: store.ids_since(start),
        }
    }

    pub fn params(&self) -> &[ParamId] {
        &self.params
    }

    pub fn wiring(&self) -> &DecoderWiring {
        &self.wiring
    }

    pub fn forward(&self, g: &mut Graph, inputs: DecoderInputs<'_>) -> Result<Var> {
        let w = &self.wiring;
        let n = w.encoder_widths.len();
        if inputs.enc_features.len() != n {
            return Err(dim_err!(
                "decoder expects {n} encoder features, got {}",
                inputs.enc_features.len()
            ));
        }
        for (i, (&f, &c)) in inputs.enc_features.iter().zip(&w.encoder_widths).enumerate() {
            let fc = g.tape.value(f).dims3()?.1;
            if fc != c {
                return Err(dim_err!("encoder feature {i} has {fc} channels, expected {c}"));
            }
        }
        if inputs.taps.len() != w.tap_channels.len() {
            return Err(dim_err!(
                "decoder expects {} denoiser taps, got {}",
                w.tap_channels.len(),
                inputs.taps.len()
            ));
        }
        for (i, (&t, &c)) in inputs.taps.iter().zip(&w.tap_channels).enumerate() {
            let tc = g.tape.value(t).dims3()?.1;
            if tc != c {
                return Err(dim_err!("denoiser tap {i} has {tc} channels, expected {c}"));
            }
        }
        if w.skip_inputs != inputs.skip.is_some() {
            return Err(dim_err!(
                "decoder skip inputs {} but {} supplied",
                if w.skip_inputs { "required" } else { "absent" },
                if inputs.skip.is_some() { "were" } else { "none were" }
            ));
        }

        let mut h = inputs.enc_features[n - 1];
        for (p, block) in self.blocks.iter().enumerate() {
            let feat = inputs.enc_features[n - 2 - p];
            let len = g.tape.value(feat).shape()[2];
            let mut parts = vec![g.tape.resample_nearest(h, len)?, feat];
            if let Some(j) = self.tap_slots[p] {
                parts.push(g.tape.resample_nearest(inputs.taps[j], len)?);
            }
            let cat = g.tape.concat_channels(&parts)?;
            h = block.forward(g, cat, None)?;
        }
        let len = inputs.out_len;
        let mut parts = vec![g.tape.resample_nearest(h, len)?];
        if let Some(j) = self.tap_slots[n - 1] {
            parts.push(g.tape.resample_nearest(inputs.taps[j], len)?);
        }
        if let Some((x0, x0_hat)) = inputs.skip {
            if g.tape.value(x0).shape() != g.tape.value(x0_hat).shape() {
                return Err(dim_err!(
                    "x0 shape {:?} differs from prediction shape {:?}",
                    g.tape.value(x0).shape(),
                    g.tape.value(x0_hat).shape()
                ));
            }
            if g.tape.value(x0).shape()[2] != len {
                return Err(dim_err!("skip inputs have length {}, expected {len}", g.tape.value(x0).shape()[2]));
            }
            parts.push(x0);
            parts.push(x0_hat);
        }
        let cat = g.tape.concat_channels(&parts)?;
        self.output.forward(g, cat)
    }
}

#[derive(Clone, Debug)]
pub struct Classifier {
    in_dim: usize,
    layers: Vec<Dense>,
    params: Vec<ParamId>,
}

impl Classifier {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        cfg: &ClassifierConfig,
        in_dim: usize,
        n_classes: usize,
    ) -> Self {
        let start = store.len();
        let mut dims = vec![in_dim];
        dims.extend(&cfg.hidden);
        dims.push(n_classes);
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, d)| Dense::new(store, rng, &format!("classifier.layer{i}"), Group::Classifier, d[0], d[1]))
            .collect();
        Self {
            in_dim,
            layers,
            params: store.ids_since(start),
        }
    }

    pub fn params(&self) -> &[ParamId] {
        &self.params
    }

    /// Raw class scores; SiLU between affine layers, none after the last.
    pub fn forward(&self, g: &mut Graph, z: Var) -> Result<Var> {
        let (_, width) = g.tape.value(z).dims2()?;
        if width != self.in_dim {
            return Err(dim_err!("classifier expects width {}, got {width}", self.in_dim));
        }
        let mut h = z;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(g, h)?;
            if i + 1 < self.layers.len() {
                h = g.tape.silu(h)?;
            }
        }
        Ok(h)
    }
}
