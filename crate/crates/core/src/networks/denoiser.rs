//! Time-conditional 1-D U-Net that predicts the clean signal from `x_t`.

use rand::Rng;

use crate::autograd::{Graph, Group, ParamId, ParamStore, Var};
use crate::error::{dim_err, Error, Result};

use super::config::DenoiserConfig;
use super::layers::{BlockSpec, Conv, ConvBlock, TimeEmbedding};

#[derive(Clone, Debug)]
pub struct Denoiser {
    in_channels: usize,
    steps: usize,
    time: TimeEmbedding,
    input: Conv,
    down: Vec<ConvBlock>,
    downsample: Vec<Conv>,
    mid: ConvBlock,
    up: Vec<ConvBlock>,
    output: Conv,
    params: Vec<ParamId>,
    tap_channels: Vec<usize>,
}

/// Prediction plus the up-path activations, ordered deep → shallow.
pub struct DenoiseOutput {
    pub x0_hat: Var,
    pub taps: Vec<Var>,
}

impl Denoiser {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        cfg: &DenoiserConfig,
        groups: usize,
        in_channels: usize,
        steps: usize,
    ) -> Self {
        let start = store.len();
        let grp = Group::Denoiser;
        let w = &cfg.widths;
        let depth = w.len();
        let time_dim = Some(cfg.time_hidden);
        let time = TimeEmbedding::new(store, rng, "denoiser.time", grp, cfg.time_dim, cfg.time_hidden);
        let input = Conv::new(store, rng, "denoiser.input", grp, in_channels, w[0], cfg.kernel, 1);
        let mut down = Vec::with_capacity(depth);
        let mut downsample = Vec::with_capacity(depth);
        for i in 0..depth {
            let c_in = if i == 0 { w[0] } else { w[i - 1] };
            down.push(ConvBlock::new(
                store,
                rng,
                &format!("denoiser.down{i}"),
                grp,
                BlockSpec {
                    c_in,
                    c_out: w[i],
                    kernel: cfg.kernel,
                    stride: 1,
                    groups,
                    time_dim,
                },
            ));
            downsample.push(Conv::new(
                store,
                rng,
                &format!("denoiser.downsample{i}"),
                grp,
                w[i],
                w[i],
                3,
                2,
            ));
        }
        let last = w[depth - 1];
        let mid = ConvBlock::new(
            store,
            rng,
            "denoiser.mid",
            grp,
            BlockSpec {
                c_in: last,
                c_out: last,
                kernel: cfg.kernel,
                stride: 1,
                groups,
                time_dim,
            },
        );
        let mut up: Vec<Option<ConvBlock>> = vec![None; depth];
        for i in (0..depth).rev() {
            let below = if i + 1 == depth { last } else { w[i + 1] };
            up[i] = Some(ConvBlock::new(
                store,
                rng,
                &format!("denoiser.up{i}"),
                grp,
                BlockSpec {
                    c_in: below + w[i],
                    c_out: w[i],
                    kernel: cfg.kernel,
                    stride: 1,
                    groups,
                    time_dim,
                },
            ));
        }
        let output = Conv::new(store, rng, "denoiser.output", grp, w[0], in_channels, 1, 1);
        Self {
            in_channels,
            steps,
            time,
            input,
            down,
            downsample,
            mid,
            up: up.into_iter().map(|b| b.expect("built")).collect(),
            output,
            params: store.ids_since(start),
            tap_channels: w.iter().rev().copied().collect(),
        }
    }

    pub fn params(&self) -> &[ParamId] {
        &self.params
    }

    /// Channel counts of the taps, deep → shallow.
    pub fn tap_channels(&self) -> &[usize] {
        &self.tap_channels
    }

    pub fn forward(&self, g: &mut Graph, x_t: Var, ts: &[usize]) -> Result<DenoiseOutput> {
        let (b, c, _) = g.tape.value(x_t).dims3()?;
        if c != self.in_channels {
            return Err(dim_err!(
                "denoiser expects {} channels, got {c}",
                self.in_channels
            ));
        }
        if ts.len() != b {
            return Err(dim_err!("{} timesteps for a batch of {b}", ts.len()));
        }
        if let Some(&t) = ts.iter().find(|&&t| t == 0 || t > self.steps) {
            return Err(Error::Index(format!(
                "timestep {t} outside [1, {}]",
                self.steps
            )));
        }
        let temb = self.time.forward(g, ts)?;
        let mut h = self.input.forward(g, x_t)?;
        let mut skips = Vec::with_capacity(self.down.len());
        for (block, ds) in self.down.iter().zip(&self.downsample) {
            h = block.forward(g, h, Some(temb))?;
            skips.push(h);
            h = ds.forward(g, h)?;
        }
        h = self.mid.forward(g, h, Some(temb))?;
        let mut taps = Vec::with_capacity(self.up.len());
        for (block, &skip) in self.up.iter().zip(&skips).rev() {
            let len = g.tape.value(skip).shape()[2];
            let hu = g.tape.resample_nearest(h, len)?;
            let cat = g.tape.concat_channels(&[hu, skip])?;
            h = block.forward(g, cat, Some(temb))?;
            taps.push(h);
        }
        let x0_hat = self.output.forward(g, h)?;
        Ok(DenoiseOutput { x0_hat, taps })
    }
}
