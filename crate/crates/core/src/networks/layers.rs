//! Building blocks shared by the sub-networks.

use rand::Rng;

use crate::autograd::{Graph, Group, ParamId, ParamStore, Var};
use crate::error::Result;
use crate::tensor::Tensor;

/// 1-D convolution with "same"-style padding of `kernel / 2`.
#[derive(Clone, Debug)]
pub struct Conv {
    pub weight: ParamId,
    pub bias: ParamId,
    pub stride: usize,
    pub padding: usize,
}

impl Conv {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        name: &str,
        group: Group,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
    ) -> Self {
        let fan_in = c_in * kernel;
        let weight = store.add_uniform(format!("{name}.weight"), group, &[c_out, c_in, kernel], fan_in, rng);
        let bias = store.add_uniform(format!("{name}.bias"), group, &[c_out], fan_in, rng);
        Self {
            weight,
            bias,
            stride,
            padding: kernel / 2,
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let w = g.param(self.weight)?;
        let b = g.param(self.bias)?;
        g.tape.conv1d(x, w, Some(b), self.stride, self.padding)
    }

    pub fn params(&self) -> Vec<ParamId> {
        vec![self.weight, self.bias]
    }
}

#[derive(Clone, Debug)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Dense {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        name: &str,
        group: Group,
        d_in: usize,
        d_out: usize,
    ) -> Self {
        let weight = store.add_uniform(format!("{name}.weight"), group, &[d_out, d_in], d_in, rng);
        let bias = store.add_uniform(format!("{name}.bias"), group, &[d_out], d_in, rng);
        Self { weight, bias }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let w = g.param(self.weight)?;
        let b = g.param(self.bias)?;
        g.tape.linear(x, w, Some(b))
    }

    pub fn params(&self) -> Vec<ParamId> {
        vec![self.weight, self.bias]
    }
}

#[derive(Clone, Debug)]
pub struct Norm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub groups: usize,
}

impl Norm {
    pub fn new(store: &mut ParamStore, name: &str, group: Group, channels: usize, groups: usize) -> Self {
        let gamma = store.add(format!("{name}.gamma"), group, Tensor::full(&[channels], 1.0));
        let beta = store.add(format!("{name}.beta"), group, Tensor::zeros(&[channels]));
        Self { gamma, beta, groups }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let gamma = g.param(self.gamma)?;
        let beta = g.param(self.beta)?;
        g.tape.group_norm(x, gamma, beta, self.groups)
    }
}

/// convolution → group norm → SiLU, optionally followed by a projected
/// time embedding added per channel.
#[derive(Clone, Debug)]
pub struct ConvBlock {
    pub conv: Conv,
    pub norm: Norm,
    pub time: Option<Dense>,
}

pub struct BlockSpec {
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: usize,
    pub stride: usize,
    pub groups: usize,
    pub time_dim: Option<usize>,
}

impl ConvBlock {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        name: &str,
        group: Group,
        spec: BlockSpec,
    ) -> Self {
        let conv = Conv::new(
            store,
            rng,
            &format!("{name}.conv"),
            group,
            spec.c_in,
            spec.c_out,
            spec.kernel,
            spec.stride,
        );
        let norm = Norm::new(store, &format!("{name}.norm"), group, spec.c_out, spec.groups);
        let time = spec
            .time_dim
            .map(|d| Dense::new(store, rng, &format!("{name}.time"), group, d, spec.c_out));
        Self { conv, norm, time }
    }

    pub fn forward(&self, g: &mut Graph, x: Var, temb: Option<Var>) -> Result<Var> {
        let h = self.conv.forward(g, x)?;
        let h = self.norm.forward(g, h)?;
        let h = g.tape.silu(h)?;
        match (&self.time, temb) {
            (Some(proj), Some(e)) => {
                let bias = proj.forward(g, e)?;
                g.tape.add_channel_bias(h, bias)
            }
            _ => Ok(h),
        }
    }
}

/// Sinusoidal position features of integer timesteps, `[B, dim]`.
pub fn sinusoidal_embedding(ts: &[usize], dim: usize) -> Tensor {
    let half = dim / 2;
    let mut data = vec![0.0; ts.len() * dim];
    for (row, &t) in data.chunks_mut(dim).zip(ts) {
        for i in 0..half {
            let freq = (-(10_000f64.ln()) * i as f64 / half as f64).exp();
            let arg = t as f64 * freq;
            row[i] = arg.sin();
            row[half + i] = arg.cos();
        }
    }
    Tensor::new(vec![ts.len(), dim], data).expect("embedding shape")
}

/// Sinusoidal features passed through two affine + SiLU layers.
#[derive(Clone, Debug)]
pub struct TimeEmbedding {
    pub dim: usize,
    pub first: Dense,
    pub second: Dense,
}

impl TimeEmbedding {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        name: &str,
        group: Group,
        dim: usize,
        hidden: usize,
    ) -> Self {
        Self {
            dim,
            first: Dense::new(store, rng, &format!("{name}.0"), group, dim, hidden),
            second: Dense::new(store, rng, &format!("{name}.1"), group, hidden, hidden),
        }
    }

    pub fn forward(&self, g: &mut Graph, ts: &[usize]) -> Result<Var> {
        let e = g.tape.constant(sinusoidal_embedding(ts, self.dim))?;
        let h = self.first.forward(g, e)?;
        let h = g.tape.silu(h)?;
        let h = self.second.forward(g, h)?;
        g.tape.silu(h)
    }
}
