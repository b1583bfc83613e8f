//! Tensor-level reverse-mode differentiation.
//!
//! Every primitive appends a node to a [`Tape`]; node indices are a
//! topological order by construction, so [`Tape::backward`] walks them from
//! the root downwards, visiting each node once and summing contributions
//! from every consumer.
//!
//! Convolutions follow the cross-correlation convention: the kernel is not
//! flipped, so `y[j] = Σ_k w[k]·x[j·stride + k − padding]`.

use crate::error::{dim_err, Error, Result};
use crate::tensor::Tensor;

use super::kernels::{self, ConvGeom};

/// Handle to a node on a tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Silu(Var),
    Conv1d {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: ConvGeom,
    },
    GroupNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        groups: usize,
        means: Vec<f64>,
        rstds: Vec<f64>,
    },
    Linear {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    ChannelBias {
        x: Var,
        bias: Var,
    },
    Concat(Vec<Var>),
    Resample(Var),
    AvgPool(Var),
    Reshape(Var),
    MeanAbsError(Var, Var),
    MeanSquaredError(Var, Var),
    SumProduct(Var, Tensor),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Leaf gradients produced by one backward pass. A leaf that the root does
/// not depend on has no entry.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn reached(&self, v: Var) -> bool {
        self.get(v).is_some()
    }
}

fn same_shape(a: &Tensor, b: &Tensor, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(dim_err!(
            "{what}: shape mismatch {:?} vs {:?}",
            a.shape(),
            b.shape()
        ));
    }
    Ok(())
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool, what: &str) -> Result<Var> {
        value.ensure_finite(what)?;
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Result<Var> {
        self.push(value, Op::Leaf, requires_grad, "leaf")
    }

    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        self.leaf(value, false)
    }

    /// Copies `v` into a fresh leaf that blocks gradient flow.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.value(v).clone();
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y)?;
        let rg = self.rg(&[a, b]);
        self.push(out, Op::Add(a, b), rg, "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), |x, y| x - y)?;
        let rg = self.rg(&[a, b]);
        self.push(out, Op::Sub(a, b), rg, "sub")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), |x, y| x * y)?;
        let rg = self.rg(&[a, b]);
        self.push(out, Op::Mul(a, b), rg, "mul")
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let out = self.value(a).map(|x| x * c);
        let rg = self.rg(&[a]);
        self.push(out, Op::Scale(a, c), rg, "scale")
    }

    pub fn silu(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(|x| x * kernels::sigmoid(x));
        let rg = self.rg(&[a]);
        self.push(out, Op::Silu(a), rg, "silu")
    }

    /// `input [B, C_in, L]`, `kernel [C_out, C_in, K]`, `bias [C_out]`.
    pub fn conv1d(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        let (batch, c_in, len) = self.value(x).dims3()?;
        let (c_out, wc_in, kernel) = self.value(w).dims3()?;
        if wc_in != c_in {
            return Err(dim_err!(
                "conv1d: kernel expects {wc_in} input channels, input has {c_in}"
            ));
        }
        if stride == 0 {
            return Err(dim_err!("conv1d: stride must be at least 1"));
        }
        if kernel == 0 || kernel > len + 2 * padding {
            return Err(dim_err!(
                "conv1d: kernel size {kernel} exceeds padded length {}",
                len + 2 * padding
            ));
        }
        if let Some(b) = b {
            if self.value(b).shape() != [c_out] {
                return Err(dim_err!(
                    "conv1d: bias shape {:?}, expected [{c_out}]",
                    self.value(b).shape()
                ));
            }
        }
        let len_out = (len + 2 * padding - kernel) / stride + 1;
        let geom = ConvGeom {
            batch,
            c_in,
            len,
            c_out,
            kernel,
            stride,
            padding,
            len_out,
        };
        let out = kernels::conv1d_forward(
            self.value(x).data(),
            self.value(w).data(),
            b.map(|b| self.value(b).data()),
            &geom,
        );
        let value = Tensor::new(vec![batch, c_out, len_out], out)?;
        let mut inputs = vec![x, w];
        inputs.extend(b);
        let rg = self.rg(&inputs);
        self.push(value, Op::Conv1d { x, w, b, geom }, rg, "conv1d")
    }

    /// Group normalization over `[B, C, L]` with per-channel affine.
    pub fn group_norm(&mut self, x: Var, gamma: Var, beta: Var, groups: usize) -> Result<Var> {
        let dims = self.value(x).dims3()?;
        let c = dims.1;
        if groups == 0 || c % groups != 0 {
            return Err(dim_err!(
                "group_norm: {c} channels not divisible into {groups} groups"
            ));
        }
        if self.value(gamma).shape() != [c] || self.value(beta).shape() != [c] {
            return Err(dim_err!("group_norm: affine parameters must have shape [{c}]"));
        }
        let (out, means, rstds) = kernels::group_norm_forward(
            self.value(x).data(),
            self.value(gamma).data(),
            self.value(beta).data(),
            dims,
            groups,
        );
        let value = Tensor::new(vec![dims.0, dims.1, dims.2], out)?;
        let rg = self.rg(&[x, gamma, beta]);
        self.push(
            value,
            Op::GroupNorm {
                x,
                gamma,
                beta,
                groups,
                means,
                rstds,
            },
            rg,
            "group_norm",
        )
    }

    /// `x [B, in]`, `w [out, in]`, `b [out]` → `[B, out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (batch, d_in) = self.value(x).dims2()?;
        let (d_out, wd_in) = self.value(w).dims2()?;
        if wd_in != d_in {
            return Err(dim_err!(
                "linear: weight expects width {wd_in}, input has width {d_in}"
            ));
        }
        let mut out = vec![0.0; batch * d_out];
        if let Some(b) = b {
            let bias = self.value(b);
            if bias.shape() != [d_out] {
                return Err(dim_err!("linear: bias shape {:?}, expected [{d_out}]", bias.shape()));
            }
            for row in out.chunks_mut(d_out) {
                row.copy_from_slice(bias.data());
            }
        }
        kernels::gemm(
            batch,
            d_in,
            d_out,
            self.value(x).data(),
            false,
            self.value(w).data(),
            true,
            1.0,
            &mut out,
        );
        let value = Tensor::new(vec![batch, d_out], out)?;
        let mut inputs = vec![x, w];
        inputs.extend(b);
        let rg = self.rg(&inputs);
        self.push(value, Op::Linear { x, w, b }, rg, "linear")
    }

    /// Adds a per-sample, per-channel offset `[B, C]` to `[B, C, L]`.
    pub fn add_channel_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (b, c, l) = self.value(x).dims3()?;
        if self.value(bias).shape() != [b, c] {
            return Err(dim_err!(
                "add_channel_bias: bias shape {:?}, expected [{b}, {c}]",
                self.value(bias).shape()
            ));
        }
        let mut out = self.value(x).data().to_vec();
        let e = self.value(bias).data();
        for (row, &v) in out.chunks_mut(l).zip(e) {
            row.iter_mut().for_each(|o| *o += v);
        }
        let value = Tensor::new(vec![b, c, l], out)?;
        let rg = self.rg(&[x, bias]);
        self.push(value, Op::ChannelBias { x, bias }, rg, "add_channel_bias")
    }

    /// Concatenates `[B, C_i, L]` tensors along the channel axis.
    pub fn concat_channels(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(dim_err!("concat_channels: nothing to concatenate"));
        }
        let (b, _, l) = self.value(parts[0]).dims3()?;
        let mut total = 0;
        for &p in parts {
            let (pb, pc, pl) = self.value(p).dims3()?;
            if pb != b || pl != l {
                return Err(dim_err!(
                    "concat_channels: part shape {:?} incompatible with batch {b}, length {l}",
                    self.value(p).shape()
                ));
            }
            total += pc;
        }
        let mut out = Vec::with_capacity(b * total * l);
        for bi in 0..b {
            for &p in parts {
                let t = self.value(p);
                let c = t.shape()[1];
                out.extend_from_slice(&t.data()[bi * c * l..(bi + 1) * c * l]);
            }
        }
        let value = Tensor::new(vec![b, total, l], out)?;
        let rg = self.rg(parts);
        self.push(value, Op::Concat(parts.to_vec()), rg, "concat_channels")
    }

    /// Nearest-neighbour resampling of the time axis to `out_len`.
    pub fn resample_nearest(&mut self, x: Var, out_len: usize) -> Result<Var> {
        let (b, c, l) = self.value(x).dims3()?;
        if out_len == l {
            return Ok(x);
        }
        if out_len == 0 {
            return Err(dim_err!("resample_nearest: output length must be positive"));
        }
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(b * c * out_len);
        for row in src.chunks(l) {
            out.extend((0..out_len).map(|j| row[kernels::nearest_src(j, l, out_len)]));
        }
        let value = Tensor::new(vec![b, c, out_len], out)?;
        let rg = self.rg(&[x]);
        self.push(value, Op::Resample(x), rg, "resample_nearest")
    }

    /// Mean over `out_len` contiguous bins that partition the time axis.
    pub fn adaptive_avg_pool1d(&mut self, x: Var, out_len: usize) -> Result<Var> {
        let (b, c, l) = self.value(x).dims3()?;
        if out_len == 0 || out_len > l {
            return Err(dim_err!(
                "adaptive_avg_pool1d: output length {out_len} not in [1, {l}]"
            ));
        }
        let mut out = Vec::with_capacity(b * c * out_len);
        for row in self.value(x).data().chunks(l) {
            for i in 0..out_len {
                let (s, e) = kernels::pool_bin(i, l, out_len);
                out.push(row[s..e].iter().sum::<f64>() / (e - s) as f64);
            }
        }
        let value = Tensor::new(vec![b, c, out_len], out)?;
        let rg = self.rg(&[x]);
        self.push(value, Op::AvgPool(x), rg, "adaptive_avg_pool1d")
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let value = self.value(x).clone().reshape(shape)?;
        let rg = self.rg(&[x]);
        self.push(value, Op::Reshape(x), rg, "reshape")
    }

    /// `[B, d1, d2, …]` → `[B, d1·d2·…]`.
    pub fn flatten(&mut self, x: Var) -> Result<Var> {
        let shape = self.value(x).shape();
        let rest: usize = shape[1..].iter().product();
        let b = shape[0];
        self.reshape(x, vec![b, rest])
    }

    /// Mean absolute difference, reduced to a scalar.
    pub fn mean_abs_error(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self.value(a), self.value(b), "mean_abs_error")?;
        let (ta, tb) = (self.value(a).data(), self.value(b).data());
        let s: f64 = ta.iter().zip(tb).map(|(x, y)| (x - y).abs()).sum();
        let rg = self.rg(&[a, b]);
        self.push(
            Tensor::scalar(s / ta.len() as f64),
            Op::MeanAbsError(a, b),
            rg,
            "mean_abs_error",
        )
    }

    pub fn mean_squared_error(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self.value(a), self.value(b), "mean_squared_error")?;
        let (ta, tb) = (self.value(a).data(), self.value(b).data());
        let s: f64 = ta.iter().zip(tb).map(|(x, y)| (x - y) * (x - y)).sum();
        let rg = self.rg(&[a, b]);
        self.push(
            Tensor::scalar(s / ta.len() as f64),
            Op::MeanSquaredError(a, b),
            rg,
            "mean_squared_error",
        )
    }

    /// `Σ x ⊙ weights` with constant weights.
    pub fn sum_product(&mut self, x: Var, weights: Tensor) -> Result<Var> {
        same_shape(self.value(x), &weights, "sum_product")?;
        let s: f64 = self
            .value(x)
            .data()
            .iter()
            .zip(weights.data())
            .map(|(a, b)| a * b)
            .sum();
        let rg = self.rg(&[x]);
        self.push(Tensor::scalar(s), Op::SumProduct(x, weights), rg, "sum_product")
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let ones = Tensor::full(self.value(x).shape(), 1.0);
        self.sum_product(x, ones)
    }

    pub fn backward(&self, root: Var) -> Result<Gradients> {
        self.backward_from(&[root])
    }

    /// Backpropagates the sum of several scalar roots in one sweep.
    pub fn backward_from(&self, roots: &[Var]) -> Result<Gradients> {
        let Some(top) = roots.iter().map(|r| r.0).max() else {
            return Ok(Gradients { grads: Vec::new() });
        };
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; top + 1];
        for &r in roots {
            if self.value(r).numel() != 1 {
                return Err(dim_err!(
                    "backward root must be a scalar, got shape {:?}",
                    self.value(r).shape()
                ));
            }
            if self.nodes[r.0].requires_grad {
                accumulate(&mut grads, r, &[1.0]);
            }
        }
        for i in (0..=top).rev() {
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            if let Some(pos) = g.iter().position(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!(
                    "non-finite gradient {} at node {i}, flat index {pos}",
                    g[pos]
                )));
            }
            self.propagate(node, &g, &mut grads)?;
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) -> Result<()> {
        let want = |v: Var| self.nodes[v.0].requires_grad;
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                if want(*a) {
                    accumulate(grads, *a, g);
                }
                if want(*b) {
                    accumulate(grads, *b, g);
                }
            }
            Op::Sub(a, b) => {
                if want(*a) {
                    accumulate(grads, *a, g);
                }
                if want(*b) {
                    let neg: Vec<f64> = g.iter().map(|v| -v).collect();
                    accumulate(grads, *b, &neg);
                }
            }
            Op::Mul(a, b) => {
                if want(*a) {
                    let d: Vec<f64> = g
                        .iter()
                        .zip(self.value(*b).data())
                        .map(|(g, y)| g * y)
                        .collect();
                    accumulate(grads, *a, &d);
                }
                if want(*b) {
                    let d: Vec<f64> = g
                        .iter()
                        .zip(self.value(*a).data())
                        .map(|(g, x)| g * x)
                        .collect();
                    accumulate(grads, *b, &d);
                }
            }
            Op::Scale(a, c) => {
                let d: Vec<f64> = g.iter().map(|v| v * c).collect();
                accumulate(grads, *a, &d);
            }
            Op::Silu(a) => {
                let d: Vec<f64> = g
                    .iter()
                    .zip(self.value(*a).data())
                    .map(|(g, &x)| {
                        let s = kernels::sigmoid(x);
                        g * s * (1.0 + x * (1.0 - s))
                    })
                    .collect();
                accumulate(grads, *a, &d);
            }
            Op::Conv1d { x, w, b, geom } => {
                let need = (want(*x), want(*w), b.map(want).unwrap_or(false));
                let cg = kernels::conv1d_backward(
                    self.value(*x).data(),
                    self.value(*w).data(),
                    g,
                    geom,
                    need,
                );
                if let Some(dx) = cg.dx {
                    accumulate(grads, *x, &dx);
                }
                if let Some(dw) = cg.dw {
                    accumulate(grads, *w, &dw);
                }
                if let (Some(b), Some(db)) = (b, cg.db) {
                    accumulate(grads, *b, &db);
                }
            }
            Op::GroupNorm {
                x,
                gamma,
                beta,
                groups,
                means,
                rstds,
            } => {
                let dims = self.value(*x).dims3()?;
                let (dx, dgamma, dbeta) = kernels::group_norm_backward(
                    self.value(*x).data(),
                    self.value(*gamma).data(),
                    g,
                    means,
                    rstds,
                    dims,
                    *groups,
                );
                if want(*x) {
                    accumulate(grads, *x, &dx);
                }
                if want(*gamma) {
                    accumulate(grads, *gamma, &dgamma);
                }
                if want(*beta) {
                    accumulate(grads, *beta, &dbeta);
                }
            }
            Op::Linear { x, w, b } => {
                let (batch, d_in) = self.value(*x).dims2()?;
                let d_out = self.value(*w).shape()[0];
                if want(*x) {
                    let mut dx = vec![0.0; batch * d_in];
                    kernels::gemm(batch, d_out, d_in, g, false, self.value(*w).data(), false, 0.0, &mut dx);
                    accumulate(grads, *x, &dx);
                }
                if want(*w) {
                    let mut dw = vec![0.0; d_out * d_in];
                    kernels::gemm(d_out, batch, d_in, g, true, self.value(*x).data(), false, 0.0, &mut dw);
                    accumulate(grads, *w, &dw);
                }
                if let Some(b) = b.filter(|b| want(*b)) {
                    let mut db = vec![0.0; d_out];
                    for row in g.chunks(d_out) {
                        db.iter_mut().zip(row).for_each(|(d, v)| *d += v);
                    }
                    accumulate(grads, b, &db);
                }
            }
            Op::ChannelBias { x, bias } => {
                if want(*x) {
                    accumulate(grads, *x, g);
                }
                if want(*bias) {
                    let l = self.value(*x).shape()[2];
                    let d: Vec<f64> = g.chunks(l).map(|row| row.iter().sum()).collect();
                    accumulate(grads, *bias, &d);
                }
            }
            Op::Concat(parts) => {
                let (b, total, l) = node.value.dims3()?;
                let mut offset = 0;
                for &p in parts {
                    let c = self.value(p).shape()[1];
                    if want(p) {
                        let mut d = Vec::with_capacity(b * c * l);
                        for bi in 0..b {
                            let start = (bi * total + offset) * l;
                            d.extend_from_slice(&g[start..start + c * l]);
                        }
                        accumulate(grads, p, &d);
                    }
                    offset += c;
                }
            }
            Op::Resample(x) => {
                let l = self.value(*x).shape()[2];
                let out_len = node.value.shape()[2];
                let mut d = vec![0.0; self.value(*x).numel()];
                for (drow, grow) in d.chunks_mut(l).zip(g.chunks(out_len)) {
                    for (j, &v) in grow.iter().enumerate() {
                        drow[kernels::nearest_src(j, l, out_len)] += v;
                    }
                }
                accumulate(grads, *x, &d);
            }
            Op::AvgPool(x) => {
                let l = self.value(*x).shape()[2];
                let out_len = node.value.shape()[2];
                let mut d = vec![0.0; self.value(*x).numel()];
                for (drow, grow) in d.chunks_mut(l).zip(g.chunks(out_len)) {
                    for (i, &v) in grow.iter().enumerate() {
                        let (s, e) = kernels::pool_bin(i, l, out_len);
                        let share = v / (e - s) as f64;
                        drow[s..e].iter_mut().for_each(|o| *o += share);
                    }
                }
                accumulate(grads, *x, &d);
            }
            Op::Reshape(x) => accumulate(grads, *x, g),
            Op::MeanAbsError(a, b) => {
                let n = self.value(*a).numel() as f64;
                let d: Vec<f64> = self
                    .value(*a)
                    .data()
                    .iter()
                    .zip(self.value(*b).data())
                    .map(|(x, y)| {
                        let diff = x - y;
                        let s = if diff > 0.0 {
                            1.0
                        } else if diff < 0.0 {
                            -1.0
                        } else {
                            0.0
                        };
                        g[0] * s / n
                    })
                    .collect();
                if want(*a) {
                    accumulate(grads, *a, &d);
                }
                if want(*b) {
                    let neg: Vec<f64> = d.iter().map(|v| -v).collect();
                    accumulate(grads, *b, &neg);
                }
            }
            Op::MeanSquaredError(a, b) => {
                let n = self.value(*a).numel() as f64;
                let d: Vec<f64> = self
                    .value(*a)
                    .data()
                    .iter()
                    .zip(self.value(*b).data())
                    .map(|(x, y)| g[0] * 2.0 * (x - y) / n)
                    .collect();
                if want(*a) {
                    accumulate(grads, *a, &d);
                }
                if want(*b) {
                    let neg: Vec<f64> = d.iter().map(|v| -v).collect();
                    accumulate(grads, *b, &neg);
                }
            }
            Op::SumProduct(x, w) => {
                let d: Vec<f64> = w.data().iter().map(|v| v * g[0]).collect();
                accumulate(grads, *x, &d);
            }
        }
        Ok(())
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], v: Var, g: &[f64]) {
    match &mut grads[v.0] {
        Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
        slot @ None => *slot = Some(g.to_vec()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t3(b: usize, c: usize, l: usize, data: Vec<f64>) -> Tensor {
        Tensor::new(vec![b, c, l], data).unwrap()
    }

    #[test]
    fn conv1d_hand_example() {
        let mut tape = Tape::new();
        let x = tape.constant(t3(1, 1, 3, vec![1.0, 2.0, 3.0])).unwrap();
        let w = tape.constant(t3(1, 1, 3, vec![1.0, 0.0, -1.0])).unwrap();
        let y = tape.conv1d(x, w, None, 1, 0).unwrap();
        assert_eq!(tape.value(y).data(), &[-2.0]);
    }

    #[test]
    fn conv1d_identity_kernel_with_padding() {
        let data: Vec<f64> = (0..10).map(|i| (i as f64 * 0.7).cos()).collect();
        let mut tape = Tape::new();
        let x = tape.constant(t3(1, 1, 10, data.clone())).unwrap();
        let w = tape.constant(t3(1, 1, 3, vec![0.0, 1.0, 0.0])).unwrap();
        let y = tape.conv1d(x, w, None, 1, 1).unwrap();
        assert_eq!(tape.value(y).data(), &data[..]);
    }

    #[test]
    fn conv1d_zero_input_gives_bias() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(&[2, 3, 9])).unwrap();
        let w = tape.constant(Tensor::full(&[4, 3, 3], 0.3)).unwrap();
        let b = tape
            .constant(Tensor::from_vec(vec![0.5, -1.0, 2.0, 0.0]))
            .unwrap();
        let y = tape.conv1d(x, w, Some(b), 2, 1).unwrap();
        let (_, c, l) = tape.value(y).dims3().unwrap();
        assert_eq!(l, (9 + 2 - 3) / 2 + 1);
        for (i, v) in tape.value(y).data().iter().enumerate() {
            assert_eq!(*v, [0.5, -1.0, 2.0, 0.0][(i / l) % c]);
        }
    }

    #[test]
    fn conv1d_rejects_mismatch() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(&[1, 2, 5])).unwrap();
        let w = tape.constant(Tensor::zeros(&[1, 3, 3])).unwrap();
        assert!(matches!(tape.conv1d(x, w, None, 1, 0), Err(Error::Dimension(_))));
        let w = tape.constant(Tensor::zeros(&[1, 2, 9])).unwrap();
        assert!(matches!(tape.conv1d(x, w, None, 1, 1), Err(Error::Dimension(_))));
    }

    #[test]
    fn non_finite_input_is_numeric_error() {
        let mut tape = Tape::new();
        let x = tape.leaf(t3(1, 1, 3, vec![1.0, f64::NAN, 0.0]), true);
        assert!(matches!(x, Err(Error::Numeric(_))));
        let x = tape.constant(t3(1, 1, 3, vec![1e300, 1e300, 1e300])).unwrap();
        let w = tape.constant(t3(1, 1, 3, vec![1e300, 1e300, 1e300])).unwrap();
        assert!(matches!(tape.conv1d(x, w, None, 1, 0), Err(Error::Numeric(_))));
    }

    #[test]
    fn adaptive_pool_examples() {
        let mut tape = Tape::new();
        let x = tape.constant(t3(1, 1, 4, vec![1.0, 2.0, 3.0, 4.0])).unwrap();
        let p = tape.adaptive_avg_pool1d(x, 2).unwrap();
        assert_eq!(tape.value(p).data(), &[1.5, 3.5]);
        let p = tape.adaptive_avg_pool1d(x, 4).unwrap();
        assert_eq!(tape.value(p).data(), &[1.0, 2.0, 3.0, 4.0]);
        let p = tape.adaptive_avg_pool1d(x, 1).unwrap();
        assert_eq!(tape.value(p).data(), &[2.5]);
        assert!(matches!(
            tape.adaptive_avg_pool1d(x, 5),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn fan_out_gradients_sum() {
        // f(x) = 3x, g(x) = x*x; d/dx (f + g) = 3 + 2x
        let xs = vec![0.5, -1.0, 2.0];
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_vec(xs.clone()), true).unwrap();
        let f = tape.scale(x, 3.0).unwrap();
        let g = tape.mul(x, x).unwrap();
        let s = tape.add(f, g).unwrap();
        let root = tape.sum(s).unwrap();
        let grads = tape.backward(root).unwrap();
        for (gv, xv) in grads.get(x).unwrap().iter().zip(&xs) {
            assert!((gv - (3.0 + 2.0 * xv)).abs() < 1e-12);
        }
    }

    #[test]
    fn unreached_leaf_has_no_gradient() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::from_vec(vec![1.0]), true).unwrap();
        let b = tape.leaf(Tensor::from_vec(vec![2.0]), true).unwrap();
        let r = tape.sum(a).unwrap();
        let grads = tape.backward(r).unwrap();
        assert!(grads.reached(a));
        assert!(!grads.reached(b));
    }

    #[test]
    fn detach_blocks_gradient() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::from_vec(vec![1.0, 2.0]), true).unwrap();
        let d = tape.detach(a);
        let s = tape.add(a, d).unwrap();
        let r = tape.sum(s).unwrap();
        let grads = tape.backward(r).unwrap();
        assert_eq!(grads.get(a).unwrap(), &[1.0, 1.0]);
    }

    #[test]
    fn backward_requires_scalar_root() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::from_vec(vec![1.0, 2.0]), true).unwrap();
        assert!(matches!(tape.backward(a), Err(Error::Dimension(_))));
    }
}
