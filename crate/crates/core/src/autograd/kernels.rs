//! Forward and backward kernels over flat slices. Shapes are validated by
//! the tape before these are called.

/// `c = beta·c + op(a)·op(b)` where `op(a)` is `m×k` and `op(b)` is `k×n`.
/// With `a_t` set, `a` is stored `k×m`; with `b_t` set, `b` is stored `n×k`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_t: bool,
    b: &[f64],
    b_t: bool,
    beta: f64,
    c: &mut [f64],
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the strides above address exactly the m×k, k×n and m×n
    // regions whose lengths were asserted.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub batch: usize,
    pub c_in: usize,
    pub len: usize,
    pub c_out: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub len_out: usize,
}

impl ConvGeom {
    fn cols_rows(&self) -> usize {
        self.c_in * self.kernel
    }
}

/// Unrolls one sample `[c_in, len]` into `[c_in·kernel, len_out]`.
fn im2col(x: &[f64], g: &ConvGeom, cols: &mut [f64]) {
    for ci in 0..g.c_in {
        let row_in = &x[ci * g.len..(ci + 1) * g.len];
        for kk in 0..g.kernel {
            let out = &mut cols[(ci * g.kernel + kk) * g.len_out..][..g.len_out];
            for (j, o) in out.iter_mut().enumerate() {
                let pos = (j * g.stride + kk) as isize - g.padding as isize;
                *o = if pos >= 0 && (pos as usize) < g.len {
                    row_in[pos as usize]
                } else {
                    0.0
                };
            }
        }
    }
}

fn col2im_add(cols: &[f64], g: &ConvGeom, dx: &mut [f64]) {
    for ci in 0..g.c_in {
        let row = &mut dx[ci * g.len..(ci + 1) * g.len];
        for kk in 0..g.kernel {
            let src = &cols[(ci * g.kernel + kk) * g.len_out..][..g.len_out];
            for (j, &v) in src.iter().enumerate() {
                let pos = (j * g.stride + kk) as isize - g.padding as isize;
                if pos >= 0 && (pos as usize) < g.len {
                    row[pos as usize] += v;
                }
            }
        }
    }
}

pub(crate) fn conv1d_forward(x: &[f64], w: &[f64], bias: Option<&[f64]>, g: &ConvGeom) -> Vec<f64> {
    let rows = g.cols_rows();
    let mut cols = vec![0.0; rows * g.len_out];
    let mut out = vec![0.0; g.batch * g.c_out * g.len_out];
    for b in 0..g.batch {
        im2col(&x[b * g.c_in * g.len..(b + 1) * g.c_in * g.len], g, &mut cols);
        let y = &mut out[b * g.c_out * g.len_out..(b + 1) * g.c_out * g.len_out];
        if let Some(bias) = bias {
            for (co, chunk) in y.chunks_mut(g.len_out).enumerate() {
                chunk.fill(bias[co]);
            }
        }
        gemm(g.c_out, rows, g.len_out, w, false, &cols, false, 1.0, y);
    }
    out
}

pub(crate) struct ConvGrads {
    pub dx: Option<Vec<f64>>,
    pub dw: Option<Vec<f64>>,
    pub db: Option<Vec<f64>>,
}

pub(crate) fn conv1d_backward(
    x: &[f64],
    w: &[f64],
    dy: &[f64],
    g: &ConvGeom,
    need: (bool, bool, bool),
) -> ConvGrads {
    let rows = g.cols_rows();
    let mut cols = vec![0.0; rows * g.len_out];
    let mut dcols = vec![0.0; rows * g.len_out];
    let mut dx = need.0.then(|| vec![0.0; x.len()]);
    let mut dw = need.1.then(|| vec![0.0; w.len()]);
    let mut db = need.2.then(|| vec![0.0; g.c_out]);
    for b in 0..g.batch {
        let dy_b = &dy[b * g.c_out * g.len_out..(b + 1) * g.c_out * g.len_out];
        if let Some(db) = db.as_mut() {
            for (co, chunk) in dy_b.chunks(g.len_out).enumerate() {
                db[co] += chunk.iter().sum::<f64>();
            }
        }
        if let Some(dw) = dw.as_mut() {
            im2col(&x[b * g.c_in * g.len..(b + 1) * g.c_in * g.len], g, &mut cols);
            gemm(g.c_out, g.len_out, rows, dy_b, false, &cols, true, 1.0, dw);
        }
        if let Some(dx) = dx.as_mut() {
            gemm(rows, g.c_out, g.len_out, w, true, dy_b, false, 0.0, &mut dcols);
            col2im_add(&dcols, g, &mut dx[b * g.c_in * g.len..(b + 1) * g.c_in * g.len]);
        }
    }
    ConvGrads { dx, dw, db }
}

pub(crate) const GROUP_NORM_EPS: f64 = 1e-5;

/// Returns output plus per-(sample, group) mean and reciprocal std.
pub(crate) fn group_norm_forward(
    x: &[f64],
    gamma: &[f64],
    beta: &[f64],
    (batch, channels, len): (usize, usize, usize),
    groups: usize,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let per = channels / groups;
    let n = (per * len) as f64;
    let mut out = vec![0.0; x.len()];
    let mut means = Vec::with_capacity(batch * groups);
    let mut rstds = Vec::with_capacity(batch * groups);
    for b in 0..batch {
        for gi in 0..groups {
            let start = (b * channels + gi * per) * len;
            let seg = &x[start..start + per * len];
            let mean = seg.iter().sum::<f64>() / n;
            let var = seg.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let rstd = 1.0 / (var + GROUP_NORM_EPS).sqrt();
            for c in 0..per {
                let ch = gi * per + c;
                let off = start + c * len;
                for i in 0..len {
                    out[off + i] = (x[off + i] - mean) * rstd * gamma[ch] + beta[ch];
                }
            }
            means.push(mean);
            rstds.push(rstd);
        }
    }
    (out, means, rstds)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn group_norm_backward(
    x: &[f64],
    gamma: &[f64],
    dy: &[f64],
    means: &[f64],
    rstds: &[f64],
    (batch, channels, len): (usize, usize, usize),
    groups: usize,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let per = channels / groups;
    let n = (per * len) as f64;
    let mut dx = vec![0.0; x.len()];
    let mut dgamma = vec![0.0; channels];
    let mut dbeta = vec![0.0; channels];
    for b in 0..batch {
        for gi in 0..groups {
            let (mean, rstd) = (means[b * groups + gi], rstds[b * groups + gi]);
            let start = (b * channels + gi * per) * len;
            let mut sum_dxhat = 0.0;
            let mut sum_dxhat_xhat = 0.0;
            for c in 0..per {
                let ch = gi * per + c;
                let off = start + c * len;
                for i in 0..len {
                    let xhat = (x[off + i] - mean) * rstd;
                    let d = dy[off + i];
                    dgamma[ch] += d * xhat;
                    dbeta[ch] += d;
                    let dxhat = d * gamma[ch];
                    sum_dxhat += dxhat;
                    sum_dxhat_xhat += dxhat * xhat;
                }
            }
            let m1 = sum_dxhat / n;
            let m2 = sum_dxhat_xhat / n;
            for c in 0..per {
                let ch = gi * per + c;
                let off = start + c * len;
                for i in 0..len {
                    let xhat = (x[off + i] - mean) * rstd;
                    let dxhat = dy[off + i] * gamma[ch];
                    dx[off + i] = rstd * (dxhat - m1 - xhat * m2);
                }
            }
        }
    }
    (dx, dgamma, dbeta)
}

/// Bin `i` of an `len → out_len` adaptive pool covers `[floor(i·len/out), floor((i+1)·len/out))`.
pub(crate) fn pool_bin(i: usize, len: usize, out_len: usize) -> (usize, usize) {
    (i * len / out_len, (i + 1) * len / out_len)
}

/// Source index for output position `j` of a nearest-neighbour resample.
pub(crate) fn nearest_src(j: usize, len_in: usize, len_out: usize) -> usize {
    j * len_in / len_out
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_matches_naive_with_transposes() {
        let (m, k, n) = (3, 4, 5);
        let a: Vec<f64> = (0..m * k).map(|i| i as f64 * 0.5 - 2.0).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64).sin()).collect();
        let mut naive = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    naive[i * n + j] += a[i * k + p] * b[p * n + j];
                }
            }
        }
        let mut c = vec![0.0; m * n];
        gemm(m, k, n, &a, false, &b, false, 0.0, &mut c);
        for (x, y) in c.iter().zip(&naive) {
            assert!((x - y).abs() < 1e-12);
        }
        let mut at = vec![0.0; m * k];
        for i in 0..m {
            for p in 0..k {
                at[p * m + i] = a[i * k + p];
            }
        }
        let mut bt = vec![0.0; k * n];
        for p in 0..k {
            for j in 0..n {
                bt[j * k + p] = b[p * n + j];
            }
        }
        let mut c2 = vec![0.0; m * n];
        gemm(m, k, n, &at, true, &bt, true, 0.0, &mut c2);
        for (x, y) in c2.iter().zip(&naive) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn pool_bins_partition() {
        for len in 1..20 {
            for out in 1..=len {
                let mut next = 0;
                for i in 0..out {
                    let (s, e) = pool_bin(i, len, out);
                    assert_eq!(s, next);
                    assert!(e > s);
                    next = e;
                }
                assert_eq!(next, len);
            }
        }
    }
}
