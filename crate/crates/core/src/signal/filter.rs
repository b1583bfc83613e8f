//! IIR design and zero-phase filtering over second-order sections.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{config_err, Result};

/// Biquad `[b0, b1, b2, a0, a1, a2]` with `a0 == 1`.
pub type Sos = [f64; 6];

/// Digital Butterworth bandpass of prototype order `order` (the result has
/// `order` sections and `2·order` poles), unit gain at the band centre.
pub fn butter_bandpass(order: usize, lo: f64, hi: f64, fs: f64) -> Result<Vec<Sos>> {
    let nyq = fs / 2.0;
    if order == 0 {
        return Err(config_err!("filter order must be at least 1"));
    }
    if !(lo > 0.0 && lo < hi && hi < nyq) {
        return Err(config_err!(
            "band [{lo}, {hi}] Hz must satisfy 0 < lo < hi < Nyquist ({nyq} Hz)"
        ));
    }
    let fs2 = 2.0 * fs;
    let warp = |f: f64| fs2 * (PI * f / fs).tan();
    let (w1, w2) = (warp(lo), warp(hi));
    let bw = w2 - w1;
    let w0 = (w1 * w2).sqrt();

    let mut poles = Vec::with_capacity(2 * order);
    for k in 0..order {
        let theta = PI * (2 * k + order + 1) as f64 / (2 * order) as f64;
        let p = Complex64::from_polar(1.0, theta) * (bw / 2.0);
        let root = (p * p - w0 * w0).sqrt();
        poles.push(p + root);
        poles.push(p - root);
    }
    let digital: Vec<Complex64> = poles.iter().map(|&p| (fs2 + p) / (fs2 - p)).collect();

    // Analog zeros at s = 0 land on z = 1, those at infinity on z = -1.
    let is_real = |p: &Complex64| p.im.abs() <= 1e-12 * p.norm().max(1.0);
    let mut upper: Vec<Complex64> = digital.iter().copied().filter(|p| !is_real(p) && p.im > 0.0).collect();
    let mut real: Vec<Complex64> = digital.iter().copied().filter(is_real).collect();
    upper.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
    real.sort_by(|a, b| b.re.total_cmp(&a.re));
    let mut sos: Vec<Sos> = upper
        .iter()
        .map(|p| [1.0, 0.0, -1.0, 1.0, -2.0 * p.re, p.norm_sqr()])
        .collect();
    for pair in real.chunks(2) {
        let (a1, a2) = match pair {
            [p, q] => (-(p.re + q.re), p.re * q.re),
            [p] => (-p.re, 0.0),
            _ => unreachable!(),
        };
        sos.push([1.0, 0.0, -1.0, 1.0, a1, a2]);
    }

    let fc = fs / PI * (w0 / fs2).atan();
    let g = sos_response(&sos, fc, fs).norm();
    for v in &mut sos[0][..3] {
        *v /= g;
    }
    Ok(sos)
}

/// RBJ notch biquad at `f0` with quality factor `q`.
pub fn notch(f0: f64, q: f64, fs: f64) -> Result<Sos> {
    if !(f0 > 0.0 && f0 < fs / 2.0) {
        return Err(config_err!("notch frequency {f0} Hz must lie in (0, {}) Hz", fs / 2.0));
    }
    if !(q > 0.0 && q.is_finite()) {
        return Err(config_err!("notch quality factor must be positive, got {q}"));
    }
    let w0 = 2.0 * PI * f0 / fs;
    let alpha = w0.sin() / (2.0 * q);
    let c = w0.cos();
    let a0 = 1.0 + alpha;
    Ok([1.0 / a0, -2.0 * c / a0, 1.0 / a0, 1.0, -2.0 * c / a0, (1.0 - alpha) / a0])
}

/// Complex frequency response of the cascade at `f` Hz.
pub fn sos_response(sos: &[Sos], f: f64, fs: f64) -> Complex64 {
    let z1 = Complex64::from_polar(1.0, -2.0 * PI * f / fs);
    let z2 = z1 * z1;
    sos.iter().fold(Complex64::new(1.0, 0.0), |acc, s| {
        acc * (s[0] + s[1] * z1 + s[2] * z2) / (s[3] + s[4] * z1 + s[5] * z2)
    })
}

/// Transposed direct-form II pass over `x` in place; `zi` is updated.
fn biquad(s: &Sos, x: &mut [f64], zi: &mut [f64; 2]) {
    let [b0, b1, b2, _, a1, a2] = *s;
    let [mut z1, mut z2] = *zi;
    for v in x.iter_mut() {
        let y = b0 * *v + z1;
        z1 = b1 * *v - a1 * y + z2;
        z2 = b2 * *v - a2 * y;
        *v = y;
    }
    *zi = [z1, z2];
}

/// Per-section state for a unit-step steady state of the cascade.
fn sos_zi(sos: &[Sos]) -> Vec<[f64; 2]> {
    let mut scale = 1.0;
    sos.iter()
        .map(|s| {
            let [b0, b1, b2, _, a1, a2] = *s;
            let g = (b0 + b1 + b2) / (1.0 + a1 + a2);
            let z2 = b2 - a2 * g;
            let zi = [scale * (b1 - a1 * g + z2), scale * z2];
            scale *= g;
            zi
        })
        .collect()
}

fn sos_pass(sos: &[Sos], x: &mut [f64], zi: &[[f64; 2]]) {
    let x0 = x[0];
    for (s, z) in sos.iter().zip(zi) {
        let mut state = [z[0] * x0, z[1] * x0];
        biquad(s, x, &mut state);
    }
}

/// Samples needed for the slowest pole to decay by 1e-3.
fn settle_len(sos: &[Sos]) -> usize {
    let r = sos
        .iter()
        .map(|s| {
            let disc = Complex64::new(s[4] * s[4] - 4.0 * s[5], 0.0).sqrt();
            let p1 = (-s[4] + disc) / 2.0;
            let p2 = (-s[4] - disc) / 2.0;
            p1.norm().max(p2.norm())
        })
        .fold(0.0f64, f64::max);
    if r <= 0.0 || r >= 1.0 {
        0
    } else {
        ((1e-3f64).ln() / r.ln()).ceil() as usize
    }
}

/// Forward-backward filtering with odd-extension padding.
pub fn sosfiltfilt(sos: &[Sos], x: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n < 2 || sos.is_empty() {
        return x.to_vec();
    }
    let pad = (3 * (2 * sos.len() + 1)).max(settle_len(sos)).min(n - 1);
    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
    ext.extend_from_slice(x);
    ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));

    let zi = sos_zi(sos);
    sos_pass(sos, &mut ext, &zi);
    ext.reverse();
    sos_pass(sos, &mut ext, &zi);
    ext.reverse();
    ext[pad..pad + n].to_vec()
}
