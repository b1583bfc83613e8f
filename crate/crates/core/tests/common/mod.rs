#![allow(dead_code)]

use std::f64::consts::PI;

use diffe::EpochedDataset;

/// Single-bin DFT amplitude of `x` at `freq`.
pub fn dft_amplitude(x: &[f64], freq: f64, fs: f64) -> f64 {
    let (mut re, mut im) = (0.0, 0.0);
    for (i, v) in x.iter().enumerate() {
        let ph = 2.0 * PI * freq * i as f64 / fs;
        re += v * ph.cos();
        im -= v * ph.sin();
    }
    2.0 * (re * re + im * im).sqrt() / x.len() as f64
}

/// Per-channel log power near each of `freqs`, averaged over +-2 Hz.
pub fn bandpower_features(ds: &EpochedDataset, freqs: &[f64]) -> Vec<Vec<f64>> {
    let (n, c, l) = ds.epochs.dims3().unwrap();
    let d = ds.epochs.data();
    (0..n)
        .map(|e| {
            let mut f = Vec::new();
            for ch in 0..c {
                let x = &d[(e * c + ch) * l..(e * c + ch + 1) * l];
                for &fr in freqs {
                    let p: f64 = [-2.0, -1.0, 0.0, 1.0, 2.0]
                        .iter()
                        .map(|o| dft_amplitude(x, fr + o, ds.fs).powi(2))
                        .sum();
                    f.push((p + 1e-12).ln());
                }
            }
            f
        })
        .collect()
}

/// Multinomial logistic regression fitted by full-batch gradient descent on
/// standardised features. Returns predicted labels for `test`.
pub fn logistic_regression(train: &[Vec<f64>], labels: &[usize], k: usize, test: &[Vec<f64>]) -> Vec<usize> {
    let d = train[0].len();
    let n = train.len() as f64;
    let mean: Vec<f64> = (0..d).map(|j| train.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let sd: Vec<f64> = (0..d)
        .map(|j| (train.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n).sqrt().max(1e-12))
        .collect();
    let norm = |r: &Vec<f64>| -> Vec<f64> { (0..d).map(|j| (r[j] - mean[j]) / sd[j]).collect() };
    let xs: Vec<Vec<f64>> = train.iter().map(norm).collect();
    let mut w = vec![vec![0.0; d + 1]; k];
    for _ in 0..500 {
        let mut grad = vec![vec![0.0; d + 1]; k];
        for (x, &y) in xs.iter().zip(labels) {
            let z: Vec<f64> = w.iter().map(|wk| wk[d] + (0..d).map(|j| wk[j] * x[j]).sum::<f64>()).collect();
            let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
            let s: f64 = e.iter().sum();
            for c in 0..k {
                let g = e[c] / s - if c == y { 1.0 } else { 0.0 };
                for j in 0..d {
                    grad[c][j] += g * x[j];
                }
                grad[c][d] += g;
            }
        }
        for c in 0..k {
            for j in 0..=d {
                w[c][j] -= 0.5 * grad[c][j] / n;
            }
        }
    }
    test.iter()
        .map(|r| {
            let x = norm(r);
            let z: Vec<f64> = w.iter().map(|wk| wk[d] + (0..d).map(|j| wk[j] * x[j]).sum::<f64>()).collect();
            let mut best = 0;
            for c in 1..k {
                if z[c] > z[best] {
                    best = c;
                }
            }
            best
        })
        .collect()
}

/// One-vs-rest macro AUC (percent) by counting all positive/negative pairs,
/// with ties worth one half.
pub fn pairwise_auc(scores: &[Vec<f64>], labels: &[usize], k: usize) -> f64 {
    let mut total = 0.0;
    for c in 0..k {
        let pos: Vec<f64> = scores.iter().zip(labels).filter(|(_, &y)| y == c).map(|(s, _)| s[c]).collect();
        let neg: Vec<f64> = scores.iter().zip(labels).filter(|(_, &y)| y != c).map(|(s, _)| s[c]).collect();
        let mut wins = 0.0;
        for p in &pos {
            for q in &neg {
                if p > q {
                    wins += 1.0;
                } else if p == q {
                    wins += 0.5;
                }
            }
        }
        total += wins / (pos.len() * neg.len()) as f64;
    }
    100.0 * total / k as f64
}
