//! Variance schedule and forward corruption process.
//!
//! Timesteps are 1-based: `t ∈ {1, …, T}` and `alpha_bar(t) = Π_{s≤t} (1 − β_s)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, dim_err, Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    #[default]
    Linear,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

impl NoiseSchedule {
    /// Betas linearly spaced from `beta_start` to `beta_end` inclusive.
    pub fn build(steps: usize, beta_start: f64, beta_end: f64, kind: ScheduleKind) -> Result<Self> {
        if steps == 0 {
            return Err(config_err!("diffusion steps must be at least 1"));
        }
        if !(beta_start > 0.0 && beta_start < 1.0 && beta_end > 0.0 && beta_end < 1.0) {
            return Err(config_err!(
                "betas must lie in (0, 1), got start {beta_start}, end {beta_end}"
            ));
        }
        if beta_start > beta_end {
            return Err(config_err!(
                "beta_start {beta_start} exceeds beta_end {beta_end}"
            ));
        }
        let betas: Vec<f64> = match kind {
            ScheduleKind::Linear => (0..steps)
                .map(|i| {
                    if steps == 1 {
                        beta_start
                    } else {
                        beta_start + (beta_end - beta_start) * i as f64 / (steps - 1) as f64
                    }
                })
                .collect(),
        };
        let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let alpha_bars = alphas
            .iter()
            .scan(1.0, |acc, a| {
                *acc *= a;
                Some(*acc)
            })
            .collect();
        Ok(Self {
            betas,
            alphas,
            alpha_bars,
        })
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    fn check_t(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps() {
            return Err(Error::Index(format!(
                "timestep {t} outside [1, {}]",
                self.steps()
            )));
        }
        Ok(())
    }

    pub fn beta(&self, t: usize) -> Result<f64> {
        self.check_t(t)?;
        Ok(self.betas[t - 1])
    }

    pub fn alpha_bar(&self, t: usize) -> Result<f64> {
        self.check_t(t)?;
        Ok(self.alpha_bars[t - 1])
    }

    /// Closed-form sample of `q(x_t | x_0)`: `√ᾱ_t·x0 + √(1−ᾱ_t)·noise`.
    pub fn forward_sample(&self, x0: &Tensor, t: usize, noise: &Tensor) -> Result<Tensor> {
        let ab = self.alpha_bar(t)?;
        let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
        x0.zip_map(noise, |x, n| a * x + b * n)
            .map_err(|_| dim_err!("noise shape {:?} differs from x0 shape {:?}", noise.shape(), x0.shape()))
    }

    /// Per-sample closed-form corruption of a batch; `ts[i]` applies to row `i`.
    pub fn forward_sample_batch(&self, x0: &Tensor, ts: &[usize], noise: &Tensor) -> Result<Tensor> {
        if noise.shape() != x0.shape() {
            return Err(dim_err!(
                "noise shape {:?} differs from x0 shape {:?}",
                noise.shape(),
                x0.shape()
            ));
        }
        let batch = x0.shape()[0];
        if ts.len() != batch {
            return Err(dim_err!("{} timesteps for a batch of {batch}", ts.len()));
        }
        let row = x0.numel() / batch.max(1);
        let mut out = Vec::with_capacity(x0.numel());
        for (i, &t) in ts.iter().enumerate() {
            let ab = self.alpha_bar(t)?;
            let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
            let xs = &x0.data()[i * row..(i + 1) * row];
            let ns = &noise.data()[i * row..(i + 1) * row];
            out.extend(xs.iter().zip(ns).map(|(x, n)| a * x + b * n));
        }
        Tensor::new(x0.shape().to_vec(), out)
    }

    /// One Markov kernel step `q(x_t | x_{t−1})`: `√(1−β_t)·x + √β_t·noise`.
    pub fn forward_step(&self, x_prev: &Tensor, t: usize, noise: &Tensor) -> Result<Tensor> {
        let beta = self.beta(t)?;
        let (a, b) = ((1.0 - beta).sqrt(), beta.sqrt());
        x_prev
            .zip_map(noise, |x, n| a * x + b * n)
            .map_err(|_| dim_err!("noise shape {:?} differs from input shape {:?}", noise.shape(), x_prev.shape()))
    }
}

/// Uniform draw from `{1, …, steps}`.
pub fn sample_timestep<R: Rng + ?Sized>(rng: &mut R, steps: usize) -> usize {
    rng.gen_range(1..=steps.max(1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_beta_products() {
        let s = NoiseSchedule::build(3, 0.02, 0.02, ScheduleKind::Linear).unwrap();
        let expected = [0.98, 0.98 * 0.98, 0.98 * 0.98 * 0.98];
        for (a, e) in s.alpha_bars().iter().zip(expected) {
            assert!((a - e).abs() < 1e-12);
        }
        assert!((s.alpha_bars()[2] - 0.941192).abs() < 1e-12);
    }

    #[test]
    fn tiny_beta_keeps_signal() {
        let s = NoiseSchedule::build(10, 1e-12, 1e-12, ScheduleKind::Linear).unwrap();
        assert!(s.alpha_bars().iter().all(|a| (a - 1.0).abs() < 1e-10));
    }

    #[test]
    fn single_step() {
        let s = NoiseSchedule::build(1, 0.5, 0.5, ScheduleKind::Linear).unwrap();
        assert_eq!(s.alpha_bars(), &[0.5]);
    }

    #[test]
    fn linear_endpoints_inclusive() {
        let s = NoiseSchedule::build(1000, 1e-4, 0.02, ScheduleKind::Linear).unwrap();
        assert_eq!(s.betas()[0], 1e-4);
        assert!((s.betas()[999] - 0.02).abs() < 1e-15);
        assert!(s.alpha_bars().windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn invalid_betas_rejected() {
        for (a, b) in [(0.0, 0.1), (0.1, 1.0), (0.2, 0.1), (-0.1, 0.5)] {
            assert!(matches!(
                NoiseSchedule::build(5, a, b, ScheduleKind::Linear),
                Err(Error::Config(_))
            ));
        }
        assert!(NoiseSchedule::build(0, 0.1, 0.1, ScheduleKind::Linear).is_err());
    }

    #[test]
    fn forward_sample_examples() {
        let x0 = Tensor::from_vec(vec![1.0, -2.0, 3.0]);
        let noise = Tensor::from_vec(vec![0.5, 0.1, -0.7]);
        let s = NoiseSchedule::build(4, 1e-12, 1e-12, ScheduleKind::Linear).unwrap();
        let out = s.forward_sample(&x0, 4, &noise).unwrap();
        for (o, x) in out.data().iter().zip(x0.data()) {
            assert!((o - x).abs() < 1e-5);
        }

        let s = NoiseSchedule::build(1, 0.36, 0.36, ScheduleKind::Linear).unwrap();
        let zeros = Tensor::zeros(&[3]);
        let out = s.forward_sample(&zeros, 1, &noise).unwrap();
        for (o, n) in out.data().iter().zip(noise.data()) {
            assert!((o - 0.6 * n).abs() < 1e-12);
        }

        let s = NoiseSchedule::build(200, 0.5, 0.5, ScheduleKind::Linear).unwrap();
        let out = s.forward_sample(&x0, 200, &noise).unwrap();
        let bound = s.alpha_bar(200).unwrap().sqrt() * x0.max_abs();
        for (o, n) in out.data().iter().zip(noise.data()) {
            assert!((o - n).abs() <= bound + 1e-15);
        }
    }

    #[test]
    fn forward_sample_errors() {
        let s = NoiseSchedule::build(5, 0.1, 0.2, ScheduleKind::Linear).unwrap();
        let x = Tensor::zeros(&[3]);
        assert!(matches!(s.forward_sample(&x, 0, &x), Err(Error::Index(_))));
        assert!(matches!(s.forward_sample(&x, 6, &x), Err(Error::Index(_))));
        let n = Tensor::zeros(&[4]);
        assert!(matches!(s.forward_sample(&x, 1, &n), Err(Error::Dimension(_))));
    }

    #[test]
    fn timestep_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!((0..100).all(|_| sample_timestep(&mut rng, 1) == 1));

        let mut counts = [0usize; 10];
        let draws = 100_000;
        for _ in 0..draws {
            counts[sample_timestep(&mut rng, 10) - 1] += 1;
        }
        for c in counts {
            let f = c as f64 / draws as f64;
            assert!((0.09..=0.11).contains(&f), "frequency {f}");
        }

        let a: Vec<usize> = {
            let mut r = ChaCha8Rng::seed_from_u64(42);
            (0..50).map(|_| sample_timestep(&mut r, 1000)).collect()
        };
        let b: Vec<usize> = {
            let mut r = ChaCha8Rng::seed_from_u64(42);
            (0..50).map(|_| sample_timestep(&mut r, 1000)).collect()
        };
        assert_eq!(a, b);
    }
}
