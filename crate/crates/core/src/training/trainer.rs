//! Joint optimisation of the denoiser, autoencoder and classifier.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Group, ParamId, Var};
use crate::dataset::EpochedDataset;
use crate::error::{config_err, data_err, Error, Result};
use crate::evaluation::metrics::argmax_rows;
use crate::networks::{checkpoint, Ablation, DecoderInputs, DiffEModel, ModelConfig};
use crate::scheduler::sample_timestep;
use crate::tensor::Tensor;

use super::loss::{one_hot, residual_map};
use super::optim::{cyclic_lr, RmsProp};

/// What the conditioned decoder is asked to reproduce in the full arm.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaeTarget {
    /// `|x0 − x̂|`, the denoiser's residual.
    #[default]
    ResidualMap,
    /// The clean input itself.
    ReconstructX0,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub ablation: Ablation,
    pub epochs: usize,
    pub batch_size: usize,
    /// Weight of the classification term.
    pub alpha: f64,
    pub base_lr: f64,
    pub max_lr: f64,
    /// Steps per half cycle; `None` uses five epochs.
    pub cycle_len: Option<usize>,
    pub rms_decay: f64,
    pub rms_eps: f64,
    pub seed: u64,
    pub cae_target: CaeTarget,
    /// Stop decoder gradients from flowing back into the denoiser.
    pub detach_taps: bool,
    pub eval_batch: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            ablation: Ablation::Full,
            epochs: 500,
            batch_size: 32,
            alpha: 0.1,
            base_lr: 9e-5,
            max_lr: 1.5e-3,
            cycle_len: None,
            rms_decay: 0.99,
            rms_eps: 1e-8,
            seed: 0,
            cae_target: CaeTarget::ResidualMap,
            detach_taps: false,
            eval_batch: 64,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(config_err!("train.epochs must be at least 1"));
        }
        if self.batch_size == 0 || self.eval_batch == 0 {
            return Err(config_err!("train.batch_size and train.eval_batch must be positive"));
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(config_err!("train.alpha must be finite and non-negative, got {}", self.alpha));
        }
        if !(self.base_lr > 0.0 && self.max_lr >= self.base_lr && self.max_lr.is_finite()) {
            return Err(config_err!(
                "learning rates need 0 < base_lr <= max_lr, got {} and {}",
                self.base_lr,
                self.max_lr
            ));
        }
        if self.cycle_len == Some(0) {
            return Err(config_err!("train.cycle_len must be positive"));
        }
        if !(self.rms_decay > 0.0 && self.rms_decay < 1.0) {
            return Err(config_err!("train.rms_decay must lie in (0, 1)"));
        }
        if !(self.rms_eps > 0.0) {
            return Err(config_err!("train.rms_eps must be positive"));
        }
        Ok(())
    }
}

/// Random draws that define one training step.
#[derive(Clone, Debug)]
pub struct StepNoise {
    pub ts: Vec<usize>,
    pub noise: Tensor,
}

impl StepNoise {
    pub fn sample<R: rand::Rng + ?Sized>(rng: &mut R, steps: usize, shape: &[usize]) -> Self {
        let ts = (0..shape[0]).map(|_| sample_timestep(rng, steps)).collect();
        Self {
            ts,
            noise: Tensor::randn(shape, rng),
        }
    }
}

/// Loss nodes of one step. Absent terms are `None` for arms without them.
pub struct StepGraph {
    pub ddpm: Option<Var>,
    pub cae: Option<Var>,
    pub cls: Var,
    pub total: Var,
    pub scores: Var,
    pub x0_hat: Option<Var>,
    pub decoded: Option<Var>,
}

impl StepGraph {
    /// Roots whose gradients drive the update.
    pub fn roots(&self) -> Vec<Var> {
        self.ddpm.into_iter().chain([self.total]).collect()
    }
}

/// Builds the forward pass of one step on already-scaled inputs.
pub fn build_step(
    model: &DiffEModel,
    cfg: &TrainConfig,
    g: &mut Graph,
    x0: &Tensor,
    labels: &[usize],
    noise: Option<&StepNoise>,
) -> Result<StepGraph> {
    let x0v = g.tape.constant(x0.clone())?;
    let target = g.tape.constant(one_hot(labels, model.n_classes())?)?;
    let len = x0.shape()[2];
    let enc = model.encoder().forward(g, x0v)?;

    let (ddpm, cae, x0_hat, decoded) = match model.arm() {
        Ablation::Full => {
            let denoiser = model.denoiser().expect("full arm has a denoiser");
            let decoder = model.decoder().expect("full arm has a decoder");
            let noise = noise.ok_or_else(|| config_err!("the full arm needs diffusion noise"))?;
            let x_t = model.schedule().forward_sample_batch(x0, &noise.ts, &noise.noise)?;
            let x_t = g.tape.constant(x_t)?;
            let out = denoiser.forward(g, x_t, &noise.ts)?;
            let ddpm = g.tape.mean_abs_error(out.x0_hat, x0v)?;
            let (taps, hat_in) = if cfg.detach_taps {
                let taps: Vec<Var> = out.taps.iter().map(|&t| g.tape.detach(t)).collect();
                (taps, g.tape.detach(out.x0_hat))
            } else {
                (out.taps.clone(), out.x0_hat)
            };
            let decoded = decoder.forward(
                g,
                DecoderInputs {
                    enc_features: &enc.features,
                    taps: &taps,
                    skip: Some((x0v, hat_in)),
                    out_len: len,
                },
            )?;
            let target = match cfg.cae_target {
                CaeTarget::ResidualMap => {
                    let r = residual_map(x0, g.tape.value(out.x0_hat))?;
                    g.tape.constant(r)?
                }
                CaeTarget::ReconstructX0 => x0v,
            };
            let cae = g.tape.mean_abs_error(decoded, target)?;
            (Some(ddpm), Some(cae), Some(out.x0_hat), Some(decoded))
        }
        Ablation::NoDdpm => {
            let decoder = model.decoder().expect("no_ddpm arm has a decoder");
            let decoded = decoder.forward(
                g,
                DecoderInputs {
                    enc_features: &enc.features,
                    taps: &[],
                    skip: None,
                    out_len: len,
                },
            )?;
            let cae = g.tape.mean_abs_error(decoded, x0v)?;
            (None, Some(cae), None, Some(decoded))
        }
        Ablation::NoDdpmNoDecoder => (None, None, None, None),
    };

    let scores = model.classifier().forward(g, enc.z)?;
    let cls = g.tape.mean_squared_error(scores, target)?;
    let weighted = g.tape.scale(cls, cfg.alpha)?;
    let total = match cae {
        Some(c) => g.tape.add(c, weighted)?,
        None => weighted,
    };
    Ok(StepGraph {
        ddpm,
        cae,
        cls,
        total,
        scores,
        x0_hat,
        decoded,
    })
}

/// Scalars reported for one step.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepLosses {
    pub step: usize,
    pub ddpm: f64,
    pub cae: f64,
    pub cls: f64,
    pub total: f64,
    pub lr: f64,
    pub correct: usize,
    pub batch: usize,
}

pub struct Trainer {
    cfg: TrainConfig,
    model: DiffEModel,
    opt_denoiser: RmsProp,
    opt_rest: RmsProp,
    denoiser_ids: Vec<ParamId>,
    rest_ids: Vec<ParamId>,
    rng: ChaCha8Rng,
    step: usize,
    cycle_len: usize,
}

impl Trainer {
    /// `steps_per_epoch` only sets the default cycle length.
    pub fn new(model: DiffEModel, cfg: TrainConfig, steps_per_epoch: usize) -> Result<Self> {
        cfg.validate()?;
        if model.arm() != cfg.ablation {
            return Err(config_err!(
                "model built for arm {} but training config asks for {}",
                model.arm().name(),
                cfg.ablation.name()
            ));
        }
        let denoiser_ids = model.ids_in(&[Group::Denoiser]);
        let rest_ids = model.ids_in(&[Group::Encoder, Group::Decoder, Group::Classifier]);
        let opt_denoiser = RmsProp::new(model.store(), denoiser_ids.clone(), cfg.rms_decay, cfg.rms_eps);
        let opt_rest = RmsProp::new(model.store(), rest_ids.clone(), cfg.rms_decay, cfg.rms_eps);
        let cycle_len = cfg.cycle_len.unwrap_or(5 * steps_per_epoch.max(1));
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7261_696e),
            cfg,
            model,
            opt_denoiser,
            opt_rest,
            denoiser_ids,
            rest_ids,
            step: 0,
            cycle_len,
        })
    }

    pub fn model(&self) -> &DiffEModel {
        &self.model
    }

    pub fn into_model(self) -> DiffEModel {
        self.model
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    pub fn current_lr(&self) -> f64 {
        cyclic_lr(self.step, self.cfg.base_lr, self.cfg.max_lr, self.cycle_len)
    }

    /// One optimisation step on a raw (unscaled) batch `[B, C, L]`.
    pub fn step(&mut self, x_raw: &Tensor, labels: &[usize]) -> Result<StepLosses> {
        let scale = self.model.input_scale;
        let x0 = x_raw.map(|v| v * scale);
        let noise = self
            .model
            .arm()
            .has_denoiser()
            .then(|| StepNoise::sample(&mut self.rng, self.model.schedule().steps(), x0.shape()));
        let lr = self.current_lr();

        let (losses, g_den, g_rest) = {
            let mut g = Graph::new(self.model.store(), true);
            let sg = build_step(&self.model, &self.cfg, &mut g, &x0, labels, noise.as_ref())?;
            let grads = g.tape.backward_from(&sg.roots())?;
            let value = |v: Option<Var>| v.map(|v| g.tape.value(v).item()).unwrap_or(0.0);
            let scores = g.tape.value(sg.scores);
            let correct = argmax_rows(scores)?
                .iter()
                .zip(labels)
                .filter(|(p, l)| p == l)
                .count();
            let losses = StepLosses {
                step: self.step,
                ddpm: value(sg.ddpm),
                cae: value(sg.cae),
                cls: g.tape.value(sg.cls).item(),
                total: g.tape.value(sg.total).item(),
                lr,
                correct,
                batch: labels.len(),
            };
            let collect = |ids: &[ParamId]| -> Vec<Option<Vec<f64>>> {
                ids.iter()
                    .map(|&id| g.param_grad(&grads, id).map(<[f64]>::to_vec))
                    .collect()
            };
            (losses, collect(&self.denoiser_ids), collect(&self.rest_ids))
        };
        for v in [losses.ddpm, losses.cae, losses.cls, losses.total] {
            if !v.is_finite() {
                return Err(Error::Numeric(format!("non-finite loss at step {}", self.step)));
            }
        }
        self.opt_denoiser.step(self.model.store_mut(), &g_den, lr)?;
        self.opt_rest.step(self.model.store_mut(), &g_rest, lr)?;
        self.step += 1;
        Ok(losses)
    }
}

/// Per-epoch summary. Losses are sample-weighted means over the epoch;
/// accuracies are fractions in [0, 1].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub ddpm_loss: f64,
    pub cae_loss: f64,
    pub cls_loss: f64,
    pub total_loss: f64,
    pub lr: f64,
    pub train_acc: f64,
    pub test_acc: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
}

impl TrainHistory {
    pub const CSV_HEADER: &'static str = "epoch,ddpm_loss,cae_loss,cls_loss,total_loss,lr,train_acc,test_acc";

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for r in &self.records {
            let test = r.test_acc.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                r.epoch, r.ddpm_loss, r.cae_loss, r.cls_loss, r.total_loss, r.lr, r.train_acc, test
            );
        }
        s
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }
}

#[derive(Default)]
pub struct FitOptions<'a> {
    /// Saved after every epoch.
    pub checkpoint: Option<&'a Path>,
    pub on_step: Option<&'a mut dyn FnMut(&StepLosses)>,
    pub on_epoch: Option<&'a mut dyn FnMut(&EpochRecord)>,
}

/// `1 / rms` of the training data, or 1 for an all-zero set.
pub fn input_scale_for(x: &Tensor) -> f64 {
    let n = x.numel().max(1) as f64;
    let rms = (x.data().iter().map(|v| v * v).sum::<f64>() / n).sqrt();
    if rms > 0.0 && rms.is_finite() {
        1.0 / rms
    } else {
        1.0
    }
}

/// Trains a freshly initialised model of the configured arm.
pub fn fit(
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    train: &EpochedDataset,
    test: Option<&EpochedDataset>,
    opts: FitOptions<'_>,
) -> Result<(DiffEModel, TrainHistory)> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(data_err!("training set is empty"));
    }
    let mut model = DiffEModel::new(model_cfg, cfg.ablation, train.channels(), train.n_classes(), cfg.seed)?;
    model.input_scale = input_scale_for(&train.epochs);
    fit_model(model, cfg, train, test, opts)
}

/// Continues training an existing model.
pub fn fit_model(
    model: DiffEModel,
    cfg: &TrainConfig,
    train: &EpochedDataset,
    test: Option<&EpochedDataset>,
    mut opts: FitOptions<'_>,
) -> Result<(DiffEModel, TrainHistory)> {
    if train.channels() != model.in_channels() || train.n_classes() != model.n_classes() {
        return Err(data_err!(
            "data has {} channels / {} classes, model expects {} / {}",
            train.channels(),
            train.n_classes(),
            model.in_channels(),
            model.n_classes()
        ));
    }
    let n = train.len();
    let steps_per_epoch = n.div_ceil(cfg.batch_size);
    let mut trainer = Trainer::new(model, cfg.clone(), steps_per_epoch)?;
    let mut order: Vec<usize> = (0..n).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7368_7566);
    let mut history = TrainHistory::default();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut sums = [0.0f64; 4];
        let mut correct = 0;
        let mut lr = trainer.current_lr();
        for chunk in order.chunks(cfg.batch_size) {
            let xb = train.epochs.select_rows(chunk);
            let yb: Vec<usize> = chunk.iter().map(|&i| train.labels[i]).collect();
            let s = trainer.step(&xb, &yb)?;
            let w = s.batch as f64;
            for (acc, v) in sums.iter_mut().zip([s.ddpm, s.cae, s.cls, s.total]) {
                *acc += w * v;
            }
            correct += s.correct;
            lr = s.lr;
            if let Some(cb) = opts.on_step.as_mut() {
                cb(&s);
            }
        }
        let test_acc = match test {
            Some(t) if !t.is_empty() => {
                let scores = trainer.model().predict_scores(&t.epochs, cfg.eval_batch)?;
                let pred = argmax_rows(&scores)?;
                let hits = pred.iter().zip(&t.labels).filter(|(p, l)| p == l).count();
                Some(hits as f64 / t.len() as f64)
            }
            _ => None,
        };
        let nf = n as f64;
        let record = EpochRecord {
            epoch,
            ddpm_loss: sums[0] / nf,
            cae_loss: sums[1] / nf,
            cls_loss: sums[2] / nf,
            total_loss: sums[3] / nf,
            lr,
            train_acc: correct as f64 / nf,
            test_acc,
        };
        log::info!(
            "epoch {epoch}/{}: total {:.5} ddpm {:.5} cae {:.5} cls {:.5} train_acc {:.3}{}",
            cfg.epochs,
            record.total_loss,
            record.ddpm_loss,
            record.cae_loss,
            record.cls_loss,
            record.train_acc,
            record.test_acc.map(|a| format!(" test_acc {a:.3}")).unwrap_or_default()
        );
        if let Some(cb) = opts.on_epoch.as_mut() {
            cb(&record);
        }
        history.records.push(record);
        if let Some(path) = opts.checkpoint {
            checkpoint::save(trainer.model(), path)?;
        }
    }
    Ok((trainer.into_model(), history))
}
