//! Run configuration and the split → fit → evaluate sequence.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::dataset::EpochedDataset;
use crate::error::{config_err, data_err, Result};
use crate::evaluation::{compute_metrics, RunReport};
use crate::networks::{Ablation, DiffEModel, ModelConfig};
use crate::signal::PipelineConfig;
use crate::synth::SynthSpec;
use crate::training::{fit, split_dataset, FitOptions, Split, TrainConfig, TrainHistory};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub test_fraction: f64,
    pub split_seed: u64,
    pub batch_size: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            test_fraction: 0.2,
            split_seed: 0,
            batch_size: 64,
        }
    }
}

/// Every knob of a run, grouped by stage.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: SynthSpec,
    pub pipeline: PipelineConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| config_err!("config: {e}"))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Applies `section.key=value`; the value is parsed as JSON and falls
    /// back to a plain string.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (path, raw) = assignment
            .split_once('=')
            .ok_or_else(|| config_err!("override '{assignment}' is not of the form key=value"))?;
        let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        let mut tree = serde_json::to_value(&*self)?;
        let mut node = &mut tree;
        for key in path.split('.') {
            node = node
                .as_object_mut()
                .and_then(|m| m.get_mut(key))
                .ok_or_else(|| config_err!("unknown config key '{path}'"))?;
        }
        *node = value;
        *self = serde_json::from_value(tree).map_err(|e| config_err!("override '{assignment}': {e}"))?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.data.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        if !(self.eval.test_fraction > 0.0 && self.eval.test_fraction < 1.0) {
            return Err(config_err!(
                "eval.test_fraction must lie in (0, 1), got {}",
                self.eval.test_fraction
            ));
        }
        if self.eval.batch_size == 0 {
            return Err(config_err!("eval.batch_size must be positive"));
        }
        Ok(())
    }
}

/// Outcome of one training run.
pub struct TrainedRun {
    pub model: DiffEModel,
    pub history: TrainHistory,
    pub report: RunReport,
    pub split: Split,
}

/// Scores `test` and wraps the metrics with run metadata.
pub fn evaluate(model: &DiffEModel, test: &EpochedDataset, cfg: &RunConfig, split: &Split) -> Result<RunReport> {
    if test.is_empty() {
        return Err(data_err!("test set is empty"));
    }
    let scores = model.predict_scores(&test.epochs, cfg.eval.batch_size)?;
    let m = compute_metrics(&scores, &test.labels)?;
    Ok(RunReport {
        arm: model.arm(),
        seed: cfg.train.seed,
        data_seed: cfg.data.seed,
        split_seed: cfg.eval.split_seed,
        split_fingerprint: split.fingerprint(),
        n_test: test.len(),
        accuracy_pct: m.accuracy_pct,
        auc_pct: m.auc_pct,
        confusion: m.confusion,
        per_class_accuracy_pct: m.per_class_accuracy_pct,
        class_names: test.class_names.clone(),
        config: serde_json::to_value(cfg)?,
    })
}

/// Split with the evaluation seed, fit on the training part, score the rest.
pub fn train_and_evaluate(cfg: &RunConfig, data: &EpochedDataset, opts: FitOptions<'_>) -> Result<TrainedRun> {
    cfg.validate()?;
    let (train, test, split) = split_dataset(data, cfg.eval.test_fraction, cfg.eval.split_seed)?;
    let (model, history) = fit(&cfg.model, &cfg.train, &train, Some(&test), opts)?;
    let report = evaluate(&model, &test, cfg, &split)?;
    Ok(TrainedRun {
        model,
        history,
        report,
        split,
    })
}

/// Config for one arm and repetition seed.
pub fn arm_config(base: &RunConfig, arm: Ablation, seed: u64) -> RunConfig {
    let mut cfg = base.clone();
    cfg.train.ablation = arm;
    cfg.train.seed = seed;
    cfg
}
