use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};
use crate::networks::Ablation;
use crate::tensor::Tensor;

use super::metrics::{accuracy, auc_ovr_macro, confusion_matrix};

/// Held-out metrics of one trained model, with what produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub arm: Ablation,
    pub seed: u64,
    pub data_seed: u64,
    pub split_seed: u64,
    pub split_fingerprint: String,
    pub n_test: usize,
    pub accuracy_pct: f64,
    pub auc_pct: f64,
    /// `confusion[true][pred]`.
    pub confusion: Vec<Vec<usize>>,
    pub per_class_accuracy_pct: Vec<f64>,
    pub class_names: Vec<String>,
    pub config: serde_json::Value,
}

/// Metric part of a report.
#[derive(Clone, Debug, PartialEq)]
pub struct Metrics {
    pub accuracy_pct: f64,
    pub auc_pct: f64,
    pub confusion: Vec<Vec<usize>>,
    pub per_class_accuracy_pct: Vec<f64>,
}

pub fn compute_metrics(scores: &Tensor, labels: &[usize]) -> Result<Metrics> {
    let confusion = confusion_matrix(scores, labels)?;
    let per_class_accuracy_pct = confusion
        .iter()
        .enumerate()
        .map(|(c, row)| {
            let n: usize = row.iter().sum();
            if n == 0 {
                0.0
            } else {
                100.0 * row[c] as f64 / n as f64
            }
        })
        .collect();
    Ok(Metrics {
        accuracy_pct: accuracy(scores, labels)?,
        auc_pct: auc_ovr_macro(scores, labels)?,
        confusion,
        per_class_accuracy_pct,
    })
}

impl RunReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AblationRow {
    pub arm: Ablation,
    pub label: &'static str,
    pub runs: usize,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub auc_mean: f64,
    pub auc_std: f64,
}

/// Mean ± sample standard deviation per arm, across repetition seeds.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Rows follow the fixed arm order; arms without runs are omitted.
pub fn ablation_report(runs: &[RunReport]) -> Result<AblationTable> {
    let first = runs
        .first()
        .ok_or_else(|| config_err!("ablation report needs at least one run"))?;
    for r in runs {
        if r.split_fingerprint != first.split_fingerprint || r.data_seed != first.data_seed {
            return Err(config_err!(
                "runs use different data or splits ({} / seed {} vs {} / seed {})",
                r.split_fingerprint,
                r.data_seed,
                first.split_fingerprint,
                first.data_seed
            ));
        }
    }
    let rows = Ablation::ALL
        .into_iter()
        .filter_map(|arm| {
            let sel: Vec<&RunReport> = runs.iter().filter(|r| r.arm == arm).collect();
            if sel.is_empty() {
                return None;
            }
            let acc: Vec<f64> = sel.iter().map(|r| r.accuracy_pct).collect();
            let auc: Vec<f64> = sel.iter().map(|r| r.auc_pct).collect();
            let (accuracy_mean, accuracy_std) = mean_std(&acc);
            let (auc_mean, auc_std) = mean_std(&auc);
            Some(AblationRow {
                arm,
                label: arm.label(),
                runs: sel.len(),
                accuracy_mean,
                accuracy_std,
                auc_mean,
                auc_std,
            })
        })
        .collect();
    Ok(AblationTable { rows })
}

impl AblationTable {
    pub fn row(&self, arm: Ablation) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.arm == arm)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("arm,label,runs,accuracy_mean,accuracy_std,auc_mean,auc_std\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                r.arm.name(),
                r.label,
                r.runs,
                r.accuracy_mean,
                r.accuracy_std,
                r.auc_mean,
                r.auc_std
            );
        }
        s
    }

    /// Aligned plain-text table; the spread is across repetition seeds.
    pub fn to_text(&self) -> String {
        let mut s = format!("{:<20} {:>4}  {:>16}  {:>16}\n", "arm", "runs", "accuracy (%)", "AUC (%)");
        for r in &self.rows {
            let acc = format!("{:.2} ± {:.2}", r.accuracy_mean, r.accuracy_std);
            let auc = format!("{:.2} ± {:.2}", r.auc_mean, r.auc_std);
            let _ = writeln!(s, "{:<20} {:>4}  {:>16}  {:>16}", r.label, r.runs, acc, auc);
        }
        s
    }
}
