//! Scoring, run reports and ablation tables.

pub mod metrics;
pub mod report;

pub use metrics::{accuracy, argmax_rows, auc_ovr_macro, confusion_matrix};
pub use report::{ablation_report, compute_metrics, AblationRow, AblationTable, Metrics, RunReport};
