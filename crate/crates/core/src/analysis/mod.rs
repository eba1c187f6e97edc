//! Metrics and behavioral analysis of trained policies.

mod behavior;
pub mod metrics;
mod report;

pub use behavior::{
    anomalies_in, detect_anomalies, leaf_entropy, low_change_bound, low_value_actions, low_value_flags, path_entropy,
    policy_confidence, Anomaly, ChangeSeries,
};
pub use report::{evaluate, ConfidenceSeries, EvaluationOptions, EvaluationReport, LowValueStep};
