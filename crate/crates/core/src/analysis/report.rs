use serde::{Deserialize, Serialize};

use super::behavior::{anomalies_from, leaf_entropy, low_value_from, Anomaly};
use super::metrics::{accuracy, auprc, auroc, auroc_ovr, brier};
use crate::data::Trajectory;
use crate::error::{data, structural, Result};
use crate::math::argmax;
use crate::tree::{Mode, TreePolicy};

const REL_ERROR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluationOptions {
    pub anomaly_threshold: f64,
    /// Actions considered costly for the low-value analysis.
    pub active_actions: Vec<usize>,
}

impl Default for EvaluationOptions {
    fn default() -> Self {
        Self { anomaly_threshold: 0.9, active_actions: vec![1] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceSeries {
    pub trajectory: String,
    /// π(·|h_t, z_t) for each step.
    pub probs: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowValueStep {
    pub trajectory: String,
    pub t: usize,
    pub action: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub n_trajectories: usize,
    pub n_steps: usize,
    /// Hard-mode action agreement.
    pub accuracy: f64,
    /// Absent when the test set holds a single action class. One-vs-rest
    /// macro average for more than two actions.
    pub auroc: Option<f64>,
    /// Binary action spaces only.
    pub auprc: Option<f64>,
    pub brier: Option<f64>,
    /// Mean ‖z_{t+1} − z̃_{t+1}‖ / ‖z_{t+1}‖ in normalized space.
    pub evolution_relative_error: Option<f64>,
    pub mean_path_entropy: f64,
    pub leaf_entropy: f64,
    pub anomalies: Vec<Anomaly>,
    pub low_value: Vec<LowValueStep>,
    pub confidence: Vec<ConfidenceSeries>,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn evaluate(policy: &TreePolicy, test: &[Trajectory], opts: &EvaluationOptions) -> Result<EvaluationReport> {
    if test.is_empty() {
        return Err(data("test set is empty"));
    }
    let k = policy.dims().actions;
    if let Some(t) = test.iter().find(|t| t.actions.iter().any(|&a| a >= k)) {
        return Err(structural(format!("trajectory {} has an action outside 0..{k}", t.id)));
    }
    let soft: Vec<_> = test.iter().map(|t| policy.rollout(t, Mode::Soft)).collect::<Result<_>>()?;
    let hard: Vec<_> = test.iter().map(|t| policy.rollout(t, Mode::Hard)).collect::<Result<_>>()?;

    let truth: Vec<usize> = test.iter().flat_map(|t| t.actions.iter().copied()).collect();
    let dists: Vec<Vec<f64>> = soft.iter().flatten().map(|s| s.action_dist.clone()).collect();
    let pred: Vec<usize> = hard.iter().flatten().map(|s| argmax(&s.action_dist)).collect();

    let (auroc_v, auprc_v, brier_v) = if k == 2 {
        let scores: Vec<f64> = dists.iter().map(|d| d[1]).collect();
        let labels: Vec<bool> = truth.iter().map(|&a| a == 1).collect();
        (auroc(&scores, &labels), auprc(&scores, &labels), Some(brier(&scores, &labels)))
    } else {
        (auroc_ovr(&dists, &truth), None, None)
    };

    let mut rel = Vec::new();
    for (t, steps) in test.iter().zip(&soft) {
        for s in 1..t.len() {
            let z = policy.normalizer().normalize(&t.observations[s]);
            let diff: Vec<f64> = z.iter().zip(&steps[s - 1].z_pred).map(|(a, b)| a - b).collect();
            rel.push(norm(&diff) / norm(&z).max(REL_ERROR_FLOOR));
        }
    }

    let entropies: Vec<f64> = soft
        .iter()
        .flatten()
        .map(|s| -s.leaf_path_probs.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>())
        .collect();

    let low = low_value_from(policy, test, &soft, &opts.active_actions)?;
    let low_value = test
        .iter()
        .zip(&low)
        .flat_map(|(t, flags)| {
            flags.iter().enumerate().filter(|(_, &f)| f).map(|(s, _)| LowValueStep {
                trajectory: t.id.clone(),
                t: s + 1,
                action: t.actions[s],
            })
        })
        .collect();

    Ok(EvaluationReport {
        n_trajectories: test.len(),
        n_steps: truth.len(),
        accuracy: accuracy(&pred, &truth),
        auroc: auroc_v,
        auprc: auprc_v,
        brier: brier_v,
        evolution_relative_error: (!rel.is_empty()).then(|| rel.iter().sum::<f64>() / rel.len() as f64),
        mean_path_entropy: entropies.iter().sum::<f64>() / entropies.len() as f64,
        leaf_entropy: leaf_entropy(policy),
        anomalies: anomalies_from(test, &soft, opts.anomaly_threshold),
        low_value,
        confidence: test
            .iter()
            .zip(&soft)
            .map(|(t, s)| ConfidenceSeries { trajectory: t.id.clone(), probs: s.iter().map(|o| o.action_dist.clone()).collect() })
            .collect(),
    })
}
