//! Confidence, entropy and flags for off-policy or low-value actions.

use serde::{Deserialize, Serialize};

use crate::data::Trajectory;
use crate::error::{data, Result};
use crate::math::{argmax, softmax};
use crate::tree::{Mode, StepOutput, TreePolicy};

/// π(a | h, z) = Σ_l P^l â^l: the soft mixture of leaf action distributions.
pub fn policy_confidence(policy: &TreePolicy, h: &[f64], z_raw: &[f64]) -> Result<Vec<f64>> {
    Ok(policy.forward_step(h, z_raw)?.action_dist)
}

fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|v| v * v.ln()).sum::<f64>()
}

/// Entropy of the leaf path probabilities at (h, z), in nats.
pub fn path_entropy(policy: &TreePolicy, h: &[f64], z_raw: &[f64]) -> Result<f64> {
    Ok(entropy(&policy.forward_step(h, z_raw)?.leaf_path_probs))
}

/// Mean entropy of the leaf action distributions, in nats.
pub fn leaf_entropy(policy: &TreePolicy) -> f64 {
    let leaves = policy.topology().leaves();
    leaves.iter().map(|&l| entropy(&softmax(&policy.leaf(l).unwrap().theta_a))).sum::<f64>() / leaves.len() as f64
}

/// A step where the policy was confident but the demonstrator acted otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Anomaly {
    pub trajectory: String,
    /// 1-based timestep.
    pub t: usize,
    pub predicted: usize,
    pub confidence: f64,
    pub demonstrated: usize,
    /// The demonstrator took the predicted action at the following step.
    pub corrected: bool,
}

/// Anomalous steps of one trajectory from per-step action distributions.
pub fn anomalies_in(id: &str, dists: &[Vec<f64>], actions: &[usize], threshold: f64) -> Vec<Anomaly> {
    let mut out = Vec::new();
    for (t, (d, &a)) in dists.iter().zip(actions).enumerate() {
        let k = argmax(d);
        if d[k] >= threshold && k != a {
            out.push(Anomaly {
                trajectory: id.to_string(),
                t: t + 1,
                predicted: k,
                confidence: d[k],
                demonstrated: a,
                corrected: actions.get(t + 1) == Some(&k),
            });
        }
    }
    out
}

fn soft_rollouts(policy: &TreePolicy, trajs: &[Trajectory]) -> Result<Vec<Vec<StepOutput>>> {
    trajs.iter().map(|t| policy.rollout(t, Mode::Soft)).collect()
}

pub fn detect_anomalies(policy: &TreePolicy, trajs: &[Trajectory], threshold: f64) -> Result<Vec<Anomaly>> {
    let rolls = soft_rollouts(policy, trajs)?;
    Ok(anomalies_from(trajs, &rolls, threshold))
}

pub(crate) fn anomalies_from(trajs: &[Trajectory], rolls: &[Vec<StepOutput>], threshold: f64) -> Vec<Anomaly> {
    trajs
        .iter()
        .zip(rolls)
        .flat_map(|(t, r)| {
            let dists: Vec<Vec<f64>> = r.iter().map(|s| s.action_dist.clone()).collect();
            anomalies_in(&t.id, &dists, &t.actions, threshold)
        })
        .collect()
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Observation changes of one trajectory in normalized space: realized
/// ‖z_{t+1} − z_t‖ and predicted ‖z̃_{t+1} − z_t‖ for t < τ.
#[derive(Debug, Clone, Default)]
pub struct ChangeSeries {
    pub realized: Vec<f64>,
    pub predicted: Vec<f64>,
}

fn change_series(policy: &TreePolicy, traj: &Trajectory, roll: &[StepOutput]) -> ChangeSeries {
    let z: Vec<Vec<f64>> = traj.observations.iter().map(|o| policy.normalizer().normalize(o)).collect();
    let mut c = ChangeSeries::default();
    for t in 0..z.len().saturating_sub(1) {
        c.realized.push(distance(&z[t + 1], &z[t]));
        c.predicted.push(distance(&roll[t].z_pred, &z[t]));
    }
    c
}

/// mean − std of all realized changes (population std); `None` without changes.
pub fn low_change_bound(series: &[ChangeSeries]) -> Option<f64> {
    let all: Vec<f64> = series.iter().flat_map(|s| s.realized.iter().copied()).collect();
    if all.is_empty() {
        return None;
    }
    let n = all.len() as f64;
    let mean = all.iter().sum::<f64>() / n;
    let var = all.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Some(mean - var.sqrt())
}

/// Per-step flags: an active action whose realized change and predicted
/// change both fall below `bound`. The last step is never flagged.
pub fn low_value_flags(series: &ChangeSeries, actions: &[usize], active: &[usize], bound: f64) -> Vec<bool> {
    actions
        .iter()
        .enumerate()
        .map(|(t, a)| {
            active.contains(a)
                && t < series.realized.len()
                && series.realized[t] < bound
                && series.predicted[t] < bound
        })
        .collect()
}

/// Low-value flags for every step of every trajectory.
pub fn low_value_actions(policy: &TreePolicy, trajs: &[Trajectory], active: &[usize]) -> Result<Vec<Vec<bool>>> {
    let rolls = soft_rollouts(policy, trajs)?;
    low_value_from(policy, trajs, &rolls, active)
}

pub(crate) fn low_value_from(
    policy: &TreePolicy,
    trajs: &[Trajectory],
    rolls: &[Vec<StepOutput>],
    active: &[usize],
) -> Result<Vec<Vec<bool>>> {
    if trajs.is_empty() {
        return Err(data("no trajectories"));
    }
    let series: Vec<ChangeSeries> = trajs.iter().zip(rolls).map(|(t, r)| change_series(policy, t, r)).collect();
    Ok(match low_change_bound(&series) {
        Some(bound) => series.iter().zip(trajs).map(|(s, t)| low_value_flags(s, &t.actions, active, bound)).collect(),
        None => trajs.iter().map(|t| vec![false; t.len()]).collect(),
    })
}
