use serde::{Deserialize, Serialize};

use super::config::{LossVariant, TrainingConfig};
use super::trace::{eval_input, trace, TrajTrace};
use crate::data::{Prepared, Trajectory};
use crate::error::{data, structural, Result};
use crate::math::clamped_ln;
use crate::tree::{LeafCache, NodeId, TopoKind, TreePolicy};

pub const ALPHA_CLAMP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub action_loss: f64,
    pub evolution_mse: f64,
    pub evolution_kl: f64,
    pub split_loss: f64,
    pub l1_loss: f64,
    pub total: f64,
}

impl LossBreakdown {
    fn finish(mut self, cfg: &TrainingConfig) -> Self {
        self.total = self.action_loss
            + cfg.delta1 * self.evolution_mse
            + cfg.delta2 * self.evolution_kl
            + self.split_loss
            + cfg.l1_weight * self.l1_loss;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolutionLoss {
    pub mse: f64,
    pub kl: f64,
}

fn check_step(policy: &TreePolicy, h: &[f64], z: &[f64]) -> Result<()> {
    let dims = policy.dims();
    if h.len() != dims.history || z.len() != dims.obs {
        return Err(structural(format!(
            "step input has |h|={}, |z|={}; expected {} and {}",
            h.len(),
            z.len(),
            dims.history,
            dims.obs
        )));
    }
    if h.iter().chain(z).any(|v| !v.is_finite()) {
        return Err(data("non-finite step input"));
    }
    Ok(())
}

fn concat(h: &[f64], z: &[f64]) -> Vec<f64> {
    let mut x = h.to_vec();
    x.extend_from_slice(z);
    x
}

/// Path-weighted cross-entropy of one step against a one-hot target.
/// `z` is the raw observation.
pub fn action_loss(policy: &TreePolicy, h: &[f64], z: &[f64], target: &[f64]) -> Result<f64> {
    check_step(policy, h, z)?;
    let ones = target.iter().filter(|&&v| v == 1.0).count();
    let zeros = target.iter().filter(|&&v| v == 0.0).count();
    if target.len() != policy.dims().actions || ones != 1 || ones + zeros != target.len() {
        return Err(data("action target must be one-hot of length K"));
    }
    let a = target.iter().position(|&v| v == 1.0).unwrap();
    let cache = LeafCache::new(policy);
    let path = policy.node_path_probabilities(&concat(h, &policy.normalizer().normalize(z)))?;
    Ok(policy
        .topology()
        .leaves()
        .into_iter()
        .map(|l| -path[l] * clamped_ln(cache.action[l][a]))
        .sum())
}

/// KL(p ‖ q) with both sides floored at the log clamp.
pub(crate) fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| pi * (clamped_ln(pi) - clamped_ln(qi)))
        .sum::<f64>()
        .max(0.0)
}

/// Next-observation error and action consistency for one transition.
/// `z_t` and `z_next` are raw observations.
pub fn evolution_loss(policy: &TreePolicy, h_t: &[f64], z_t: &[f64], z_next: &[f64]) -> Result<EvolutionLoss> {
    check_step(policy, h_t, z_t)?;
    check_step(policy, h_t, z_next)?;
    let norm = policy.normalizer();
    let step = policy.step_normalized(h_t, &norm.normalize(z_t), crate::tree::Mode::Soft)?;
    let zn = norm.normalize(z_next);
    let mse = zn.iter().zip(&step.z_pred).map(|(a, b)| (a - b) * (a - b)).sum();
    let cache = LeafCache::new(policy);
    let leaves = policy.topology().leaves();
    let p = eval_input(policy, &cache, &leaves, concat(&step.h_next, &zn)).pi;
    let q = eval_input(policy, &cache, &leaves, concat(&step.h_next, &step.z_pred)).pi;
    Ok(EvolutionLoss { mse, kl: kl_divergence(&p, &q) })
}

/// Per inner node: Σ_x P^n(x) g^n(x) and Σ_x P^n(x).
pub(crate) struct SplitStats {
    pub num: Vec<f64>,
    pub den: Vec<f64>,
}

impl SplitStats {
    pub(crate) fn new(n: usize) -> Self {
        Self { num: vec![0.0; n], den: vec![0.0; n] }
    }

    pub(crate) fn add(&mut self, inner: &[NodeId], gate: &[f64], path: &[f64]) {
        for &id in inner {
            self.num[id] += path[id] * gate[id];
            self.den[id] += path[id];
        }
    }

    /// Loss value and, per node, the coefficient k_n = ∂L/∂α_n / Σ P^n
    /// (zero where α is clamped or the node saw no mass) plus α_n.
    pub(crate) fn evaluate(&self, policy: &TreePolicy, lambda: f64) -> (f64, Vec<f64>, Vec<f64>) {
        let n = policy.topology.len();
        let mut coef = vec![0.0; n];
        let mut alpha = vec![0.0; n];
        let mut loss = 0.0;
        if lambda == 0.0 {
            return (0.0, coef, alpha);
        }
        for id in policy.topology.inner_nodes() {
            if self.den[id] <= 0.0 {
                continue;
            }
            let raw = self.num[id] / self.den[id];
            let a = raw.clamp(ALPHA_CLAMP, 1.0 - ALPHA_CLAMP);
            let w = lambda * 0.5f64.powi(policy.topology.node(id).depth as i32);
            loss -= w * 0.5 * (a.ln() + (1.0 - a).ln());
            alpha[id] = a;
            if raw > ALPHA_CLAMP && raw < 1.0 - ALPHA_CLAMP {
                let dalpha = -w * 0.5 * (1.0 / a - 1.0 / (1.0 - a));
                coef[id] = dalpha / self.den[id];
            }
        }
        (loss, coef, alpha)
    }
}

/// Split-balance penalty over a set of tree inputs `x = [h; z_norm]`.
pub fn split_regularizer(policy: &TreePolicy, inputs: &[Vec<f64>], lambda: f64) -> Result<f64> {
    if inputs.is_empty() {
        return Err(data("split regularizer needs at least one input"));
    }
    let n = policy.topology().len();
    let inner = policy.topology().inner_nodes();
    let mut stats = SplitStats::new(n);
    let mut gate = vec![0.0; n];
    let mut path = vec![0.0; n];
    for x in inputs {
        if x.len() != policy.dims().input() {
            return Err(structural(format!("tree input has {} entries, expected {}", x.len(), policy.dims().input())));
        }
        policy.eval_gates(x, &mut gate, &mut path);
        stats.add(&inner, &gate, &path);
    }
    Ok(stats.evaluate(policy, lambda).0)
}

/// Σ|w| over gate weights; biases are not penalized.
pub fn l1_penalty(policy: &TreePolicy) -> f64 {
    policy.l1_norm()
}

/// Index of the most probable leaf, lowest id on ties.
pub(crate) fn max_leaf(leaves: &[NodeId], path: &[f64]) -> NodeId {
    let mut best = leaves[0];
    for &l in &leaves[1..] {
        if path[l] > path[best] {
            best = l;
        }
    }
    best
}

/// Per-trajectory sums of the action, squared-error and KL terms.
pub(crate) fn trajectory_sums(
    cache: &LeafCache,
    leaves: &[NodeId],
    tr: &TrajTrace,
    traj: &Prepared,
    variant: LossVariant,
    targets: Option<&[Vec<f64>]>,
) -> (f64, f64, f64) {
    let tau = tr.steps.len();
    let (mut act, mut mse, mut kl) = (0.0, 0.0, 0.0);
    for (t, st) in tr.steps.iter().enumerate() {
        let a = traj.actions[t];
        let path = &st.eval.path;
        act += match variant {
            LossVariant::PathWeighted => leaves.iter().map(|&l| -path[l] * clamped_ln(cache.action[l][a])).sum(),
            LossVariant::Mixture => -clamped_ln(st.eval.pi[a]),
            LossVariant::MaxLeaf => -clamped_ln(cache.action[max_leaf(leaves, path)][a]),
        };
        if t + 1 < tau {
            mse += traj.z[t + 1].iter().zip(&st.z_pred).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
            if let Some(pred) = &st.predicted {
                let p = match targets {
                    Some(ts) => &ts[t],
                    None => &tr.steps[t + 1].eval.pi,
                };
                kl += kl_divergence(p, &pred.pi);
            }
        }
    }
    (act, mse, kl)
}

pub(crate) fn check_batch(policy: &TreePolicy, batch: &[&Prepared]) -> Result<()> {
    if batch.is_empty() {
        return Err(data("empty batch"));
    }
    let dims = policy.dims();
    for (i, p) in batch.iter().enumerate() {
        if p.is_empty() || p.z.len() != p.actions.len() {
            return Err(data(format!("batch item {i}: empty or ragged trajectory")));
        }
        if p.actions.iter().any(|&a| a >= dims.actions) {
            return Err(data(format!("batch item {i}: action index out of range")));
        }
        if p.z.iter().any(|z| z.len() != dims.obs || z.iter().any(|v| !v.is_finite())) {
            return Err(data(format!("batch item {i}: observation of wrong length or non-finite")));
        }
    }
    Ok(())
}

/// Everything the gradient pass needs from one forward sweep over a batch.
pub(crate) struct BatchForward {
    pub cache: LeafCache,
    pub leaves: Vec<NodeId>,
    pub inner: Vec<NodeId>,
    pub traces: Vec<TrajTrace>,
    pub loss: LossBreakdown,
    pub split_coef: Vec<f64>,
    pub split_alpha: Vec<f64>,
}

pub(crate) fn forward_batch(
    policy: &TreePolicy,
    batch: &[&Prepared],
    cfg: &TrainingConfig,
    targets: Option<&[Vec<Vec<f64>>]>,
) -> Result<BatchForward> {
    check_batch(policy, batch)?;
    let cache = LeafCache::new(policy);
    let leaves = policy.topology.leaves();
    let inner = policy.topology.inner_nodes();
    let n = policy.topology.len();
    let mut stats = SplitStats::new(n);
    let mut traces = Vec::with_capacity(batch.len());
    let (mut act, mut mse, mut kl) = (Vec::new(), Vec::new(), Vec::new());
    for (i, traj) in batch.iter().enumerate() {
        let tr = trace(policy, &cache, &leaves, traj, true);
        for st in &tr.steps {
            stats.add(&inner, &st.eval.gate, &st.eval.path);
        }
        let (a, m, k) = trajectory_sums(&cache, &leaves, &tr, traj, cfg.loss, targets.map(|t| &t[i][..]));
        let tau = traj.len() as f64;
        act.push(a / tau);
        mse.push(m / tau);
        kl.push(k / tau);
        traces.push(tr);
    }
    let b = batch.len() as f64;
    let (split_loss, split_coef, split_alpha) = stats.evaluate(policy, cfg.lambda);
    let loss = LossBreakdown {
        action_loss: act.iter().sum::<f64>() / b,
        evolution_mse: mse.iter().sum::<f64>() / b,
        evolution_kl: kl.iter().sum::<f64>() / b,
        split_loss,
        l1_loss: policy.l1_norm(),
        total: 0.0,
    }
    .finish(cfg);
    Ok(BatchForward { cache, leaves, inner, traces, loss, split_coef, split_alpha })
}

/// Mean loss over a batch of normalized trajectories.
pub fn batch_loss(policy: &TreePolicy, batch: &[&Prepared], cfg: &TrainingConfig) -> Result<LossBreakdown> {
    Ok(forward_batch(policy, batch, cfg, None)?.loss)
}

/// Batch loss with the consistency-term targets held fixed (for
/// finite-difference checks of the detached KL argument).
pub fn batch_loss_with_targets(
    policy: &TreePolicy,
    batch: &[&Prepared],
    cfg: &TrainingConfig,
    targets: &[Vec<Vec<f64>>],
) -> Result<LossBreakdown> {
    Ok(forward_batch(policy, batch, cfg, Some(targets))?.loss)
}

/// Action distributions π(·|h_{t+1}, z_{t+1}) that serve as KL targets,
/// per trajectory and transition.
pub fn kl_targets(policy: &TreePolicy, batch: &[&Prepared]) -> Result<Vec<Vec<Vec<f64>>>> {
    check_batch(policy, batch)?;
    let cache = LeafCache::new(policy);
    let leaves = policy.topology.leaves();
    Ok(batch
        .iter()
        .map(|traj| {
            let tr = trace(policy, &cache, &leaves, traj, false);
            tr.steps[1..].iter().map(|s| s.eval.pi.clone()).collect()
        })
        .collect())
}

/// Loss of a single trajectory given in raw observation space.
pub fn trajectory_loss(policy: &TreePolicy, traj: &Trajectory, cfg: &TrainingConfig) -> Result<LossBreakdown> {
    let dims = policy.dims();
    traj.validate(dims.obs, dims.actions)?;
    let prepared = Prepared::new(traj, policy.normalizer());
    batch_loss(policy, &[&prepared], cfg)
}

/// Clamped balance α of every inner node over a batch.
pub fn split_alphas(policy: &TreePolicy, batch: &[&Prepared]) -> Result<Vec<(NodeId, f64)>> {
    let cfg = TrainingConfig { lambda: 1.0, ..TrainingConfig::default() };
    let fwd = forward_batch(policy, batch, &cfg, None)?;
    Ok(policy
        .topology
        .nodes()
        .iter()
        .enumerate()
        .filter(|(_, n)| matches!(n.kind, TopoKind::Inner { .. }))
        .map(|(id, _)| (id, fwd.split_alpha[id]))
        .collect())
}
