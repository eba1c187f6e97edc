use super::params::{InnerParams, LeafParams, NodeParams};
use super::recurrence::leaf_history_into;
use super::topology::{NodeId, TopoKind};
use super::TreePolicy;
use crate::data::Trajectory;
use crate::error::{data, structural, Result};
use crate::math::{dot, sigmoid, softmax};

/// Soft mode mixes leaf outputs by path probability; hard mode follows the
/// single most probable leaf.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Soft,
    Hard,
}

/// Result of one tree evaluation at a single timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    /// Leaf ids in ascending order, aligned with `leaf_path_probs`.
    pub leaf_ids: Vec<NodeId>,
    pub leaf_path_probs: Vec<f64>,
    pub action_dist: Vec<f64>,
    pub h_next: Vec<f64>,
    /// Predicted next observation in normalized space.
    pub z_pred: Vec<f64>,
    /// Leaf selected in hard mode.
    pub chosen_leaf: Option<NodeId>,
}

/// Probability of taking the right branch at an inner node.
pub fn gate_probability(params: &InnerParams, x: &[f64]) -> Result<f64> {
    if x.len() != params.input_len() {
        return Err(structural(format!(
            "gate expects {} inputs, got {}",
            params.input_len(),
            x.len()
        )));
    }
    Ok(gate_unchecked(params, x))
}

#[inline]
pub(crate) fn gate_unchecked(params: &InnerParams, x: &[f64]) -> f64 {
    match params {
        InnerParams::Linear(g) => sigmoid(dot(&g.w, x) + g.b),
        InnerParams::SoftAnd(g) => {
            let m = g.w_hist.len();
            let mut p = sigmoid(dot(&g.w_hist, &x[..m]) + g.b_hist);
            for (i, &z) in x[m..].iter().enumerate() {
                p *= sigmoid(z * g.w_obs[i] + g.b_obs[i]);
            }
            p
        }
    }
}

/// Accumulates gradients of a gate given `dg`, the adjoint of its output `g`.
pub(crate) fn gate_backward(params: &InnerParams, x: &[f64], g: f64, dg: f64, grad: &mut InnerParams, dx: &mut [f64]) {
    match (params, grad) {
        (InnerParams::Linear(p), InnerParams::Linear(gr)) => {
            let ds = dg * g * (1.0 - g);
            for i in 0..x.len() {
                gr.w[i] += ds * x[i];
                dx[i] += ds * p.w[i];
            }
            gr.b += ds;
        }
        (InnerParams::SoftAnd(p), InnerParams::SoftAnd(gr)) => {
            // d g / d u_k = g (1 - σ(u_k)) for every factor σ(u_k)
            let m = p.w_hist.len();
            let dlog = dg * g;
            let s_h = sigmoid(dot(&p.w_hist, &x[..m]) + p.b_hist);
            let du_h = dlog * (1.0 - s_h);
            for i in 0..m {
                gr.w_hist[i] += du_h * x[i];
                dx[i] += du_h * p.w_hist[i];
            }
            gr.b_hist += du_h;
            for i in 0..p.w_obs.len() {
                let z = x[m + i];
                let s = sigmoid(z * p.w_obs[i] + p.b_obs[i]);
                let du = dlog * (1.0 - s);
                gr.w_obs[i] += du * z;
                gr.b_obs[i] += du;
                dx[m + i] += du * p.w_obs[i];
            }
        }
        _ => unreachable!("gradient container shape differs from parameters"),
    }
}

/// Action distribution of a single leaf: softmax(θ_a).
pub fn leaf_action_distribution(leaf: &LeafParams) -> Vec<f64> {
    softmax(&leaf.theta_a)
}

/// Input-independent leaf outputs, indexed by node id (empty for inner nodes).
pub(crate) struct LeafCache {
    pub action: Vec<Vec<f64>>,
    pub zpred: Vec<Vec<f64>>,
}

impl LeafCache {
    pub fn new(policy: &TreePolicy) -> Self {
        let mut action = Vec::with_capacity(policy.params.nodes.len());
        let mut zpred = Vec::with_capacity(policy.params.nodes.len());
        for p in &policy.params.nodes {
            match p {
                NodeParams::Leaf(l) => {
                    action.push(softmax(&l.theta_a));
                    zpred.push(l.theta_z.iter().map(|v| v.tanh()).collect());
                }
                NodeParams::Inner(_) => {
                    action.push(Vec::new());
                    zpred.push(Vec::new());
                }
            }
        }
        Self { action, zpred }
    }
}

impl TreePolicy {
    /// Gate probabilities and path probabilities of every node for input `x`.
    /// Leaves get gate 0.
    pub(crate) fn eval_gates(&self, x: &[f64], gate: &mut [f64], path: &mut [f64]) {
        path[0] = 1.0;
        for (id, node) in self.topology.nodes().iter().enumerate() {
            if let TopoKind::Inner { left, right } = node.kind {
                let g = gate_unchecked(self.params.nodes[id].as_inner().unwrap(), x);
                gate[id] = g;
                path[left] = path[id] * (1.0 - g);
                path[right] = path[id] * g;
            } else {
                gate[id] = 0.0;
            }
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dims.input() {
            return Err(structural(format!(
                "tree input has {} entries, expected M+D = {}",
                x.len(),
                self.dims.input()
            )));
        }
        Ok(())
    }

    /// Path probability of every node (root = 1) for input `x = [h; z]`.
    pub fn node_path_probabilities(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let n = self.topology.len();
        let mut gate = vec![0.0; n];
        let mut path = vec![0.0; n];
        self.eval_gates(x, &mut gate, &mut path);
        Ok(path)
    }

    /// Path probabilities of the leaves (ascending id) for input `x = [h; z]`.
    pub fn path_probabilities(&self, x: &[f64]) -> Result<Vec<f64>> {
        let path = self.node_path_probabilities(x)?;
        Ok(self.topology.leaves().into_iter().map(|l| path[l]).collect())
    }

    /// One soft step from raw observation `z_raw`.
    pub fn forward_step(&self, h: &[f64], z_raw: &[f64]) -> Result<StepOutput> {
        let z = self.normalize_checked(z_raw)?;
        self.step_normalized(h, &z, Mode::Soft)
    }

    /// One hard (max-probability leaf) step from raw observation `z_raw`.
    pub fn hard_forward_step(&self, h: &[f64], z_raw: &[f64]) -> Result<StepOutput> {
        let z = self.normalize_checked(z_raw)?;
        self.step_normalized(h, &z, Mode::Hard)
    }

    fn normalize_checked(&self, z_raw: &[f64]) -> Result<Vec<f64>> {
        if z_raw.len() != self.dims.obs {
            return Err(structural(format!("observation has {} dims, expected {}", z_raw.len(), self.dims.obs)));
        }
        if z_raw.iter().any(|v| !v.is_finite()) {
            return Err(data("non-finite observation"));
        }
        Ok(self.normalizer.normalize(z_raw))
    }

    /// One step with an already-normalized observation.
    pub fn step_normalized(&self, h: &[f64], z: &[f64], mode: Mode) -> Result<StepOutput> {
        if h.len() != self.dims.history {
            return Err(structural(format!("history has {} dims, expected {}", h.len(), self.dims.history)));
        }
        if z.len() != self.dims.obs {
            return Err(structural(format!("observation has {} dims, expected {}", z.len(), self.dims.obs)));
        }
        let cache = LeafCache::new(self);
        Ok(self.step_cached(&cache, h, z, mode))
    }

    pub(crate) fn step_cached(&self, cache: &LeafCache, h: &[f64], z: &[f64], mode: Mode) -> StepOutput {
        let n = self.topology.len();
        let mut x = Vec::with_capacity(self.dims.input());
        x.extend_from_slice(h);
        x.extend_from_slice(z);
        let mut gate = vec![0.0; n];
        let mut path = vec![0.0; n];
        self.eval_gates(&x, &mut gate, &mut path);

        let leaves = self.topology.leaves();
        let leaf_path_probs: Vec<f64> = leaves.iter().map(|&l| path[l]).collect();
        let m = self.dims.history;
        let mut h_leaf = vec![0.0; m];
        match mode {
            Mode::Soft => {
                let mut action_dist = vec![0.0; self.dims.actions];
                let mut z_pred = vec![0.0; self.dims.obs];
                let mut h_next = vec![0.0; m];
                for &l in &leaves {
                    let p = path[l];
                    for (a, v) in action_dist.iter_mut().zip(&cache.action[l]) {
                        *a += p * v;
                    }
                    for (a, v) in z_pred.iter_mut().zip(&cache.zpred[l]) {
                        *a += p * v;
                    }
                    let leaf = self.params.nodes[l].as_leaf().unwrap();
                    leaf_history_into(leaf, self.recurrence, h, z, &mut h_leaf);
                    for (a, v) in h_next.iter_mut().zip(&h_leaf) {
                        *a += p * v;
                    }
                }
                StepOutput { leaf_ids: leaves, leaf_path_probs, action_dist, h_next, z_pred, chosen_leaf: None }
            }
            Mode::Hard => {
                let mut best = leaves[0];
                for &l in &leaves[1..] {
                    if path[l] > path[best] {
                        best = l;
                    }
                }
                let leaf = self.params.nodes[best].as_leaf().unwrap();
                leaf_history_into(leaf, self.recurrence, h, z, &mut h_leaf);
                StepOutput {
                    leaf_ids: leaves,
                    leaf_path_probs,
                    action_dist: cache.action[best].clone(),
                    h_next: h_leaf,
                    z_pred: cache.zpred[best].clone(),
                    chosen_leaf: Some(best),
                }
            }
        }
    }

    /// Unrolls the tree over a trajectory starting from the zero history.
    pub fn rollout(&self, traj: &Trajectory, mode: Mode) -> Result<Vec<StepOutput>> {
        if traj.observations.is_empty() {
            return Err(data(format!("trajectory {} is empty", traj.id)));
        }
        let zs = traj
            .observations
            .iter()
            .map(|z| self.normalize_checked(z))
            .collect::<Result<Vec<_>>>()?;
        self.rollout_normalized(&zs, mode)
    }

    /// Rollout over observations that are already normalized.
    pub fn rollout_normalized(&self, zs: &[Vec<f64>], mode: Mode) -> Result<Vec<StepOutput>> {
        if zs.is_empty() {
            return Err(data("empty trajectory"));
        }
        if let Some(z) = zs.iter().find(|z| z.len() != self.dims.obs) {
            return Err(structural(format!("observation has {} dims, expected {}", z.len(), self.dims.obs)));
        }
        let cache = LeafCache::new(self);
        let mut h = vec![0.0; self.dims.history];
        let mut out = Vec::with_capacity(zs.len());
        for z in zs {
            let step = self.step_cached(&cache, &h, z, mode);
            h.clone_from(&step.h_next);
            out.push(step);
        }
        Ok(out)
    }

    /// Histories h_1..h_τ fed into each step of a soft rollout (h_1 = 0).
    pub fn soft_histories(&self, zs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let steps = self.rollout_normalized(zs, Mode::Soft)?;
        let mut hs = Vec::with_capacity(steps.len());
        hs.push(vec![0.0; self.dims.history]);
        for s in &steps[..steps.len() - 1] {
            hs.push(s.h_next.clone());
        }
        Ok(hs)
    }
}
