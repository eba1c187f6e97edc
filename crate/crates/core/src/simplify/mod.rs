//! Per-timestep axis-aligned views of a trained recurrent tree.
//!
//! At a fixed history h_t every gate collapses to a function of the
//! observation alone (the history slice folds into the bias). Keeping only
//! the heaviest observation weight then yields a one-feature threshold test.

mod eval;
mod prune;

pub use eval::{axis_aligned_accuracy, axis_aligned_predictions, explain_steps, AxisOptions, PruneSpec};
pub use prune::prune_axis_aligned;

use serde::{Deserialize, Serialize};

use crate::error::{structural, Result};
use crate::math::{argmax, dot, sigmoid, softmax};
use crate::tree::{InnerParams, NodeId, TopoKind, TreePolicy, TreeTopology};

/// A gate with the history contribution folded into constants.
#[derive(Debug, Clone, PartialEq)]
pub enum MarginalGate {
    /// σ(w_z·z + b′) with b′ = b + w_h·h.
    Linear { w_z: Vec<f64>, bias: f64 },
    /// σ(hist_logit) · ∏ σ(z_i w_i + b_i) with hist_logit = w′·h + b′.
    SoftAnd { hist_logit: f64, w_obs: Vec<f64>, b_obs: Vec<f64> },
}

impl MarginalGate {
    pub fn probability(&self, z: &[f64]) -> f64 {
        match self {
            MarginalGate::Linear { w_z, bias } => sigmoid(dot(w_z, z) + bias),
            MarginalGate::SoftAnd { hist_logit, w_obs, b_obs } => {
                let mut p = sigmoid(*hist_logit);
                for ((zi, w), b) in z.iter().zip(w_obs).zip(b_obs) {
                    p *= sigmoid(zi * w + b);
                }
                p
            }
        }
    }
}

/// A tree whose gates read only the (normalized) observation, valid for
/// one fixed history vector.
#[derive(Debug, Clone)]
pub struct MarginalizedTree {
    pub topology: TreeTopology,
    /// Indexed by node id; `None` for leaves.
    pub gates: Vec<Option<MarginalGate>>,
    /// Leaf action distributions, indexed by node id (empty for inner nodes).
    pub leaf_actions: Vec<Vec<f64>>,
}

impl MarginalizedTree {
    pub fn node_path_probabilities(&self, z: &[f64]) -> Vec<f64> {
        let mut path = vec![0.0; self.topology.len()];
        path[0] = 1.0;
        for (id, node) in self.topology.nodes().iter().enumerate() {
            if let TopoKind::Inner { left, right } = node.kind {
                let g = self.gates[id].as_ref().unwrap().probability(z);
                path[left] = path[id] * (1.0 - g);
                path[right] = path[id] * g;
            }
        }
        path
    }

    /// Soft action distribution for normalized observation `z`.
    pub fn action_distribution(&self, z: &[f64]) -> Vec<f64> {
        let path = self.node_path_probabilities(z);
        let k = self.leaf_actions.iter().map(Vec::len).max().unwrap_or(0);
        let mut out = vec![0.0; k];
        for l in self.topology.leaves() {
            for (o, a) in out.iter_mut().zip(&self.leaf_actions[l]) {
                *o += path[l] * a;
            }
        }
        out
    }
}

/// Folds the history `h` into each gate's bias.
pub fn marginalize_history(policy: &TreePolicy, h: &[f64]) -> Result<MarginalizedTree> {
    let m = policy.dims().history;
    if h.len() != m {
        return Err(structural(format!("history has {} dims, expected {m}", h.len())));
    }
    let mut gates = Vec::with_capacity(policy.topology().len());
    let mut leaf_actions = Vec::with_capacity(policy.topology().len());
    for (id, node) in policy.params().nodes.iter().enumerate() {
        match (node.as_inner(), node.as_leaf()) {
            (Some(InnerParams::Linear(g)), _) => {
                gates.push(Some(MarginalGate::Linear { w_z: g.w[m..].to_vec(), bias: g.b + dot(&g.w[..m], h) }));
                leaf_actions.push(Vec::new());
            }
            (Some(InnerParams::SoftAnd(g)), _) => {
                gates.push(Some(MarginalGate::SoftAnd {
                    hist_logit: dot(&g.w_hist, h) + g.b_hist,
                    w_obs: g.w_obs.clone(),
                    b_obs: g.b_obs.clone(),
                }));
                leaf_actions.push(Vec::new());
            }
            (None, Some(l)) => {
                gates.push(None);
                leaf_actions.push(softmax(&l.theta_a));
            }
            _ => return Err(structural(format!("node {id} has no parameters"))),
        }
    }
    Ok(MarginalizedTree { topology: policy.topology().clone(), gates, leaf_actions })
}

/// p = ∏_i σ(x_i w_i + b_i): a soft conjunction of per-dimension thresholds.
pub fn soft_and_gate(w: &[f64], b: &[f64], x: &[f64]) -> Result<f64> {
    if w.len() != x.len() || b.len() != x.len() {
        return Err(structural(format!("soft AND gate has {} weights, {} biases for {} inputs", w.len(), b.len(), x.len())));
    }
    Ok(x.iter().zip(w).zip(b).map(|((xi, wi), bi)| sigmoid(xi * wi + bi)).product())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = ">")]
    Greater,
    #[serde(rename = "<")]
    Less,
}

impl Direction {
    pub fn symbol(self) -> &'static str {
        match self {
            Direction::Greater => ">",
            Direction::Less => "<",
        }
    }
}

/// `z[feature] > threshold` or `z[feature] < threshold`, in raw units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub feature: usize,
    pub threshold: f64,
    pub normalized_threshold: f64,
    pub direction: Direction,
}

impl Condition {
    pub fn holds(&self, z_raw: &[f64]) -> bool {
        match self.direction {
            Direction::Greater => z_raw[self.feature] > self.threshold,
            Direction::Less => z_raw[self.feature] < self.threshold,
        }
    }
}

/// A node of an axis-aligned tree. A test sends an observation right when
/// every condition holds; `constant` marks tests that do not depend on the
/// observation (no usable weights) and always go the given way.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AxisNode {
    Test {
        source: NodeId,
        conditions: Vec<Condition>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        constant: Option<bool>,
        left: usize,
        right: usize,
    },
    Leaf {
        source: NodeId,
        action: usize,
        probability: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisAlignedTree {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestep: Option<usize>,
    pub history: Vec<f64>,
    /// Root is node 0.
    pub nodes: Vec<AxisNode>,
}

impl AxisAlignedTree {
    /// Index of the leaf reached by hard traversal of a raw observation.
    pub fn route(&self, z_raw: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                AxisNode::Leaf { .. } => return i,
                AxisNode::Test { conditions, constant, left, right, .. } => {
                    let go_right = constant.unwrap_or_else(|| conditions.iter().all(|c| c.holds(z_raw)));
                    i = if go_right { *right } else { *left };
                }
            }
        }
    }

    /// (action, leaf probability) for a raw observation.
    pub fn predict(&self, z_raw: &[f64]) -> (usize, f64) {
        match &self.nodes[self.route(z_raw)] {
            AxisNode::Leaf { action, probability, .. } => (*action, *probability),
            AxisNode::Test { .. } => unreachable!("route ends at a leaf"),
        }
    }

    fn reachable(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![0];
        while let Some(i) = stack.pop() {
            out.push(i);
            if let AxisNode::Test { left, right, .. } = &self.nodes[i] {
                stack.push(*right);
                stack.push(*left);
            }
        }
        out
    }

    pub fn n_leaves(&self) -> usize {
        self.reachable().into_iter().filter(|&i| matches!(self.nodes[i], AxisNode::Leaf { .. })).count()
    }

    pub fn depth(&self) -> usize {
        fn go(t: &AxisAlignedTree, i: usize) -> usize {
            match &t.nodes[i] {
                AxisNode::Leaf { .. } => 0,
                AxisNode::Test { left, right, .. } => 1 + go(t, *left).max(go(t, *right)),
            }
        }
        go(self, 0)
    }

    /// Conditions tested at the root, if the root is a test.
    pub fn root_conditions(&self) -> Option<&[Condition]> {
        match &self.nodes[0] {
            AxisNode::Test { conditions, .. } => Some(conditions),
            AxisNode::Leaf { .. } => None,
        }
    }

    /// Renumbers reachable nodes in preorder and drops the rest.
    pub(crate) fn compact(&mut self) {
        let order = self.reachable();
        let mut new_id = vec![usize::MAX; self.nodes.len()];
        for (k, &i) in order.iter().enumerate() {
            new_id[i] = k;
        }
        self.nodes = order
            .iter()
            .map(|&i| {
                let mut n = self.nodes[i].clone();
                if let AxisNode::Test { left, right, .. } = &mut n {
                    *left = new_id[*left];
                    *right = new_id[*right];
                }
                n
            })
            .collect();
    }
}

/// Axis-aligned tree at history `h`, keeping only the largest-|w| observation
/// weight of each linear gate.
pub fn to_axis_aligned(policy: &TreePolicy, h: &[f64]) -> Result<AxisAlignedTree> {
    convert(policy, h, None)
}

/// Like [`to_axis_aligned`], but the dropped observation weights are
/// applied to the predicted observation `z_tilde` (normalized) and folded
/// into the threshold rather than discarded.
pub fn adjust_threshold_with_evolution(policy: &TreePolicy, h: &[f64], z_tilde: &[f64]) -> Result<AxisAlignedTree> {
    if z_tilde.len() != policy.dims().obs {
        return Err(structural(format!("predicted observation has {} dims, expected {}", z_tilde.len(), policy.dims().obs)));
    }
    convert(policy, h, Some(z_tilde))
}

fn condition(policy: &TreePolicy, feature: usize, w: f64, bias: f64) -> Condition {
    let t = -bias / w;
    Condition {
        feature,
        threshold: policy.normalizer().denormalize_value(feature, t),
        normalized_threshold: t,
        direction: if w > 0.0 { Direction::Greater } else { Direction::Less },
    }
}

fn convert(policy: &TreePolicy, h: &[f64], z_tilde: Option<&[f64]>) -> Result<AxisAlignedTree> {
    let marg = marginalize_history(policy, h)?;
    let mut nodes = Vec::with_capacity(marg.topology.len());
    for (id, node) in marg.topology.nodes().iter().enumerate() {
        let n = match node.kind {
            TopoKind::Leaf => {
                let dist = &marg.leaf_actions[id];
                let action = argmax(dist);
                AxisNode::Leaf { source: id, action, probability: dist[action] }
            }
            TopoKind::Inner { left, right } => {
                let (conditions, constant) = match marg.gates[id].as_ref().unwrap() {
                    MarginalGate::Linear { w_z, bias } => {
                        let i = w_z
                            .iter()
                            .enumerate()
                            .fold(0, |best, (i, w)| if w.abs() > w_z[best].abs() { i } else { best });
                        let w = w_z[i];
                        if w == 0.0 {
                            (Vec::new(), Some(*bias > 0.0))
                        } else {
                            let residual = z_tilde.map_or(0.0, |zt| {
                                w_z.iter().zip(zt).enumerate().filter(|(j, _)| *j != i).map(|(_, (a, b))| a * b).sum()
                            });
                            (vec![condition(policy, i, w, bias + residual)], None)
                        }
                    }
                    MarginalGate::SoftAnd { hist_logit, w_obs, b_obs } => {
                        // each factor must exceed one half; constant factors decide alone
                        let mut always_false = *hist_logit < 0.0;
                        let mut conds = Vec::new();
                        for (i, (&w, &b)) in w_obs.iter().zip(b_obs).enumerate() {
                            if w == 0.0 {
                                always_false |= b < 0.0;
                            } else {
                                conds.push(condition(policy, i, w, b));
                            }
                        }
                        if always_false {
                            (conds, Some(false))
                        } else if conds.is_empty() {
                            (conds, Some(true))
                        } else {
                            (conds, None)
                        }
                    }
                };
                AxisNode::Test { source: id, conditions, constant, left, right }
            }
        };
        nodes.push(n);
    }
    Ok(AxisAlignedTree { timestep: None, history: h.to_vec(), nodes })
}
