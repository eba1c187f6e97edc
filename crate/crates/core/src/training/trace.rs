//! Forward pass that keeps every intermediate needed by the loss and its
//! reverse-mode gradient.

use crate::data::Prepared;
use crate::tree::{leaf_history_into, LeafCache, NodeId, TreePolicy};

/// Gate and path probabilities for one tree input.
pub(crate) struct GateEval {
    pub x: Vec<f64>,
    pub gate: Vec<f64>,
    pub path: Vec<f64>,
    pub pi: Vec<f64>,
}

pub(crate) struct StepTrace {
    pub eval: GateEval,
    /// History output of each leaf, indexed by node id (empty for inner nodes).
    pub h_leaf: Vec<Vec<f64>>,
    pub h_next: Vec<f64>,
    pub z_pred: Vec<f64>,
    /// Evaluation at [h_{t+1}; z̃_{t+1}] used by the consistency term.
    pub predicted: Option<GateEval>,
}

pub(crate) struct TrajTrace {
    pub steps: Vec<StepTrace>,
}

pub(crate) fn eval_input(policy: &TreePolicy, cache: &LeafCache, leaves: &[NodeId], x: Vec<f64>) -> GateEval {
    let n = policy.topology.len();
    let mut gate = vec![0.0; n];
    let mut path = vec![0.0; n];
    policy.eval_gates(&x, &mut gate, &mut path);
    let mut pi = vec![0.0; policy.dims.actions];
    for &l in leaves {
        for (a, v) in pi.iter_mut().zip(&cache.action[l]) {
            *a += path[l] * v;
        }
    }
    GateEval { x, gate, path, pi }
}

pub(crate) fn trace(
    policy: &TreePolicy,
    cache: &LeafCache,
    leaves: &[NodeId],
    traj: &Prepared,
    with_predicted: bool,
) -> TrajTrace {
    let m = policy.dims.history;
    let d = policy.dims.obs;
    let n = policy.topology.len();
    let mut steps: Vec<StepTrace> = Vec::with_capacity(traj.len());
    let mut h = vec![0.0; m];
    for z in &traj.z {
        let mut x = Vec::with_capacity(m + d);
        x.extend_from_slice(&h);
        x.extend_from_slice(z);
        let eval = eval_input(policy, cache, leaves, x);
        let mut h_leaf = vec![Vec::new(); n];
        let mut h_next = vec![0.0; m];
        let mut z_pred = vec![0.0; d];
        for &l in leaves {
            let p = eval.path[l];
            let mut y = vec![0.0; m];
            leaf_history_into(policy.params.nodes[l].as_leaf().unwrap(), policy.recurrence, &h, z, &mut y);
            for (a, v) in h_next.iter_mut().zip(&y) {
                *a += p * v;
            }
            for (a, v) in z_pred.iter_mut().zip(&cache.zpred[l]) {
                *a += p * v;
            }
            h_leaf[l] = y;
        }
        h.clone_from(&h_next);
        steps.push(StepTrace { eval, h_leaf, h_next, z_pred, predicted: None });
    }
    if with_predicted {
        for t in 0..steps.len().saturating_sub(1) {
            let mut x = Vec::with_capacity(m + d);
            x.extend_from_slice(&steps[t].h_next);
            x.extend_from_slice(&steps[t].z_pred);
            steps[t].predicted = Some(eval_input(policy, cache, leaves, x));
        }
    }
    TrajTrace { steps }
}
