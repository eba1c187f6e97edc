use super::config::{LossVariant, TrainingConfig};
use super::loss::{forward_batch, max_leaf, BatchForward, LossBreakdown};
use super::trace::GateEval;
use crate::data::{Prepared, Trajectory};
use crate::error::{Error, Result};
use crate::math::{softmax_backward, LOG_FLOOR};
use crate::tree::{gate_backward, leaf_history_backward, InnerParams, NodeId, ParamSet, TopoKind, TreePolicy};

/// Exact gradient of the mean batch loss with respect to every entry of Θ,
/// backpropagated through the full history chain.
pub fn compute_gradients(
    policy: &TreePolicy,
    batch: &[&Prepared],
    cfg: &TrainingConfig,
) -> Result<(LossBreakdown, ParamSet)> {
    let fwd = forward_batch(policy, batch, cfg, None)?;
    let mut grad = policy.params.zeros_like();
    let b = batch.len() as f64;
    for (tr_idx, traj) in batch.iter().enumerate() {
        let c = 1.0 / (traj.len() as f64 * b);
        backward_trajectory(policy, &fwd, tr_idx, traj, cfg, c, &mut grad);
    }
    if cfg.l1_weight != 0.0 {
        for (g, p) in grad.nodes.iter_mut().zip(&policy.params.nodes) {
            if let (Some(g), Some(p)) = (g.as_inner_mut(), p.as_inner()) {
                add_l1(g, p, cfg.l1_weight);
            }
        }
    }
    if let Some(label) = grad.first_non_finite() {
        return Err(Error::Numeric { param: label, message: "non-finite gradient".into() });
    }
    Ok((fwd.loss, grad))
}

/// Convenience wrapper over raw trajectories.
pub fn compute_gradients_for(
    policy: &TreePolicy,
    trajectories: &[Trajectory],
    cfg: &TrainingConfig,
) -> Result<(LossBreakdown, ParamSet)> {
    let dims = policy.dims();
    for t in trajectories {
        t.validate(dims.obs, dims.actions)?;
    }
    let prepared: Vec<Prepared> = trajectories.iter().map(|t| Prepared::new(t, policy.normalizer())).collect();
    let refs: Vec<&Prepared> = prepared.iter().collect();
    compute_gradients(policy, &refs, cfg)
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn add_l1(g: &mut InnerParams, p: &InnerParams, weight: f64) {
    match (g, p) {
        (InnerParams::Linear(g), InnerParams::Linear(p)) => {
            for (gi, wi) in g.w.iter_mut().zip(&p.w) {
                *gi += weight * sign(*wi);
            }
        }
        (InnerParams::SoftAnd(g), InnerParams::SoftAnd(p)) => {
            for (gi, wi) in g.w_hist.iter_mut().zip(&p.w_hist).chain(g.w_obs.iter_mut().zip(&p.w_obs)) {
                *gi += weight * sign(*wi);
            }
        }
        _ => unreachable!("gradient container mirrors parameter kinds"),
    }
}

/// Propagates path and gate adjoints bottom-up through the tree for input
/// `x`, accumulating gate-parameter gradients and the input adjoint `dx`.
fn tree_backward(
    policy: &TreePolicy,
    eval: &GateEval,
    dpath: &mut [f64],
    dgate: &mut [f64],
    grad: &mut ParamSet,
    dx: &mut [f64],
) {
    for id in (0..policy.topology.len()).rev() {
        if let TopoKind::Inner { left, right } = policy.topology.node(id).kind {
            let g = eval.gate[id];
            dpath[id] += dpath[left] * (1.0 - g) + dpath[right] * g;
            dgate[id] += eval.path[id] * (dpath[right] - dpath[left]);
            if dgate[id] != 0.0 {
                let p = policy.params.nodes[id].as_inner().unwrap();
                let gp = grad.nodes[id].as_inner_mut().unwrap();
                gate_backward(p, &eval.x, g, dgate[id], gp, dx);
            }
        }
    }
}

/// Adds the gradient of −c·ln â^l_a w.r.t. θ_a^l, scaled by `weight`.
fn add_ce_leaf(grad: &mut ParamSet, l: NodeId, probs: &[f64], a: usize, weight: f64) {
    if probs[a] <= LOG_FLOOR {
        return;
    }
    let g = &mut grad.nodes[l].as_leaf_mut().unwrap().theta_a;
    for (k, (gk, pk)) in g.iter_mut().zip(probs).enumerate() {
        *gk += weight * (pk - if k == a { 1.0 } else { 0.0 });
    }
}

/// Adds adjoints of a mixture π = Σ_l P^l â^l given dπ.
fn mixture_backward(fwd: &BatchForward, path: &[f64], dpi: &[f64], dpath: &mut [f64], grad: &mut ParamSet) {
    for &l in &fwd.leaves {
        let probs = &fwd.cache.action[l];
        dpath[l] += probs.iter().zip(dpi).map(|(a, b)| a * b).sum::<f64>();
        let dprobs: Vec<f64> = dpi.iter().map(|d| path[l] * d).collect();
        softmax_backward(probs, &dprobs, &mut grad.nodes[l].as_leaf_mut().unwrap().theta_a);
    }
}

fn backward_trajectory(
    policy: &TreePolicy,
    fwd: &BatchForward,
    tr_idx: usize,
    traj: &Prepared,
    cfg: &TrainingConfig,
    c: f64,
    grad: &mut ParamSet,
) {
    let tr = &fwd.traces[tr_idx];
    let n = policy.topology.len();
    let m = policy.dims.history;
    let d = policy.dims.obs;
    let tau = tr.steps.len();
    let mut carry = vec![0.0; m];
    for t in (0..tau).rev() {
        let st = &tr.steps[t];
        let path = &st.eval.path;
        let mut dh_next = std::mem::take(&mut carry);
        let mut dz_pred = vec![0.0; d];
        let mut dpath = vec![0.0; n];
        let mut dgate = vec![0.0; n];

        if t + 1 < tau {
            for ((dz, zp), zt) in dz_pred.iter_mut().zip(&st.z_pred).zip(&traj.z[t + 1]) {
                *dz += c * cfg.delta1 * 2.0 * (zp - zt);
            }
            if cfg.delta2 != 0.0 {
                let pred = st.predicted.as_ref().expect("batch traces include predicted inputs");
                let target = &tr.steps[t + 1].eval.pi;
                let dq: Vec<f64> = target
                    .iter()
                    .zip(&pred.pi)
                    .map(|(&p, &q)| if q > LOG_FLOOR && p > 0.0 { -c * cfg.delta2 * p / q } else { 0.0 })
                    .collect();
                let mut kpath = vec![0.0; n];
                let mut kgate = vec![0.0; n];
                mixture_backward(fwd, &pred.path, &dq, &mut kpath, grad);
                let mut dx = vec![0.0; m + d];
                tree_backward(policy, pred, &mut kpath, &mut kgate, grad, &mut dx);
                for (a, v) in dh_next.iter_mut().zip(&dx[..m]) {
                    *a += v;
                }
                for (a, v) in dz_pred.iter_mut().zip(&dx[m..]) {
                    *a += v;
                }
            }
        }

        let a = traj.actions[t];
        match cfg.loss {
            LossVariant::PathWeighted => {
                for &l in &fwd.leaves {
                    let probs = &fwd.cache.action[l];
                    dpath[l] -= c * probs[a].max(LOG_FLOOR).ln();
                    add_ce_leaf(grad, l, probs, a, c * path[l]);
                }
            }
            LossVariant::Mixture => {
                let pa = st.eval.pi[a];
                if pa > LOG_FLOOR {
                    let mut dpi = vec![0.0; policy.dims.actions];
                    dpi[a] = -c / pa;
                    mixture_backward(fwd, path, &dpi, &mut dpath, grad);
                }
            }
            LossVariant::MaxLeaf => {
                let l = max_leaf(&fwd.leaves, path);
                add_ce_leaf(grad, l, &fwd.cache.action[l], a, c);
            }
        }

        let h_t = &st.eval.x[..m];
        let z_t = &st.eval.x[m..];
        let mut dh_in = vec![0.0; m];
        for &l in &fwd.leaves {
            let zc = &fwd.cache.zpred[l];
            dpath[l] += zc.iter().zip(&dz_pred).map(|(a, b)| a * b).sum::<f64>();
            let gl = grad.nodes[l].as_leaf_mut().unwrap();
            for ((g, z), dz) in gl.theta_z.iter_mut().zip(zc).zip(&dz_pred) {
                *g += path[l] * dz * (1.0 - z * z);
            }
            if m > 0 {
                let y = &st.h_leaf[l];
                dpath[l] += y.iter().zip(&dh_next).map(|(a, b)| a * b).sum::<f64>();
                let dy: Vec<f64> = dh_next.iter().map(|v| path[l] * v).collect();
                let leaf = policy.params.nodes[l].as_leaf().unwrap();
                leaf_history_backward(leaf, policy.recurrence, h_t, z_t, y, &dy, gl, &mut dh_in);
            }
        }

        for &id in &fwd.inner {
            let k = fwd.split_coef[id];
            if k != 0.0 {
                dpath[id] += k * (st.eval.gate[id] - fwd.split_alpha[id]);
                dgate[id] += k * path[id];
            }
        }

        let mut dx = vec![0.0; m + d];
        tree_backward(policy, &st.eval, &mut dpath, &mut dgate, grad, &mut dx);
        carry = dh_in;
        for (a, v) in carry.iter_mut().zip(&dx[..m]) {
            *a += v;
        }
    }
}
