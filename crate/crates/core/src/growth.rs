//! Incremental tree growth: start shallow, split leaves one at a time and
//! keep a split only if validation performance improves.

use rand::{Rng, RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::data::{Normalizer, Prepared};
use crate::error::{data, structural, Error, Result};
use crate::training::{train_fixed_topology, validation_score, EpochRecord, Scope, TrainingConfig, INIT_STD};
use crate::tree::{
    Dims, GateKind, InnerParams, LinearGate, Mode, NodeId, NodeParams, RecurrenceModel, SoftAndGate, TreePolicy,
    TreeTopology, DEFAULT_MAX_DEPTH,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GrowthConfig {
    pub max_depth: usize,
    pub initial_depth: usize,
    /// Leaves whose mean validation path probability falls below this are pruned.
    pub p_min: f64,
    /// A split is kept only if validation AUROC rises by more than this.
    pub margin: f64,
}

impl Default for GrowthConfig {
    fn default() -> Self {
        Self { max_depth: DEFAULT_MAX_DEPTH, initial_depth: 2, p_min: 0.05, margin: 0.0 }
    }
}

impl GrowthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.initial_depth < 1 || self.initial_depth > self.max_depth {
            return Err(Error::Config("need 1 ≤ initial_depth ≤ max_depth".into()));
        }
        if !(0.0..1.0).contains(&self.p_min) || !(self.margin >= 0.0) {
            return Err(Error::Config("p_min must be in [0, 1) and margin ≥ 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrowthEventKind {
    Split,
    Reject,
    Prune,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthEvent {
    pub event: GrowthEventKind,
    pub node: NodeId,
    pub depth: usize,
    pub val_auroc_before: f64,
    pub val_auroc_after: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone)]
pub struct GrowthOutcome {
    pub policy: TreePolicy,
    /// Policy after the final global optimization, before pruning.
    pub unpruned: TreePolicy,
    pub log: Vec<GrowthEvent>,
    pub epochs: Vec<EpochRecord>,
    /// Failure reports from the initial optimization, if it never got going.
    pub warnings: Vec<String>,
}

/// Complete tree of depth `depth` with N(0, 0.1²) weights and leaf
/// parameters and zero biases.
pub fn initialize_tree<R: Rng + ?Sized>(
    depth: usize,
    dims: Dims,
    recurrence: RecurrenceModel,
    gate: GateKind,
    normalizer: Normalizer,
    rng: &mut R,
) -> Result<TreePolicy> {
    TreePolicy::random(TreeTopology::complete(depth), dims, recurrence, gate, normalizer, INIT_STD, rng)
}

/// Noise standard deviation for children created at depth `d`: σ² = 1/d.
pub fn split_noise_std(child_depth: usize) -> f64 {
    1.0 / (child_depth as f64).sqrt()
}

/// Replaces a leaf with a fresh gate and two children copied from it, with
/// N(0, σ²) noise (σ² = 1/d at child depth d) on the gate weights and the
/// children. Returns the new leaf ids.
pub fn split_leaf<R: Rng + ?Sized>(
    policy: &mut TreePolicy,
    leaf: NodeId,
    max_depth: usize,
    rng: &mut R,
) -> Result<(NodeId, NodeId)> {
    split_leaf_scaled(policy, leaf, max_depth, 1.0, rng)
}

/// [`split_leaf`] with the noise scaled by `noise_scale`; 0 gives an exact,
/// behavior-preserving split.
pub fn split_leaf_scaled<R: Rng + ?Sized>(
    policy: &mut TreePolicy,
    leaf: NodeId,
    max_depth: usize,
    noise_scale: f64,
    rng: &mut R,
) -> Result<(NodeId, NodeId)> {
    if leaf >= policy.topology().len() || !policy.topology().is_leaf(leaf) {
        return Err(structural(format!("node {leaf} is not a leaf")));
    }
    let child_depth = policy.topology().node(leaf).depth + 1;
    if child_depth > max_depth {
        return Err(structural(format!("splitting node {leaf} would exceed max depth {max_depth}")));
    }
    let std = noise_scale * split_noise_std(child_depth);
    let dims = policy.dims();
    let kind = policy.params().nodes.iter().find_map(NodeParams::as_inner).map_or(GateKind::Linear, |p| p.kind());
    let gate = if std > 0.0 {
        InnerParams::random(kind, dims, std, rng)
    } else {
        match kind {
            GateKind::Linear => InnerParams::Linear(LinearGate { w: vec![0.0; dims.input()], b: 0.0 }),
            GateKind::SoftAnd => InnerParams::SoftAnd(SoftAndGate {
                w_hist: vec![0.0; dims.history],
                b_hist: 0.0,
                w_obs: vec![0.0; dims.obs],
                b_obs: vec![0.0; dims.obs],
            }),
        }
    };
    let (l, r) = policy.split_leaf_with(leaf, gate)?;
    for child in [l, r] {
        policy.params_mut().nodes[child].as_leaf_mut().unwrap().perturb(std, rng);
    }
    Ok((l, r))
}

/// Mean soft path probability of every node over all validation steps.
pub fn validation_masses(policy: &TreePolicy, val: &[Prepared]) -> Result<Vec<f64>> {
    let n = policy.topology().len();
    let mut mass = vec![0.0; n];
    let mut steps = 0usize;
    for p in val {
        let hs = policy.soft_histories(&p.z)?;
        for (h, z) in hs.iter().zip(&p.z) {
            let mut x = h.clone();
            x.extend_from_slice(z);
            for (m, v) in mass.iter_mut().zip(policy.node_path_probabilities(&x)?) {
                *m += v;
            }
            steps += 1;
        }
    }
    if steps == 0 {
        return Err(data("validation set has no steps"));
    }
    Ok(mass.into_iter().map(|m| m / steps as f64).collect())
}

/// Removes leaves with mean validation path mass below `p_min`, lowest
/// first, collapsing each parent onto the sibling and recomputing masses.
pub fn prune_low_probability(policy: &TreePolicy, val: &[Prepared], p_min: f64) -> Result<TreePolicy> {
    Ok(prune_logged(policy, val, p_min)?.0)
}

fn prune_logged(policy: &TreePolicy, val: &[Prepared], p_min: f64) -> Result<(TreePolicy, Vec<GrowthEvent>)> {
    if val.is_empty() {
        return Err(data("pruning needs a non-empty validation set"));
    }
    let mut p = policy.clone();
    let mut log = Vec::new();
    let mut before = validation_score(&p, val)?;
    while p.topology().n_leaves() > 1 {
        let mass = validation_masses(&p, val)?;
        let victim = p
            .topology()
            .leaves()
            .into_iter()
            .filter(|&l| mass[l] < p_min)
            .min_by(|&a, &b| mass[a].total_cmp(&mass[b]));
        let Some(leaf) = victim else { break };
        let depth = p.topology().node(leaf).depth;
        p.collapse_leaf(leaf)?;
        let after = validation_score(&p, val)?;
        log.push(GrowthEvent {
            event: GrowthEventKind::Prune,
            node: leaf,
            depth,
            val_auroc_before: before,
            val_auroc_after: after,
            note: Some(format!("mass {:.4}", mass[leaf])),
        });
        before = after;
    }
    Ok((p, log))
}

fn sub_config(cfg: &TrainingConfig, rng: &mut dyn RngCore, restarts: bool) -> TrainingConfig {
    TrainingConfig {
        seed: rng.next_u64(),
        max_restarts: if restarts { cfg.max_restarts } else { 0 },
        ..cfg.clone()
    }
}

/// Grows a tree: initial optimization, greedy split/accept loop, global
/// optimization, then low-mass pruning.
#[allow(clippy::too_many_arguments)]
pub fn grow<R: Rng + ?Sized>(
    train: &[Prepared],
    val: &[Prepared],
    dims: Dims,
    recurrence: RecurrenceModel,
    gate: GateKind,
    normalizer: Normalizer,
    config: &GrowthConfig,
    training: &TrainingConfig,
    rng: &mut R,
) -> Result<GrowthOutcome> {
    config.validate()?;
    training.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(data("growth needs non-empty training and validation sets"));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(rng.next_u64());
    let mut epochs = Vec::new();
    let mut log = Vec::new();

    let init = initialize_tree(config.initial_depth, dims, recurrence, gate, normalizer, &mut rng)?;
    let (mut policy, report) = train_fixed_topology(&init, train, val, &sub_config(training, &mut rng, true), Scope::All)?;
    epochs.extend(report.epochs);
    let warnings: Vec<String> = report.failure.into_iter().collect();
    let mut current = validation_score(&policy, val)?;

    let mut optimal = vec![false; policy.topology().len()];
    loop {
        let mass = validation_masses(&policy, val)?;
        let candidate = policy
            .topology()
            .leaves()
            .into_iter()
            .filter(|&l| !optimal[l])
            .max_by(|&a, &b| mass[a].total_cmp(&mass[b]).then(b.cmp(&a)));
        let Some(leaf) = candidate else { break };
        let depth = policy.topology().node(leaf).depth;
        if depth >= config.max_depth {
            optimal[leaf] = true;
            continue;
        }
        let mut trial = policy.clone();
        split_leaf(&mut trial, leaf, config.max_depth, &mut rng)?;
        let local = sub_config(training, &mut rng, false);
        let (after, note, trained) = match train_fixed_topology(&trial, train, val, &local, Scope::Subtree(leaf)) {
            Ok((trained, report)) => {
                epochs.extend(report.epochs);
                let score = validation_score(&trained, val)?;
                (score, None, Some(trained))
            }
            Err(e) => (current, Some(format!("local optimization failed: {e}")), None),
        };
        match trained {
            Some(t) if after > current + config.margin => {
                log.push(GrowthEvent {
                    event: GrowthEventKind::Split,
                    node: leaf,
                    depth,
                    val_auroc_before: current,
                    val_auroc_after: after,
                    note,
                });
                policy = t;
                current = after;
                optimal.resize(policy.topology().len(), false);
                optimal[leaf] = true;
            }
            _ => {
                log.push(GrowthEvent {
                    event: GrowthEventKind::Reject,
                    node: leaf,
                    depth,
                    val_auroc_before: current,
                    val_auroc_after: after,
                    note,
                });
                optimal[leaf] = true;
            }
        }
    }

    let (global, report) = train_fixed_topology(&policy, train, val, &sub_config(training, &mut rng, false), Scope::All)?;
    epochs.extend(report.epochs);
    let (pruned, prune_log) = prune_logged(&global, val, config.p_min)?;
    log.extend(prune_log);
    Ok(GrowthOutcome { policy: pruned, unpruned: global, log, epochs, warnings })
}

/// Re-applies the accepted splits of a growth log to a topology, to check
/// that a log fully determines the grown structure (before pruning).
pub fn replay_topology(initial_depth: usize, log: &[GrowthEvent]) -> Result<TreeTopology> {
    let mut t = TreeTopology::complete(initial_depth);
    for e in log.iter().filter(|e| e.event == GrowthEventKind::Split) {
        t.split(e.node)?;
    }
    Ok(t)
}

/// Fraction of steps whose hard-mode action matches the demonstration.
pub fn hard_accuracy(policy: &TreePolicy, set: &[Prepared]) -> Result<f64> {
    let (mut hit, mut total) = (0usize, 0usize);
    for p in set {
        for (s, &a) in policy.rollout_normalized(&p.z, Mode::Hard)?.iter().zip(&p.actions) {
            hit += usize::from(crate::math::argmax(&s.action_dist) == a);
            total += 1;
        }
    }
    Ok(if total == 0 { 0.0 } else { hit as f64 / total as f64 })
}
