use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState};
use super::config::TrainingConfig;
use super::gradient::compute_gradients;
use super::loss::{batch_loss, LossBreakdown};
use crate::analysis::metrics::{accuracy, auroc_ovr};
use crate::data::Prepared;
use crate::error::{data, Result};
use crate::math::{argmax, clamped_ln};
use crate::tree::{GateKind, Mode, NodeId, NodeParams, TreePolicy};

/// Standard deviation of fresh random parameters.
pub const INIT_STD: f64 = 0.1;

/// Which parameters an optimization run may change.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    All,
    Subtree(NodeId),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub total: f64,
    pub action: f64,
    pub mse: f64,
    pub kl: f64,
    pub split: f64,
    pub val_auroc: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainingReport {
    pub epochs: Vec<EpochRecord>,
    pub updates: usize,
    pub restarts: usize,
    pub best_val: f64,
    /// Set when every attempt tripped the restart rule.
    pub failure: Option<String>,
}

/// Soft-mode validation score: AUROC of the action distribution over all
/// steps (one-vs-rest for K > 2), or accuracy when AUROC is undefined.
pub fn validation_score(policy: &TreePolicy, val: &[Prepared]) -> Result<f64> {
    Ok(score(policy, val)?.metric)
}

/// Validation metric plus the mean negative log-likelihood of the
/// demonstrated actions, which breaks ties when the metric saturates.
#[derive(Debug, Clone, Copy)]
struct ValScore {
    metric: f64,
    nll: f64,
}

impl ValScore {
    fn beats(&self, other: &ValScore) -> bool {
        self.metric > other.metric || (self.metric == other.metric && self.nll < other.nll)
    }
}

fn score(policy: &TreePolicy, val: &[Prepared]) -> Result<ValScore> {
    let (dists, truth) = soft_predictions(policy, val)?;
    let metric = match auroc_ovr(&dists, &truth) {
        Some(a) => a,
        None => {
            let pred: Vec<usize> = dists.iter().map(|d| argmax(d)).collect();
            accuracy(&pred, &truth)
        }
    };
    let nll = dists.iter().zip(&truth).map(|(d, &a)| -clamped_ln(d[a])).sum::<f64>() / truth.len() as f64;
    Ok(ValScore { metric, nll })
}

pub(crate) fn soft_predictions(policy: &TreePolicy, set: &[Prepared]) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    let mut dists = Vec::new();
    let mut truth = Vec::new();
    for p in set {
        for (s, &a) in policy.rollout_normalized(&p.z, Mode::Soft)?.into_iter().zip(&p.actions) {
            dists.push(s.action_dist);
            truth.push(a);
        }
    }
    Ok((dists, truth))
}

fn gate_kind(policy: &TreePolicy) -> GateKind {
    policy
        .params()
        .nodes
        .iter()
        .find_map(NodeParams::as_inner)
        .map_or(GateKind::Linear, |p| p.kind())
}

fn scope_mask(policy: &TreePolicy, scope: Scope) -> Option<Vec<bool>> {
    match scope {
        Scope::All => None,
        Scope::Subtree(id) => {
            let mut inside = vec![false; policy.topology().len()];
            for n in policy.topology().subtree(id) {
                inside[n] = true;
            }
            Some(policy.params().owners().into_iter().map(|o| inside[o]).collect())
        }
    }
}

struct Attempt {
    best: TreePolicy,
    best_val: ValScore,
    epochs: Vec<EpochRecord>,
    updates: usize,
    stalled: bool,
}

fn run_attempt(
    start: TreePolicy,
    train: &[Prepared],
    val: &[Prepared],
    cfg: &TrainingConfig,
    mask: Option<&[bool]>,
    rng: &mut ChaCha8Rng,
    check_restart: bool,
    abort_on_stall: bool,
) -> Result<Attempt> {
    let mut policy = start;
    let mut adam = AdamState::new(policy.param_count());
    let mut best = policy.clone();
    let mut best_val = score(&policy, val)?;
    let mut min_nll = best_val.nll;
    let all: Vec<&Prepared> = train.iter().collect();
    let initial_loss = if check_restart { batch_loss(&policy, &all, cfg)?.total } else { 0.0 };
    let mut since_improve = 0;
    let mut updates = 0;
    let mut epochs = Vec::new();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut stalled = false;
    let mut last_val = Some(best_val.metric);
    'outer: for epoch in 0..cfg.max_epochs {
        order.shuffle(rng);
        let epoch_cfg = TrainingConfig { l1_weight: cfg.l1_at(epoch), ..cfg.clone() };
        let mut sum = LossBreakdown::default();
        let mut n_batches = 0.0;
        let mut stop = false;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Prepared> = chunk.iter().map(|&i| &train[i]).collect();
            let (loss, grad) = compute_gradients(&policy, &batch, &epoch_cfg)?;
            adam_step(policy.params_mut(), &grad, &mut adam, cfg.learning_rate, mask);
            accumulate(&mut sum, &loss);
            n_batches += 1.0;
            updates += 1;
            since_improve += 1;
            if updates % cfg.eval_every == 0 {
                let v = score(&policy, val)?;
                last_val = Some(v.metric);
                if v.metric > best_val.metric || v.nll < min_nll - cfg.val_loss_min_delta {
                    since_improve = 0;
                }
                min_nll = min_nll.min(v.nll);
                if v.beats(&best_val) {
                    best_val = v;
                    best = policy.clone();
                }
            }
            if since_improve >= cfg.patience {
                stop = true;
                break;
            }
        }
        let mean = scale(sum, 1.0 / n_batches);
        epochs.push(EpochRecord {
            epoch,
            total: mean.total,
            action: mean.action_loss,
            mse: mean.evolution_mse,
            kl: mean.evolution_kl,
            split: mean.split_loss,
            val_auroc: last_val,
        });
        if check_restart && epoch + 1 == cfg.restart_epochs {
            let drop = (initial_loss - mean.total) / initial_loss.abs().max(f64::MIN_POSITIVE);
            if drop <= cfg.restart_min_decrease {
                stalled = true;
                if abort_on_stall {
                    break 'outer;
                }
            }
        }
        if stop {
            break;
        }
    }
    Ok(Attempt { best, best_val, epochs, updates, stalled })
}

fn accumulate(sum: &mut LossBreakdown, l: &LossBreakdown) {
    sum.action_loss += l.action_loss;
    sum.evolution_mse += l.evolution_mse;
    sum.evolution_kl += l.evolution_kl;
    sum.split_loss += l.split_loss;
    sum.l1_loss += l.l1_loss;
    sum.total += l.total;
}

fn scale(mut l: LossBreakdown, s: f64) -> LossBreakdown {
    l.action_loss *= s;
    l.evolution_mse *= s;
    l.evolution_kl *= s;
    l.split_loss *= s;
    l.l1_loss *= s;
    l.total *= s;
    l
}

/// Minibatch Adam on a fixed topology with validation early stopping.
///
/// Training stops once neither validation AUROC nor validation NLL has
/// improved for `patience` updates. Returns the best-AUROC snapshot. With `Scope::All` the restart rule
/// may re-draw all parameters; subtree runs never restart.
pub fn train_fixed_topology(
    policy: &TreePolicy,
    train: &[Prepared],
    val: &[Prepared],
    cfg: &TrainingConfig,
    scope: Scope,
) -> Result<(TreePolicy, TrainingReport)> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(data("training and validation sets must be non-empty"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mask = scope_mask(policy, scope);
    let can_restart = scope == Scope::All && cfg.max_restarts > 0 && cfg.restart_epochs > 0;

    let mut report = TrainingReport::default();
    let mut overall: Option<(TreePolicy, ValScore)> = None;
    let mut start = policy.clone();
    for attempt in 0..=cfg.max_restarts {
        let last = attempt == cfg.max_restarts;
        let a = run_attempt(start, train, val, cfg, mask.as_deref(), &mut rng, can_restart, !last)?;
        let offset = report.epochs.len();
        report.epochs.extend(a.epochs.into_iter().map(|mut e| {
            e.epoch += offset;
            e
        }));
        report.updates += a.updates;
        if overall.as_ref().is_none_or(|(_, v)| a.best_val.beats(v)) {
            overall = Some((a.best, a.best_val));
        }
        if !a.stalled {
            break;
        }
        if last {
            report.failure = Some("training loss did not decrease by more than the restart threshold".into());
            break;
        }
        report.restarts += 1;
        start = TreePolicy::random(
            policy.topology().clone(),
            policy.dims(),
            policy.recurrence(),
            gate_kind(policy),
            policy.normalizer().clone(),
            INIT_STD,
            &mut rng,
        )?;
    }
    let (best, best_val) = overall.expect("at least one attempt runs");
    report.best_val = best_val.metric;
    Ok((best, report))
}
