#![allow(dead_code)]

use poetree::data::{Normalizer, Prepared};
use poetree::growth::split_leaf;
use poetree::training::{batch_loss_with_targets, compute_gradients, kl_targets, TrainingConfig};
use poetree::tree::{Dims, GateKind, RecurrenceModel, TreePolicy, TreeTopology};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Step for the five-point stencil; smaller steps are dominated by roundoff
/// on leaves whose gradients are ~1e-7.
pub const EPS: f64 = 1e-4;

pub fn random_batch(rng: &mut ChaCha8Rng, dims: Dims, n: usize, len: usize) -> Vec<Prepared> {
    (0..n)
        .map(|_| Prepared {
            z: (0..len).map(|_| (0..dims.obs).map(|_| rng.random_range(-1.5..1.5)).collect()).collect(),
            actions: (0..len).map(|_| rng.random_range(0..dims.actions)).collect(),
        })
        .collect()
}

/// Largest relative discrepancy between the analytic gradient and central
/// differences (five-point), with the consistency-term targets frozen at Θ.
pub fn max_rel_error(policy: &TreePolicy, batch: &[Prepared], cfg: &TrainingConfig) -> (f64, String) {
    let refs: Vec<&Prepared> = batch.iter().collect();
    let (_, grad) = compute_gradients(policy, &refs, cfg).unwrap();
    let targets = kl_targets(policy, &refs).unwrap();
    let analytic = grad.flatten();
    let labels = policy.params().labels();
    let theta = policy.params().flatten();
    let mut probe = policy.clone();
    let mut params = policy.params().clone();
    let mut worst = (0.0, String::new());
    for i in 0..theta.len() {
        let mut f = |delta: f64| {
            let mut t = theta.clone();
            t[i] += delta;
            params.load_flat(&t);
            probe.set_params(params.clone()).unwrap();
            batch_loss_with_targets(&probe, &refs, cfg, &targets).unwrap().total
        };
        let numeric = (8.0 * (f(EPS) - f(-EPS)) - (f(2.0 * EPS) - f(-2.0 * EPS))) / (12.0 * EPS);
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        if rel > worst.0 {
            worst = (rel, format!("{} analytic={a:e} numeric={numeric:e}", labels[i]));
        }
    }
    worst
}

/// Random policy on a random topology: start from a stump and split random
/// leaves until `n_splits` splits are done or every leaf sits at `max_depth`.
pub fn random_policy(
    rng: &mut ChaCha8Rng,
    dims: Dims,
    recurrence: RecurrenceModel,
    gate: GateKind,
    max_depth: usize,
    n_splits: usize,
    std: f64,
) -> TreePolicy {
    let mut p = TreePolicy::random(TreeTopology::complete(1), dims, recurrence, gate, Normalizer::identity(dims.obs), std, rng)
        .unwrap();
    for _ in 0..n_splits {
        let open: Vec<usize> =
            p.topology().leaves().into_iter().filter(|&l| p.topology().node(l).depth < max_depth).collect();
        if open.is_empty() {
            break;
        }
        let leaf = open[rng.random_range(0..open.len())];
        split_leaf(&mut p, leaf, max_depth, rng).unwrap();
    }
    p
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}
