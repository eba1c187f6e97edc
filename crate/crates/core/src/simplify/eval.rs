use super::{adjust_threshold_with_evolution, prune_axis_aligned, to_axis_aligned, AxisAlignedTree};
use crate::data::{FeatureRanges, Normalizer, Prepared};
use crate::error::{data, Result};
use crate::tree::{Mode, TreePolicy};

/// Settings for pruning per-timestep trees: the feasible feature box and
/// the validation observations (raw units) seen at each timestep.
#[derive(Debug, Clone)]
pub struct PruneSpec {
    pub ranges: FeatureRanges,
    pub p_min: f64,
    /// `reference[t]` holds raw observations at step t (0-based).
    pub reference: Vec<Vec<Vec<f64>>>,
}

impl PruneSpec {
    pub fn from_validation(ranges: FeatureRanges, p_min: f64, val: &[Prepared], normalizer: &Normalizer) -> Self {
        let mut reference: Vec<Vec<Vec<f64>>> = Vec::new();
        for p in val {
            for (t, z) in p.z.iter().enumerate() {
                if reference.len() <= t {
                    reference.push(Vec::new());
                }
                reference[t].push(normalizer.denormalize(z));
            }
        }
        Self { ranges, p_min, reference }
    }

    fn reference_at(&self, t: usize) -> &[Vec<f64>] {
        self.reference.get(t).or(self.reference.last()).map_or(&[], Vec::as_slice)
    }
}

#[derive(Debug, Clone, Default)]
pub struct AxisOptions {
    /// Fold predicted observations into the thresholds.
    pub evolution: bool,
    pub prune: Option<PruneSpec>,
}

/// One axis-aligned tree per step of a trajectory (normalized observations),
/// built at the soft-rollout history of that step. Timesteps are 1-based.
pub fn explain_steps(policy: &TreePolicy, zs: &[Vec<f64>], opts: &AxisOptions) -> Result<Vec<AxisAlignedTree>> {
    let steps = policy.rollout_normalized(zs, Mode::Soft)?;
    let mut h = vec![0.0; policy.dims().history];
    let mut z_tilde = vec![0.0; policy.dims().obs];
    let mut out = Vec::with_capacity(steps.len());
    for (t, s) in steps.iter().enumerate() {
        let mut tree = if opts.evolution {
            adjust_threshold_with_evolution(policy, &h, &z_tilde)?
        } else {
            to_axis_aligned(policy, &h)?
        };
        if let Some(spec) = &opts.prune {
            tree = prune_axis_aligned(&tree, &spec.ranges, spec.reference_at(t), spec.p_min);
        }
        tree.timestep = Some(t + 1);
        out.push(tree);
        h.clone_from(&s.h_next);
        z_tilde.clone_from(&s.z_pred);
    }
    Ok(out)
}

/// (action, leaf probability) of the per-step axis-aligned trees on every
/// step of every trajectory.
pub fn axis_aligned_predictions(policy: &TreePolicy, set: &[Prepared], opts: &AxisOptions) -> Result<Vec<Vec<(usize, f64)>>> {
    set.iter()
        .map(|p| {
            let trees = explain_steps(policy, &p.z, opts)?;
            Ok(trees
                .iter()
                .zip(&p.z)
                .map(|(tree, z)| tree.predict(&policy.normalizer().denormalize(z)))
                .collect())
        })
        .collect()
}

/// Fraction of steps where the axis-aligned trees choose the demonstrated action.
pub fn axis_aligned_accuracy(policy: &TreePolicy, set: &[Prepared], opts: &AxisOptions) -> Result<f64> {
    let preds = axis_aligned_predictions(policy, set, opts)?;
    let (mut hit, mut total) = (0usize, 0usize);
    for (p, pred) in set.iter().zip(&preds) {
        for (&a, &(b, _)) in p.actions.iter().zip(pred) {
            hit += usize::from(a == b);
            total += 1;
        }
    }
    if total == 0 {
        return Err(data("no steps to score"));
    }
    Ok(hit as f64 / total as f64)
}
