//! Randomized invariants across the tree, simplification, metrics and file formats.

mod common;

use common::{random_policy, random_vec, seeded};
use poetree::analysis::{anomalies_in, evaluate, EvaluationOptions};
use poetree::analysis::metrics::auroc;
use poetree::data::{FeatureRanges, Trajectory};
use poetree::growth::split_leaf_scaled;
use poetree::io::{ModelFile, ModelMetadata};
use poetree::simplify::{marginalize_history, prune_axis_aligned, to_axis_aligned, AxisNode};
use poetree::tree::{Dims, GateKind, RecurrenceModel, TreePolicy};
use proptest::prelude::*;
use rand::Rng;

fn pick_recurrence(i: u8) -> RecurrenceModel {
    RecurrenceModel::ALL[i as usize % RecurrenceModel::ALL.len()]
}

fn gate_of(soft_and: bool) -> GateKind {
    if soft_and {
        GateKind::SoftAnd
    } else {
        GateKind::Linear
    }
}

fn input(policy: &TreePolicy, rng: &mut rand_chacha::ChaCha8Rng, scale: f64) -> (Vec<f64>, Vec<f64>) {
    (random_vec(rng, policy.dims().history, 1.0), random_vec(rng, policy.dims().obs, scale))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn path_probabilities_sum_to_one(seed in any::<u64>(), rec in any::<u8>(), soft_and in any::<bool>(), splits in 0usize..31) {
        let mut rng = seeded(seed);
        let dims = Dims { obs: 1 + (seed % 4) as usize, actions: 2 + (seed % 3) as usize, history: (seed % 5) as usize };
        let p = random_policy(&mut rng, dims, pick_recurrence(rec), gate_of(soft_and), 5, splits, 2.0);
        for _ in 0..20 {
            let (h, z) = input(&p, &mut rng, 5.0);
            let mut x = h.clone();
            x.extend(&z);
            let probs = p.path_probabilities(&x).unwrap();
            prop_assert!(probs.iter().all(|&v| (0.0..=1.0).contains(&v)));
            prop_assert!((probs.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            let out = p.forward_step(&h, &z).unwrap();
            prop_assert!((out.action_dist.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn zero_noise_split_is_neutral(seed in any::<u64>(), rec in any::<u8>(), soft_and in any::<bool>()) {
        let mut rng = seeded(seed);
        let dims = Dims { obs: 2, actions: 3, history: 3 };
        let p = random_policy(&mut rng, dims, pick_recurrence(rec), gate_of(soft_and), 4, 4, 1.0);
        let leaves = p.topology().leaves();
        let leaf = leaves[rng.random_range(0..leaves.len())];
        let mut q = p.clone();
        split_leaf_scaled(&mut q, leaf, 5, 0.0, &mut rng).unwrap();
        for _ in 0..20 {
            let (h, z) = input(&p, &mut rng, 3.0);
            let a = p.forward_step(&h, &z).unwrap();
            let b = q.forward_step(&h, &z).unwrap();
            for (u, v) in a.action_dist.iter().chain(&a.h_next).chain(&a.z_pred).zip(b.action_dist.iter().chain(&b.h_next).chain(&b.z_pred)) {
                prop_assert!((u - v).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn history_marginalization_is_exact(seed in any::<u64>(), soft_and in any::<bool>()) {
        let mut rng = seeded(seed);
        let dims = Dims { obs: 3, actions: 2, history: 4 };
        let p = random_policy(&mut rng, dims, RecurrenceModel::MatrixHist, gate_of(soft_and), 5, 10, 1.5);
        for _ in 0..20 {
            let (h, z) = input(&p, &mut rng, 3.0);
            let m = marginalize_history(&p, &h).unwrap();
            let direct = p.forward_step(&h, &z).unwrap().action_dist;
            for (u, v) in m.action_distribution(&z).iter().zip(&direct) {
                prop_assert!((u - v).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn model_file_round_trip_is_bit_exact(seed in any::<u64>(), rec in any::<u8>(), soft_and in any::<bool>(), exp in -30i32..30) {
        let mut rng = seeded(seed);
        let dims = Dims { obs: 2, actions: 2, history: 2 };
        let p = random_policy(&mut rng, dims, pick_recurrence(rec), gate_of(soft_and), 3, 3, 10f64.powi(exp));
        let file = ModelFile::from_policy(&p, ModelMetadata::default());
        let back = ModelFile::from_json(&file.to_json().unwrap()).unwrap().to_policy().unwrap();
        let a: Vec<u64> = p.params().flatten().iter().map(|v| v.to_bits()).collect();
        let b: Vec<u64> = back.params().flatten().iter().map(|v| v.to_bits()).collect();
        prop_assert_eq!(a, b);
        prop_assert_eq!(&back, &p);

        let trajs: Vec<Trajectory> = (0..4)
            .map(|i| Trajectory {
                id: format!("t{i}"),
                observations: (0..3).map(|_| random_vec(&mut rng, 2, 2.0)).collect(),
                actions: vec![i % 2, (i + 1) % 2, 1],
                hidden: None,
            })
            .collect();
        let opts = EvaluationOptions::default();
        prop_assert_eq!(evaluate(&p, &trajs, &opts).unwrap(), evaluate(&back, &trajs, &opts).unwrap());
    }

    #[test]
    fn auroc_ignores_monotone_transforms(scores in prop::collection::vec(-5.0f64..5.0, 2..60), bits in any::<u64>()) {
        let labels: Vec<bool> = (0..scores.len()).map(|i| bits >> (i % 64) & 1 == 1).collect();
        let squashed: Vec<f64> = scores.iter().map(|s| (2.0 * s).tanh() * 3.0 + s.powi(3)).collect();
        prop_assert_eq!(auroc(&scores, &labels), auroc(&squashed, &labels));
    }

    #[test]
    fn raising_the_anomaly_threshold_never_adds_flags(seed in any::<u64>(), lo in 0.5f64..1.0, hi in 0.5f64..1.0) {
        let mut rng = seeded(seed);
        let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
        let dists: Vec<Vec<f64>> = (0..12).map(|_| { let p: f64 = rng.random(); vec![1.0 - p, p] }).collect();
        let actions: Vec<usize> = (0..12).map(|_| rng.random_range(0..2)).collect();
        let strict = anomalies_in("x", &dists, &actions, hi);
        let loose = anomalies_in("x", &dists, &actions, lo);
        prop_assert!(strict.len() <= loose.len());
        prop_assert!(strict.iter().all(|a| loose.contains(a)));
    }

    #[test]
    fn axis_pruning_keeps_the_majority_leaf(seed in any::<u64>(), p_min in 0.0f64..0.5) {
        let mut rng = seeded(seed);
        let dims = Dims { obs: 2, actions: 2, history: 2 };
        let p = random_policy(&mut rng, dims, RecurrenceModel::FixedTanh, GateKind::Linear, 5, 12, 2.0);
        let tree = to_axis_aligned(&p, &random_vec(&mut rng, 2, 1.0)).unwrap();
        let ranges = FeatureRanges { min: vec![-1.0, -1.0], max: vec![1.0, 1.0] };
        let obs: Vec<Vec<f64>> = (0..200).map(|_| random_vec(&mut rng, 2, 1.0)).collect();
        let pruned = prune_axis_aligned(&tree, &ranges, &obs, p_min);
        prop_assert!(pruned.n_leaves() <= tree.n_leaves());

        let mut count = vec![0usize; tree.nodes.len()];
        for z in &obs {
            count[tree.route(z)] += 1;
        }
        let best = *count.iter().max().unwrap();
        let source = |n: &AxisNode| match n { AxisNode::Leaf { source, .. } => Some(*source), _ => None };
        let kept: Vec<usize> = pruned.nodes.iter().filter_map(source).collect();
        let majority: Vec<usize> = (0..tree.nodes.len()).filter(|&i| count[i] == best).filter_map(|i| source(&tree.nodes[i])).collect();
        prop_assert!(majority.iter().any(|s| kept.contains(s)));
    }
}
