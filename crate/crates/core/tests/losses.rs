use approx::assert_abs_diff_eq;
use poetree::data::{Normalizer, Prepared, Trajectory};
use poetree::training::{
    action_loss, batch_loss, evolution_loss, l1_penalty, split_regularizer, train_fixed_topology, trajectory_loss,
    Scope, TrainingConfig,
};
use poetree::tree::{
    Dims, InnerParams, LeafParams, Mode, NodeParams, ParamSet, RecurrenceModel, TreePolicy, TreeTopology,
};

fn leaf(theta_a: Vec<f64>, dims: Dims) -> NodeParams {
    let mut l = LeafParams::zeros(dims, RecurrenceModel::FixedTanh);
    l.theta_a = theta_a;
    NodeParams::Leaf(l)
}

fn single_leaf(theta_a: Vec<f64>, obs: usize) -> TreePolicy {
    let dims = Dims { obs, actions: theta_a.len(), history: 1 };
    TreePolicy::new(
        TreeTopology::single_leaf(),
        ParamSet { nodes: vec![leaf(theta_a, dims)] },
        dims,
        RecurrenceModel::FixedTanh,
        Normalizer::identity(obs),
    )
    .unwrap()
}

/// Root with a linear gate over [h; z] and two leaves.
fn stump(w: Vec<f64>, b: f64, left: Vec<f64>, right: Vec<f64>, history: usize) -> TreePolicy {
    let obs = w.len() - history;
    let dims = Dims { obs, actions: left.len(), history };
    TreePolicy::new(
        TreeTopology::complete(1),
        ParamSet { nodes: vec![NodeParams::Inner(InnerParams::linear(w, b)), leaf(left, dims), leaf(right, dims)] },
        dims,
        RecurrenceModel::FixedTanh,
        Normalizer::identity(obs),
    )
    .unwrap()
}

fn quiet() -> TrainingConfig {
    TrainingConfig { delta1: 0.0, delta2: 0.0, lambda: 0.0, l1_weight: 0.0, ..Default::default() }
}

#[test]
fn uniform_leaf_costs_ln2() {
    let p = single_leaf(vec![0.0, 0.0], 1);
    for target in [[1.0, 0.0], [0.0, 1.0]] {
        assert_abs_diff_eq!(action_loss(&p, &[0.0], &[0.7], &target).unwrap(), 2f64.ln(), epsilon = 1e-15);
    }
}

#[test]
fn confident_correct_leaf_costs_nothing() {
    let p = single_leaf(vec![30.0, 0.0], 1);
    assert!(action_loss(&p, &[0.0], &[0.0], &[1.0, 0.0]).unwrap() < 1e-12);
}

#[test]
fn two_leaf_hand_value() {
    // gate 0.5 everywhere; leaf 0 = [0.9, 0.1], leaf 1 uniform
    let p = stump(vec![0.0, 0.0], 0.0, vec![(0.9f64 / 0.1).ln(), 0.0], vec![0.0, 0.0], 1);
    let v = action_loss(&p, &[0.0], &[1.0], &[1.0, 0.0]).unwrap();
    let expected = 0.5 * -(0.9f64.ln()) + 0.5 * -(0.5f64.ln());
    assert_abs_diff_eq!(v, expected, epsilon = 1e-12);
    assert_abs_diff_eq!(v, 0.3993, epsilon = 1e-4);
}

#[test]
fn non_one_hot_target_is_rejected() {
    let p = single_leaf(vec![0.0, 0.0], 1);
    assert!(action_loss(&p, &[0.0], &[0.0], &[0.5, 0.5]).is_err());
    assert!(action_loss(&p, &[0.0], &[0.0], &[1.0, 1.0]).is_err());
    assert!(action_loss(&p, &[0.0], &[0.0], &[1.0]).is_err());
}

#[test]
fn split_penalty_examples() {
    let lambda = 0.1;
    let balanced = stump(vec![0.0, 0.0], 0.0, vec![0.0, 0.0], vec![0.0, 0.0], 1);
    let xs = vec![vec![0.0, 1.0], vec![0.0, -3.0]];
    assert_abs_diff_eq!(split_regularizer(&balanced, &xs, lambda).unwrap(), lambda * 2f64.ln(), epsilon = 1e-15);
    assert_eq!(split_regularizer(&balanced, &xs, 0.0).unwrap(), 0.0);
    // everything goes right: α clamps at 1 − 1e-6
    let right = stump(vec![0.0, 0.0], 100.0, vec![0.0, 0.0], vec![0.0, 0.0], 1);
    let v = split_regularizer(&right, &xs, lambda).unwrap();
    let expected = -lambda * 0.5 * ((1.0 - 1e-6f64).ln() + 1e-6f64.ln());
    assert_abs_diff_eq!(v, expected, epsilon = 1e-9);
    assert_abs_diff_eq!(v / lambda, 6.9078, epsilon = 1e-4);
}

#[test]
fn l1_examples() {
    let zero = stump(vec![0.0, 0.0], 3.0, vec![0.0, 0.0], vec![0.0, 0.0], 1);
    assert_eq!(l1_penalty(&zero), 0.0);
    let one = stump(vec![1.0, -2.0], 5.0, vec![0.0, 0.0], vec![0.0, 0.0], 1);
    assert_eq!(l1_penalty(&one), 3.0);

    let dims = Dims { obs: 1, actions: 2, history: 0 };
    let two = TreePolicy::new(
        TreeTopology::complete(2),
        ParamSet {
            nodes: vec![
                NodeParams::Inner(InnerParams::linear(vec![0.5], 0.0)),
                NodeParams::Inner(InnerParams::linear(vec![-0.5], 1.0)),
                leaf(vec![0.0, 0.0], dims),
                leaf(vec![0.0, 0.0], dims),
                NodeParams::Inner(InnerParams::linear(vec![0.0], 0.0)),
                leaf(vec![0.0, 0.0], dims),
                leaf(vec![0.0, 0.0], dims),
            ],
        },
        dims,
        RecurrenceModel::FixedTanh,
        Normalizer::identity(1),
    )
    .unwrap();
    assert_eq!(l1_penalty(&two), 1.0);
}

#[test]
fn evolution_examples() {
    // θ_z = 0 ⇒ z̃ = 0
    let p = stump(vec![0.0, 1.0, 1.0], 0.0, vec![1.0, 0.0], vec![0.0, 1.0], 1);
    let e = evolution_loss(&p, &[0.0], &[0.3, 0.2], &[1.0, 0.0]).unwrap();
    assert_abs_diff_eq!(e.mse, 1.0, epsilon = 1e-15);
    assert!(e.kl > 0.0);
    let same = evolution_loss(&p, &[0.0], &[0.3, 0.2], &[0.0, 0.0]).unwrap();
    assert_eq!(same.mse, 0.0);
    assert_abs_diff_eq!(same.kl, 0.0, epsilon = 1e-15);

    let leaf_only = single_leaf(vec![0.4, -1.0], 2);
    assert_abs_diff_eq!(evolution_loss(&leaf_only, &[0.0], &[1.0, 2.0], &[-3.0, 4.0]).unwrap().kl, 0.0, epsilon = 1e-15);
}

#[test]
fn trajectory_loss_examples() {
    let p = single_leaf(vec![0.0, 0.0], 1);
    let t = Trajectory { id: "a".into(), observations: vec![vec![2.0]], actions: vec![1], hidden: None };
    let l = trajectory_loss(&p, &t, &TrainingConfig::default()).unwrap();
    assert_eq!((l.evolution_mse, l.evolution_kl), (0.0, 0.0));
    assert_abs_diff_eq!(l.action_loss, 2f64.ln(), epsilon = 1e-15);

    let t3 = Trajectory {
        id: "b".into(),
        observations: vec![vec![2.0], vec![-1.0], vec![0.5]],
        actions: vec![1, 0, 0],
        hidden: None,
    };
    let l = trajectory_loss(&p, &t3, &TrainingConfig::default()).unwrap();
    assert_abs_diff_eq!(l.action_loss, 2f64.ln(), epsilon = 1e-15);
}

#[test]
fn two_step_loss_matches_manual_unroll() {
    // gate reads both h and z; the leaves emit different histories
    let dims = Dims { obs: 1, actions: 2, history: 1 };
    let mut l0 = LeafParams::zeros(dims, RecurrenceModel::FixedTanh);
    l0.theta_a = vec![1.0, 0.0];
    l0.theta_h = vec![0.5];
    l0.theta_z = vec![0.2];
    let mut l1 = LeafParams::zeros(dims, RecurrenceModel::FixedTanh);
    l1.theta_a = vec![0.0, 2.0];
    l1.theta_h = vec![-1.0];
    l1.theta_z = vec![-0.4];
    let p = TreePolicy::new(
        TreeTopology::complete(1),
        ParamSet {
            nodes: vec![
                NodeParams::Inner(InnerParams::linear(vec![2.0, 1.0], 0.1)),
                NodeParams::Leaf(l0.clone()),
                NodeParams::Leaf(l1.clone()),
            ],
        },
        dims,
        RecurrenceModel::FixedTanh,
        Normalizer::identity(1),
    )
    .unwrap();
    let z = [0.3, -0.6];
    let acts = [0usize, 1];
    let cfg = TrainingConfig { delta1: 0.5, delta2: 0.25, lambda: 0.0, ..Default::default() };

    let sig = |s: f64| 1.0 / (1.0 + (-s).exp());
    let sm = |t: &[f64]| {
        let e: Vec<f64> = t.iter().map(|v| v.exp()).collect();
        let s: f64 = e.iter().sum();
        e.into_iter().map(|v| v / s).collect::<Vec<f64>>()
    };
    let (a0, a1) = (sm(&l0.theta_a), sm(&l1.theta_a));
    let paths = |h: f64, z: f64| {
        let g = sig(2.0 * h + z + 0.1);
        (1.0 - g, g)
    };
    let pi = |h: f64, z: f64| {
        let (p0, p1) = paths(h, z);
        [p0 * a0[0] + p1 * a1[0], p0 * a0[1] + p1 * a1[1]]
    };
    // step 1
    let (p0, p1) = paths(0.0, z[0]);
    let ce1 = -(p0 * a0[acts[0]].ln() + p1 * a1[acts[0]].ln());
    let h2 = p0 * 0.5f64.tanh() + p1 * (-1.0f64).tanh();
    let zt = p0 * 0.2f64.tanh() + p1 * (-0.4f64).tanh();
    let mse = (z[1] - zt).powi(2);
    let (pt, qt) = (pi(h2, z[1]), pi(h2, zt));
    let kl: f64 = (0..2).map(|k| pt[k] * (pt[k].ln() - qt[k].ln())).sum();
    // step 2
    let (q0, q1) = paths(h2, z[1]);
    let ce2 = -(q0 * a0[acts[1]].ln() + q1 * a1[acts[1]].ln());

    let prep = Prepared { z: z.iter().map(|&v| vec![v]).collect(), actions: acts.to_vec() };
    let l = batch_loss(&p, &[&prep], &cfg).unwrap();
    assert_abs_diff_eq!(l.action_loss, (ce1 + ce2) / 2.0, epsilon = 1e-12);
    assert_abs_diff_eq!(l.evolution_mse, mse / 2.0, epsilon = 1e-12);
    assert_abs_diff_eq!(l.evolution_kl, kl / 2.0, epsilon = 1e-12);
    let total = l.action_loss + 0.5 * l.evolution_mse + 0.25 * l.evolution_kl + l.split_loss;
    assert_abs_diff_eq!(l.total, total, epsilon = 1e-15);
}

#[test]
fn single_step_loss_is_plain_cross_entropy() {
    let p = stump(vec![0.3, -1.2], 0.4, vec![0.7, -0.1], vec![-0.5, 0.9], 1);
    let prep = Prepared { z: vec![vec![0.8]], actions: vec![1] };
    let l = batch_loss(&p, &[&prep], &quiet()).unwrap();
    let direct = action_loss(&p, &[0.0], &[0.8], &[0.0, 1.0]).unwrap();
    assert_eq!(l.total, direct);
    assert_eq!(l.total, l.action_loss);
}

fn static_set(n: usize, f: impl Fn(f64) -> usize, seed: u64) -> Vec<Prepared> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let z: f64 = rng.random_range(-2.0..2.0);
            Prepared { z: vec![vec![z]], actions: vec![f(z)] }
        })
        .collect()
}

#[test]
fn constant_target_collapses_to_marginal() {
    let p = single_leaf(vec![0.0, 0.0], 1);
    let train = static_set(64, |_| 0, 1);
    let val = static_set(16, |_| 0, 2);
    let cfg = TrainingConfig { learning_rate: 0.1, ..quiet() };
    let (trained, _) = train_fixed_topology(&p, &train, &val, &cfg, Scope::All).unwrap();
    let out = trained.step_normalized(&[0.0], &[0.0], Mode::Soft).unwrap();
    assert!(out.action_dist[0] >= 0.99, "{:?}", out.action_dist);
}

#[test]
fn separable_static_data_is_learned_by_a_stump() {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let dims = Dims { obs: 1, actions: 2, history: 1 };
    let p = TreePolicy::random(
        TreeTopology::complete(1),
        dims,
        RecurrenceModel::FixedTanh,
        poetree::tree::GateKind::Linear,
        Normalizer::identity(1),
        0.1,
        &mut rng,
    )
    .unwrap();
    let rule = |z: f64| usize::from(z > 0.0);
    let train = static_set(400, rule, 4);
    let val = static_set(100, rule, 5);
    let test = static_set(400, rule, 6);
    let cfg = TrainingConfig { learning_rate: 0.05, ..quiet() };
    let (trained, _) = train_fixed_topology(&p, &train, &val, &cfg, Scope::All).unwrap();
    let correct = test
        .iter()
        .filter(|t| {
            let out = trained.step_normalized(&[0.0], &t.z[0], Mode::Hard).unwrap();
            poetree::math::argmax(&out.action_dist) == t.actions[0]
        })
        .count();
    assert!(correct as f64 / test.len() as f64 >= 0.98, "accuracy {}", correct as f64 / 400.0);
}

#[test]
fn subtree_scope_freezes_everything_else() {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
    let dims = Dims { obs: 1, actions: 2, history: 1 };
    let p = TreePolicy::random(
        TreeTopology::complete(2),
        dims,
        RecurrenceModel::FixedTanh,
        poetree::tree::GateKind::Linear,
        Normalizer::identity(1),
        0.1,
        &mut rng,
    )
    .unwrap();
    let rule = |z: f64| usize::from(z > 0.5);
    let (train, val) = (static_set(64, rule, 1), static_set(32, rule, 2));
    let cfg = TrainingConfig { learning_rate: 0.05, ..quiet() };
    let (trained, _) = train_fixed_topology(&p, &train, &val, &cfg, Scope::Subtree(4)).unwrap();
    let inside = p.topology().subtree(4);
    for id in 0..p.topology().len() {
        if !inside.contains(&id) {
            assert_eq!(p.params().nodes[id], trained.params().nodes[id], "node {id} changed");
        }
    }
}
