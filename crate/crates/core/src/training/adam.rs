use crate::tree::ParamSet;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u32,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn steps(&self) -> u32 {
        self.t
    }
}

/// One bias-corrected Adam update. `mask` (same length as the flattened
/// parameters) freezes entries where it is false.
pub fn adam_step(params: &mut ParamSet, grads: &ParamSet, state: &mut AdamState, lr: f64, mask: Option<&[bool]>) {
    let mut theta = params.flatten();
    let g = grads.flatten();
    assert_eq!(theta.len(), g.len(), "gradient shape mismatch");
    assert_eq!(theta.len(), state.m.len(), "optimizer state shape mismatch");
    state.t += 1;
    let bc1 = 1.0 - BETA1.powi(state.t as i32);
    let bc2 = 1.0 - BETA2.powi(state.t as i32);
    for i in 0..theta.len() {
        if mask.is_some_and(|mk| !mk[i]) {
            continue;
        }
        state.m[i] = BETA1 * state.m[i] + (1.0 - BETA1) * g[i];
        state.v[i] = BETA2 * state.v[i] + (1.0 - BETA2) * g[i] * g[i];
        let mhat = state.m[i] / bc1;
        let vhat = state.v[i] / bc2;
        theta[i] -= lr * mhat / (vhat.sqrt() + EPSILON);
    }
    params.load_flat(&theta);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::{LeafParams, NodeParams};

    fn one(v: Vec<f64>) -> ParamSet {
        ParamSet {
            nodes: vec![NodeParams::Leaf(LeafParams {
                theta_a: v,
                theta_h: vec![],
                theta_r: vec![],
                theta_f: vec![],
                theta_z: vec![],
            })],
        }
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = one(vec![0.3, -1.0]);
        let before = p.clone();
        let mut s = AdamState::new(2);
        adam_step(&mut p, &one(vec![0.0, 0.0]), &mut s, 1e-3, None);
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_is_bounded_by_lr() {
        let mut p = one(vec![0.0, 0.0, 0.0]);
        let mut s = AdamState::new(3);
        adam_step(&mut p, &one(vec![5.0, -1e-3, 1e4]), &mut s, 1e-3, None);
        for v in p.flatten() {
            assert!(v.abs() <= 1e-3 * (1.0 + 1e-8));
            assert!(v.abs() > 0.9e-3);
        }
    }

    #[test]
    fn constant_gradient_descends_monotonically() {
        let mut p = one(vec![1.0]);
        let mut s = AdamState::new(1);
        let g = one(vec![2.0]);
        adam_step(&mut p, &g, &mut s, 1e-2, None);
        let a = p.flatten()[0];
        adam_step(&mut p, &g, &mut s, 1e-2, None);
        let b = p.flatten()[0];
        assert!(a < 1.0 && b < a);
    }

    #[test]
    fn mask_freezes_entries() {
        let mut p = one(vec![1.0, 1.0]);
        let mut s = AdamState::new(2);
        adam_step(&mut p, &one(vec![1.0, 1.0]), &mut s, 0.1, Some(&[false, true]));
        let f = p.flatten();
        assert_eq!(f[0], 1.0);
        assert!(f[1] < 1.0);
    }
}
