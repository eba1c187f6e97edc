use super::params::{LeafParams, RecurrenceModel};
use crate::error::{structural, Result};
use crate::math::{softmax_backward, softmax_into};

/// Next-history output of one leaf.
///
/// `h_prev` is the history fed into the tree and `z` the (normalized)
/// observation at the same step.
pub fn leaf_history(leaf: &LeafParams, model: RecurrenceModel, h_prev: &[f64], z: &[f64]) -> Result<Vec<f64>> {
    let m = leaf.theta_h.len();
    if h_prev.len() != m {
        return Err(structural(format!("history length {} but leaf expects {}", h_prev.len(), m)));
    }
    if leaf.theta_r.len() != model.theta_r_len(m) {
        return Err(structural(format!("theta_r has {} entries, {:?} needs {}", leaf.theta_r.len(), model, model.theta_r_len(m))));
    }
    let f_len = leaf.theta_f.len();
    if f_len != model.theta_f_len(m, z.len()) {
        return Err(structural(format!("theta_f has {f_len} entries, expected {} for D={}", model.theta_f_len(m, z.len()), z.len())));
    }
    let mut out = vec![0.0; m];
    leaf_history_into(leaf, model, h_prev, z, &mut out);
    Ok(out)
}

/// Unchecked variant used on hot paths after shapes are validated.
pub(crate) fn leaf_history_into(leaf: &LeafParams, model: RecurrenceModel, h: &[f64], z: &[f64], out: &mut [f64]) {
    let m = out.len();
    if model == RecurrenceModel::FixedSoftmax {
        if m > 0 {
            softmax_into(&leaf.theta_h, out);
        }
        return;
    }
    out.copy_from_slice(&leaf.theta_h);
    match model {
        RecurrenceModel::VecHist | RecurrenceModel::RnnVecHist => {
            for i in 0..m {
                out[i] += leaf.theta_r[i] * h[i];
            }
        }
        RecurrenceModel::MatrixHist | RecurrenceModel::Rnn => {
            for i in 0..m {
                let row = &leaf.theta_r[i * m..(i + 1) * m];
                out[i] += row.iter().zip(h).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        _ => {}
    }
    if !leaf.theta_f.is_empty() {
        let d = z.len();
        for i in 0..m {
            let row = &leaf.theta_f[i * d..(i + 1) * d];
            out[i] += row.iter().zip(z).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    for v in out.iter_mut() {
        *v = v.tanh();
    }
}

/// Backward pass of [`leaf_history_into`]: given the leaf output `y` and its
/// adjoint `dy`, accumulates parameter gradients into `grad` and the adjoint
/// of the incoming history into `dh`.
pub(crate) fn leaf_history_backward(
    leaf: &LeafParams,
    model: RecurrenceModel,
    h: &[f64],
    z: &[f64],
    y: &[f64],
    dy: &[f64],
    grad: &mut LeafParams,
    dh: &mut [f64],
) {
    let m = y.len();
    if m == 0 {
        return;
    }
    if model == RecurrenceModel::FixedSoftmax {
        softmax_backward(y, dy, &mut grad.theta_h);
        return;
    }
    let da: Vec<f64> = y.iter().zip(dy).map(|(yi, di)| di * (1.0 - yi * yi)).collect();
    for (g, d) in grad.theta_h.iter_mut().zip(&da) {
        *g += d;
    }
    match model {
        RecurrenceModel::VecHist | RecurrenceModel::RnnVecHist => {
            for i in 0..m {
                grad.theta_r[i] += da[i] * h[i];
                dh[i] += da[i] * leaf.theta_r[i];
            }
        }
        RecurrenceModel::MatrixHist | RecurrenceModel::Rnn => {
            for i in 0..m {
                for j in 0..m {
                    grad.theta_r[i * m + j] += da[i] * h[j];
                    dh[j] += da[i] * leaf.theta_r[i * m + j];
                }
            }
        }
        _ => {}
    }
    if !leaf.theta_f.is_empty() {
        let d = z.len();
        for i in 0..m {
            for j in 0..d {
                grad.theta_f[i * d + j] += da[i] * z[j];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::Dims;

    fn dims(m: usize, d: usize) -> Dims {
        Dims { obs: d, actions: 2, history: m }
    }

    #[test]
    fn fixed_tanh_of_zero_is_zero() {
        let leaf = LeafParams::zeros(dims(3, 2), RecurrenceModel::FixedTanh);
        let h = leaf_history(&leaf, RecurrenceModel::FixedTanh, &[0.3, -0.2, 0.9], &[5.0, 1.0]).unwrap();
        assert_eq!(h, vec![0.0; 3]);
    }

    #[test]
    fn identity_matrix_recurrence_is_tanh_of_history() {
        let model = RecurrenceModel::MatrixHist;
        let mut leaf = LeafParams::zeros(dims(2, 1), model);
        leaf.theta_r = vec![1.0, 0.0, 0.0, 1.0];
        let h = leaf_history(&leaf, model, &[0.5, 0.5], &[3.0]).unwrap();
        assert!((h[0] - 0.5f64.tanh()).abs() < 1e-15);
        assert!((h[1] - 0.5f64.tanh()).abs() < 1e-15);
    }

    #[test]
    fn rnn_observation_row() {
        let model = RecurrenceModel::Rnn;
        let mut leaf = LeafParams::zeros(dims(2, 2), model);
        leaf.theta_f = vec![1.0, 0.0, 0.0, 0.0];
        let h = leaf_history(&leaf, model, &[0.0, 0.0], &[2.0, 7.0]).unwrap();
        assert!((h[0] - 0.9640275800758169).abs() < 1e-12);
        assert_eq!(h[1], 0.0);
    }

    #[test]
    fn softmax_history_is_simplex() {
        let model = RecurrenceModel::FixedSoftmax;
        let mut leaf = LeafParams::zeros(dims(3, 1), model);
        leaf.theta_h = vec![0.1, 2.0, -1.0];
        let h = leaf_history(&leaf, model, &[0.0; 3], &[0.0]).unwrap();
        assert!((h.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch_is_structural() {
        let leaf = LeafParams::zeros(dims(2, 2), RecurrenceModel::MatrixHist);
        assert!(leaf_history(&leaf, RecurrenceModel::Rnn, &[0.0, 0.0], &[0.0, 0.0]).is_err());
        assert!(leaf_history(&leaf, RecurrenceModel::MatrixHist, &[0.0], &[0.0, 0.0]).is_err());
    }
}
