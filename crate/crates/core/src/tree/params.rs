use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::Dims;

/// Leaf history recurrence. Per-leaf parameters are θ_h ∈ R^M plus, depending
/// on the variant, an element-wise or matrix history weight θ_r and an
/// observation weight θ_f ∈ R^{M×D}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecurrenceModel {
    /// h' = softmax(θ_h)
    FixedSoftmax,
    /// h' = tanh(θ_h)
    FixedTanh,
    /// h' = tanh(θ_h + θ_r ⊙ h)
    VecHist,
    /// h' = tanh(θ_h + θ_f z)
    MatrixObs,
    /// h' = tanh(θ_h + θ_r ⊙ h + θ_f z)
    RnnVecHist,
    /// h' = tanh(θ_h + θ_r h)
    MatrixHist,
    /// h' = tanh(θ_h + θ_r h + θ_f z)
    Rnn,
}

impl Default for RecurrenceModel {
    fn default() -> Self {
        RecurrenceModel::FixedTanh
    }
}

impl RecurrenceModel {
    pub const ALL: [RecurrenceModel; 7] = [
        RecurrenceModel::FixedSoftmax,
        RecurrenceModel::FixedTanh,
        RecurrenceModel::VecHist,
        RecurrenceModel::MatrixObs,
        RecurrenceModel::RnnVecHist,
        RecurrenceModel::MatrixHist,
        RecurrenceModel::Rnn,
    ];

    pub fn theta_r_len(self, m: usize) -> usize {
        match self {
            RecurrenceModel::VecHist | RecurrenceModel::RnnVecHist => m,
            RecurrenceModel::MatrixHist | RecurrenceModel::Rnn => m * m,
            _ => 0,
        }
    }

    pub fn theta_f_len(self, m: usize, d: usize) -> usize {
        match self {
            RecurrenceModel::MatrixObs | RecurrenceModel::RnnVecHist | RecurrenceModel::Rnn => m * d,
            _ => 0,
        }
    }

    pub fn matrix_history(self) -> bool {
        matches!(self, RecurrenceModel::MatrixHist | RecurrenceModel::Rnn)
    }

    pub fn depends_on_input(self) -> bool {
        !matches!(self, RecurrenceModel::FixedSoftmax | RecurrenceModel::FixedTanh)
    }

    pub fn parse(s: &str) -> Option<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string())).ok()
    }

    pub fn name(self) -> &'static str {
        match self {
            RecurrenceModel::FixedSoftmax => "fixed_softmax",
            RecurrenceModel::FixedTanh => "fixed_tanh",
            RecurrenceModel::VecHist => "vec_hist",
            RecurrenceModel::MatrixObs => "matrix_obs",
            RecurrenceModel::RnnVecHist => "rnn_vec_hist",
            RecurrenceModel::MatrixHist => "matrix_hist",
            RecurrenceModel::Rnn => "rnn",
        }
    }
}

/// Which gating function inner nodes use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateKind {
    /// σ(xᵀw + b) over the concatenated [h; z].
    #[default]
    Linear,
    /// σ(hᵀw' + b') · ∏_i σ(z_i w_i + b_i): axis-aligned soft AND over observations.
    SoftAnd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearGate {
    pub w: Vec<f64>,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftAndGate {
    pub w_hist: Vec<f64>,
    pub b_hist: f64,
    pub w_obs: Vec<f64>,
    pub b_obs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "gate", rename_all = "snake_case")]
pub enum InnerParams {
    Linear(LinearGate),
    SoftAnd(SoftAndGate),
}

impl InnerParams {
    pub fn linear(w: Vec<f64>, b: f64) -> Self {
        InnerParams::Linear(LinearGate { w, b })
    }

    pub fn input_len(&self) -> usize {
        match self {
            InnerParams::Linear(g) => g.w.len(),
            InnerParams::SoftAnd(g) => g.w_hist.len() + g.w_obs.len(),
        }
    }

    pub fn kind(&self) -> GateKind {
        match self {
            InnerParams::Linear(_) => GateKind::Linear,
            InnerParams::SoftAnd(_) => GateKind::SoftAnd,
        }
    }

    /// Gate weights excluding biases (the L1-penalized set).
    pub fn weights(&self) -> Vec<&[f64]> {
        match self {
            InnerParams::Linear(g) => vec![&g.w],
            InnerParams::SoftAnd(g) => vec![&g.w_hist, &g.w_obs],
        }
    }

    fn slices_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        match self {
            InnerParams::Linear(g) => vec![("w", &mut g.w[..]), ("b", std::slice::from_mut(&mut g.b))],
            InnerParams::SoftAnd(g) => vec![
                ("w_hist", &mut g.w_hist[..]),
                ("b_hist", std::slice::from_mut(&mut g.b_hist)),
                ("w_obs", &mut g.w_obs[..]),
                ("b_obs", &mut g.b_obs[..]),
            ],
        }
    }

    fn slices(&self) -> Vec<(&'static str, &[f64])> {
        match self {
            InnerParams::Linear(g) => vec![("w", &g.w[..]), ("b", std::slice::from_ref(&g.b))],
            InnerParams::SoftAnd(g) => vec![
                ("w_hist", &g.w_hist[..]),
                ("b_hist", std::slice::from_ref(&g.b_hist)),
                ("w_obs", &g.w_obs[..]),
                ("b_obs", &g.b_obs[..]),
            ],
        }
    }

    pub(crate) fn random<R: Rng + ?Sized>(kind: GateKind, dims: Dims, std: f64, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, std).expect("finite std");
        let mut draw = |n: usize| (0..n).map(|_| normal.sample(rng)).collect::<Vec<f64>>();
        match kind {
            GateKind::Linear => InnerParams::linear(draw(dims.history + dims.obs), 0.0),
            GateKind::SoftAnd => InnerParams::SoftAnd(SoftAndGate {
                w_hist: draw(dims.history),
                b_hist: 0.0,
                w_obs: draw(dims.obs),
                b_obs: vec![0.0; dims.obs],
            }),
        }
    }
}

/// Per-leaf parameters. Matrices are stored row-major: θ_r is M×M, θ_f is M×D.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafParams {
    pub theta_a: Vec<f64>,
    pub theta_h: Vec<f64>,
    #[serde(default)]
    pub theta_r: Vec<f64>,
    #[serde(default)]
    pub theta_f: Vec<f64>,
    pub theta_z: Vec<f64>,
}

impl LeafParams {
    pub fn zeros(dims: Dims, model: RecurrenceModel) -> Self {
        Self {
            theta_a: vec![0.0; dims.actions],
            theta_h: vec![0.0; dims.history],
            theta_r: vec![0.0; model.theta_r_len(dims.history)],
            theta_f: vec![0.0; model.theta_f_len(dims.history, dims.obs)],
            theta_z: vec![0.0; dims.obs],
        }
    }

    pub(crate) fn random<R: Rng + ?Sized>(dims: Dims, model: RecurrenceModel, std: f64, rng: &mut R) -> Self {
        let mut leaf = Self::zeros(dims, model);
        leaf.perturb(std, rng);
        leaf
    }

    /// Adds independent N(0, std²) noise to every entry.
    pub(crate) fn perturb<R: Rng + ?Sized>(&mut self, std: f64, rng: &mut R) {
        if std == 0.0 {
            return;
        }
        let normal = Normal::new(0.0, std).expect("finite std");
        for (_, s) in self.slices_mut() {
            for v in s.iter_mut() {
                *v += normal.sample(rng);
            }
        }
    }

    pub fn shape_matches(&self, dims: Dims, model: RecurrenceModel) -> bool {
        self.theta_a.len() == dims.actions
            && self.theta_h.len() == dims.history
            && self.theta_r.len() == model.theta_r_len(dims.history)
            && self.theta_f.len() == model.theta_f_len(dims.history, dims.obs)
            && self.theta_z.len() == dims.obs
    }

    fn slices_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        vec![
            ("theta_a", &mut self.theta_a[..]),
            ("theta_h", &mut self.theta_h[..]),
            ("theta_r", &mut self.theta_r[..]),
            ("theta_f", &mut self.theta_f[..]),
            ("theta_z", &mut self.theta_z[..]),
        ]
    }

    fn slices(&self) -> Vec<(&'static str, &[f64])> {
        vec![
            ("theta_a", &self.theta_a[..]),
            ("theta_h", &self.theta_h[..]),
            ("theta_r", &self.theta_r[..]),
            ("theta_f", &self.theta_f[..]),
            ("theta_z", &self.theta_z[..]),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum NodeParams {
    Inner(InnerParams),
    Leaf(LeafParams),
}

impl NodeParams {
    pub fn as_inner(&self) -> Option<&InnerParams> {
        match self {
            NodeParams::Inner(p) => Some(p),
            NodeParams::Leaf(_) => None,
        }
    }

    pub fn as_leaf(&self) -> Option<&LeafParams> {
        match self {
            NodeParams::Leaf(p) => Some(p),
            NodeParams::Inner(_) => None,
        }
    }

    pub fn as_inner_mut(&mut self) -> Option<&mut InnerParams> {
        match self {
            NodeParams::Inner(p) => Some(p),
            NodeParams::Leaf(_) => None,
        }
    }

    pub fn as_leaf_mut(&mut self) -> Option<&mut LeafParams> {
        match self {
            NodeParams::Leaf(p) => Some(p),
            NodeParams::Inner(_) => None,
        }
    }

    pub fn slices(&self) -> Vec<(&'static str, &[f64])> {
        match self {
            NodeParams::Inner(p) => p.slices(),
            NodeParams::Leaf(p) => p.slices(),
        }
    }

    pub fn slices_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        match self {
            NodeParams::Inner(p) => p.slices_mut(),
            NodeParams::Leaf(p) => p.slices_mut(),
        }
    }

    pub fn count(&self) -> usize {
        self.slices().iter().map(|(_, s)| s.len()).sum()
    }
}

/// All trainable parameters Θ, indexed by node id. Also used as the
/// gradient container, since gradients share Θ's shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    pub nodes: Vec<NodeParams>,
}

impl ParamSet {
    /// Same shape, every entry zero.
    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        out.fill(0.0);
        out
    }

    pub fn fill(&mut self, value: f64) {
        for node in &mut self.nodes {
            for (_, s) in node.slices_mut() {
                s.iter_mut().for_each(|v| *v = value);
            }
        }
    }

    pub fn count(&self) -> usize {
        self.nodes.iter().map(NodeParams::count).sum()
    }

    /// Concatenation of every parameter in node order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.count());
        for node in &self.nodes {
            for (_, s) in node.slices() {
                out.extend_from_slice(s);
            }
        }
        out
    }

    /// Inverse of [`flatten`](Self::flatten). Panics on length mismatch.
    pub fn load_flat(&mut self, flat: &[f64]) {
        let mut i = 0;
        for node in &mut self.nodes {
            for (_, s) in node.slices_mut() {
                s.copy_from_slice(&flat[i..i + s.len()]);
                i += s.len();
            }
        }
        assert_eq!(i, flat.len(), "flat parameter length mismatch");
    }

    /// Human-readable label of each flat index, e.g. `node3.theta_a[1]`.
    pub fn labels(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.count());
        for (id, node) in self.nodes.iter().enumerate() {
            for (name, s) in node.slices() {
                for k in 0..s.len() {
                    out.push(format!("node{id}.{name}[{k}]"));
                }
            }
        }
        out
    }

    /// Node id owning each flat index.
    pub fn owners(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.count());
        for (id, node) in self.nodes.iter().enumerate() {
            out.extend(std::iter::repeat(id).take(node.count()));
        }
        out
    }

    pub fn add_scaled(&mut self, other: &ParamSet, scale: f64) {
        for (a, b) in self.nodes.iter_mut().zip(&other.nodes) {
            for ((_, x), (_, y)) in a.slices_mut().into_iter().zip(b.slices()) {
                for (xi, yi) in x.iter_mut().zip(y) {
                    *xi += scale * yi;
                }
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.nodes
            .iter()
            .all(|n| n.slices().iter().all(|(_, s)| s.iter().all(|v| v.is_finite())))
    }

    /// Label of the first non-finite entry, if any.
    pub fn first_non_finite(&self) -> Option<String> {
        let flat = self.flatten();
        flat.iter().position(|v| !v.is_finite()).map(|i| self.labels()[i].clone())
    }
}
