//! Recurrent soft decision trees: structure, parameters and forward passes.

mod forward;
mod params;
mod recurrence;
mod topology;

pub use forward::{gate_probability, leaf_action_distribution, Mode, StepOutput};
pub(crate) use forward::{gate_backward, LeafCache};
pub use params::{
    GateKind, InnerParams, LeafParams, LinearGate, NodeParams, ParamSet, RecurrenceModel, SoftAndGate,
};
pub use recurrence::leaf_history;
pub(crate) use recurrence::{leaf_history_backward, leaf_history_into};
pub use topology::{NodeId, TopoKind, TopoNode, TreeTopology};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Normalizer;
use crate::error::{structural, Result};

pub const DEFAULT_MAX_DEPTH: usize = 5;
pub const DEFAULT_HISTORY_DIM: usize = 8;

/// Observation dimension D, action count K and history dimension M.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub obs: usize,
    pub actions: usize,
    pub history: usize,
}

impl Dims {
    pub fn input(&self) -> usize {
        self.history + self.obs
    }
}

/// A recurrent soft decision tree policy: topology, parameters Θ and the
/// observation normalization it was trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct TreePolicy {
    pub(crate) topology: TreeTopology,
    pub(crate) params: ParamSet,
    pub(crate) dims: Dims,
    pub(crate) recurrence: RecurrenceModel,
    pub(crate) normalizer: Normalizer,
}

impl TreePolicy {
    pub fn new(
        topology: TreeTopology,
        params: ParamSet,
        dims: Dims,
        recurrence: RecurrenceModel,
        normalizer: Normalizer,
    ) -> Result<Self> {
        let p = Self { topology, params, dims, recurrence, normalizer };
        p.validate()?;
        Ok(p)
    }

    /// Random parameters on a given topology: gate weights and leaf
    /// parameters ~ N(0, std²), biases zero.
    pub fn random<R: Rng + ?Sized>(
        topology: TreeTopology,
        dims: Dims,
        recurrence: RecurrenceModel,
        gate: GateKind,
        normalizer: Normalizer,
        std: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let nodes = topology
            .nodes()
            .iter()
            .map(|n| {
                if n.is_leaf() {
                    NodeParams::Leaf(LeafParams::random(dims, recurrence, std, rng))
                } else {
                    NodeParams::Inner(InnerParams::random(gate, dims, std, rng))
                }
            })
            .collect();
        Self::new(topology, ParamSet { nodes }, dims, recurrence, normalizer)
    }

    pub fn validate(&self) -> Result<()> {
        self.topology.validate()?;
        if self.params.nodes.len() != self.topology.len() {
            return Err(structural(format!(
                "{} parameter records for {} nodes",
                self.params.nodes.len(),
                self.topology.len()
            )));
        }
        if self.dims.actions == 0 || self.dims.obs == 0 {
            return Err(structural("observation and action dimensions must be positive"));
        }
        for (id, (node, p)) in self.topology.nodes().iter().zip(&self.params.nodes).enumerate() {
            match (node.is_leaf(), p) {
                (true, NodeParams::Leaf(l)) => {
                    if !l.shape_matches(self.dims, self.recurrence) {
                        return Err(structural(format!("leaf {id}: parameter shapes do not match dims/recurrence")));
                    }
                }
                (false, NodeParams::Inner(inner)) => {
                    let ok = match inner {
                        InnerParams::Linear(g) => g.w.len() == self.dims.input(),
                        InnerParams::SoftAnd(g) => {
                            g.w_hist.len() == self.dims.history
                                && g.w_obs.len() == self.dims.obs
                                && g.b_obs.len() == self.dims.obs
                        }
                    };
                    if !ok {
                        return Err(structural(format!("inner node {id}: gate has wrong input length")));
                    }
                }
                _ => return Err(structural(format!("node {id}: parameter kind does not match topology"))),
            }
        }
        if !self.params.all_finite() {
            return Err(structural(format!(
                "non-finite parameter {}",
                self.params.first_non_finite().unwrap_or_default()
            )));
        }
        if self.normalizer.dim() != self.dims.obs || self.normalizer.std.iter().any(|&s| !(s > 0.0)) {
            return Err(structural("normalization stats must have D entries with positive std"));
        }
        Ok(())
    }

    pub fn topology(&self) -> &TreeTopology {
        &self.topology
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    /// Replaces Θ after checking that the shape is unchanged.
    pub fn set_params(&mut self, params: ParamSet) -> Result<()> {
        let old = std::mem::replace(&mut self.params, params);
        if let Err(e) = self.validate() {
            self.params = old;
            return Err(e);
        }
        Ok(())
    }

    pub(crate) fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn recurrence(&self) -> RecurrenceModel {
        self.recurrence
    }

    pub fn normalizer(&self) -> &Normalizer {
        &self.normalizer
    }

    pub fn inner(&self, id: NodeId) -> Option<&InnerParams> {
        self.params.nodes.get(id).and_then(NodeParams::as_inner)
    }

    pub fn leaf(&self, id: NodeId) -> Option<&LeafParams> {
        self.params.nodes.get(id).and_then(NodeParams::as_leaf)
    }

    pub fn param_count(&self) -> usize {
        self.params.count()
    }

    pub fn depth(&self) -> usize {
        self.topology.depth()
    }

    /// Sum of |w| over every inner gate (biases excluded).
    pub fn l1_norm(&self) -> f64 {
        self.params
            .nodes
            .iter()
            .filter_map(NodeParams::as_inner)
            .flat_map(|p| p.weights().into_iter().flat_map(|w| w.iter()))
            .map(|w| w.abs())
            .sum()
    }

    /// Splits a leaf: it becomes an inner node and both new children start
    /// as copies of it. The new gate is supplied by the caller.
    pub(crate) fn split_leaf_with(
        &mut self,
        leaf: NodeId,
        gate: InnerParams,
    ) -> Result<(NodeId, NodeId)> {
        let parent = self
            .leaf(leaf)
            .cloned()
            .ok_or_else(|| structural(format!("node {leaf} is not a leaf")))?;
        let (l, r) = self.topology.split(leaf)?;
        self.params.nodes[leaf] = NodeParams::Inner(gate);
        self.params.nodes.push(NodeParams::Leaf(parent.clone()));
        self.params.nodes.push(NodeParams::Leaf(parent));
        Ok((l, r))
    }

    /// Removes `leaf`, promoting its sibling subtree. Returns the old→new id map.
    pub(crate) fn collapse_leaf(&mut self, leaf: NodeId) -> Result<Vec<Option<NodeId>>> {
        let map = self.topology.collapse_leaf(leaf)?;
        let mut nodes: Vec<Option<NodeParams>> = vec![None; self.topology.len()];
        for (old, p) in std::mem::take(&mut self.params.nodes).into_iter().enumerate() {
            if let Some(new) = map[old] {
                nodes[new] = Some(p);
            }
        }
        self.params.nodes = nodes.into_iter().map(|p| p.expect("every kept node has params")).collect();
        Ok(map)
    }
}
