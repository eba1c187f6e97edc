use serde::{Deserialize, Serialize};

use crate::error::{structural, Result};

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TopoKind {
    Inner { left: NodeId, right: NodeId },
    Leaf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopoNode {
    pub parent: Option<NodeId>,
    pub depth: usize,
    #[serde(flatten)]
    pub kind: TopoKind,
}

impl TopoNode {
    pub fn is_leaf(&self) -> bool {
        matches!(self.kind, TopoKind::Leaf)
    }
}

/// Rooted binary tree shape. The root is node 0 and every parent id is
/// smaller than its children's ids, so ascending id order is a valid
/// top-down traversal and descending order a bottom-up one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeTopology {
    nodes: Vec<TopoNode>,
}

impl TreeTopology {
    pub fn single_leaf() -> Self {
        Self { nodes: vec![TopoNode { parent: None, depth: 0, kind: TopoKind::Leaf }] }
    }

    /// Complete binary tree with all leaves at `depth`, numbered in preorder.
    pub fn complete(depth: usize) -> Self {
        fn build(nodes: &mut Vec<TopoNode>, parent: Option<NodeId>, depth: usize, max: usize) -> NodeId {
            let id = nodes.len();
            nodes.push(TopoNode { parent, depth, kind: TopoKind::Leaf });
            if depth < max {
                let left = build(nodes, Some(id), depth + 1, max);
                let right = build(nodes, Some(id), depth + 1, max);
                nodes[id].kind = TopoKind::Inner { left, right };
            }
            id
        }
        let mut nodes = Vec::new();
        build(&mut nodes, None, 0, depth);
        Self { nodes }
    }

    /// Builds from raw node records and checks the tree invariants.
    pub fn from_nodes(nodes: Vec<TopoNode>) -> Result<Self> {
        let t = Self { nodes };
        t.validate()?;
        Ok(t)
    }

    pub fn nodes(&self) -> &[TopoNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &TopoNode {
        &self.nodes[id]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root(&self) -> NodeId {
        0
    }

    pub fn is_leaf(&self, id: NodeId) -> bool {
        self.nodes[id].is_leaf()
    }

    pub fn children(&self, id: NodeId) -> Option<(NodeId, NodeId)> {
        match self.nodes[id].kind {
            TopoKind::Inner { left, right } => Some((left, right)),
            TopoKind::Leaf => None,
        }
    }

    /// Leaf ids in ascending order.
    pub fn leaves(&self) -> Vec<NodeId> {
        (0..self.nodes.len()).filter(|&i| self.is_leaf(i)).collect()
    }

    pub fn inner_nodes(&self) -> Vec<NodeId> {
        (0..self.nodes.len()).filter(|&i| !self.is_leaf(i)).collect()
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }

    pub fn n_inner(&self) -> usize {
        self.nodes.len() - self.n_leaves()
    }

    /// Maximum node depth (root depth 0).
    pub fn depth(&self) -> usize {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }

    /// `id` and all of its descendants.
    pub fn subtree(&self, id: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(n) = stack.pop() {
            out.push(n);
            if let Some((l, r)) = self.children(n) {
                stack.push(r);
                stack.push(l);
            }
        }
        out
    }

    pub fn sibling(&self, id: NodeId) -> Option<NodeId> {
        let p = self.nodes[id].parent?;
        let (l, r) = self.children(p)?;
        Some(if l == id { r } else { l })
    }

    /// Ancestors of `id` paired with whether the path turns right at them,
    /// ordered from the root down.
    pub fn path_to(&self, id: NodeId) -> Vec<(NodeId, bool)> {
        let mut out = Vec::new();
        let mut cur = id;
        while let Some(p) = self.nodes[cur].parent {
            let (_, r) = self.children(p).expect("parent must be inner");
            out.push((p, r == cur));
            cur = p;
        }
        out.reverse();
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(structural("topology has no nodes"));
        }
        if self.nodes[0].parent.is_some() || self.nodes[0].depth != 0 {
            return Err(structural("node 0 must be the root at depth 0"));
        }
        let mut seen_as_child = vec![false; self.nodes.len()];
        for (id, node) in self.nodes.iter().enumerate() {
            if let TopoKind::Inner { left, right } = node.kind {
                for c in [left, right] {
                    if c >= self.nodes.len() || c <= id {
                        return Err(structural(format!("node {id}: child {c} out of order or range")));
                    }
                    if seen_as_child[c] {
                        return Err(structural(format!("node {c} has two parents")));
                    }
                    seen_as_child[c] = true;
                    let child = &self.nodes[c];
                    if child.parent != Some(id) || child.depth != node.depth + 1 {
                        return Err(structural(format!("node {c}: inconsistent parent/depth")));
                    }
                }
                if left == right {
                    return Err(structural(format!("node {id}: identical children")));
                }
            }
        }
        if let Some(orphan) = (1..self.nodes.len()).find(|&i| !seen_as_child[i]) {
            return Err(structural(format!("node {orphan} is unreachable from the root")));
        }
        Ok(())
    }

    /// Turns leaf `id` into an inner node with two fresh leaves appended at
    /// the end. Returns the (left, right) child ids.
    pub(crate) fn split(&mut self, id: NodeId) -> Result<(NodeId, NodeId)> {
        if !self.is_leaf(id) {
            return Err(structural(format!("node {id} is not a leaf")));
        }
        let depth = self.nodes[id].depth + 1;
        let left = self.nodes.len();
        let right = left + 1;
        for _ in 0..2 {
            self.nodes.push(TopoNode { parent: Some(id), depth, kind: TopoKind::Leaf });
        }
        self.nodes[id].kind = TopoKind::Inner { left, right };
        Ok((left, right))
    }

    /// Removes `leaf` and its parent, promoting the sibling subtree into the
    /// parent's place. Nodes are renumbered in preorder; the returned vector
    /// maps old ids to new ids (`None` for removed nodes).
    pub(crate) fn collapse_leaf(&mut self, leaf: NodeId) -> Result<Vec<Option<NodeId>>> {
        if !self.is_leaf(leaf) {
            return Err(structural(format!("node {leaf} is not a leaf")));
        }
        let parent = self.nodes[leaf]
            .parent
            .ok_or_else(|| structural("cannot collapse the root leaf"))?;
        let sibling = self.sibling(leaf).expect("non-root leaf has a sibling");
        let new_root = match self.nodes[parent].parent {
            None => sibling,
            Some(g) => {
                if let TopoKind::Inner { left, right } = &mut self.nodes[g].kind {
                    if *left == parent {
                        *left = sibling;
                    } else {
                        *right = sibling;
                    }
                }
                self.nodes[sibling].parent = Some(g);
                0
            }
        };
        Ok(self.renumber_from(new_root))
    }

    fn renumber_from(&mut self, root: NodeId) -> Vec<Option<NodeId>> {
        let mut order = Vec::new();
        let mut stack = vec![root];
        while let Some(n) = stack.pop() {
            order.push(n);
            if let Some((l, r)) = self.children(n) {
                stack.push(r);
                stack.push(l);
            }
        }
        let mut map = vec![None; self.nodes.len()];
        for (new, &old) in order.iter().enumerate() {
            map[old] = Some(new);
        }
        let mut nodes: Vec<TopoNode> = Vec::with_capacity(order.len());
        for &old in &order {
            let kind = match self.nodes[old].kind {
                TopoKind::Inner { left, right } => TopoKind::Inner {
                    left: map[left].unwrap(),
                    right: map[right].unwrap(),
                },
                TopoKind::Leaf => TopoKind::Leaf,
            };
            let parent = if old == root { None } else { self.nodes[old].parent.and_then(|p| map[p]) };
            let depth = parent.map_or(0, |p| nodes[p].depth + 1);
            nodes.push(TopoNode { parent, depth, kind });
        }
        self.nodes = nodes;
        map
    }
}
