use super::{AxisAlignedTree, AxisNode, Condition, Direction};
use crate::data::FeatureRanges;

/// Feasible interval of one feature: [lo, hi] with optional strict ends.
#[derive(Debug, Clone, Copy)]
struct Bound {
    lo: f64,
    lo_strict: bool,
    hi: f64,
    hi_strict: bool,
}

impl Bound {
    fn empty(&self) -> bool {
        self.lo > self.hi || (self.lo == self.hi && (self.lo_strict || self.hi_strict))
    }

    fn raise_lo(&mut self, v: f64, strict: bool) {
        if v > self.lo || (v == self.lo && strict) {
            self.lo = v;
            self.lo_strict = strict;
        }
    }

    fn lower_hi(&mut self, v: f64, strict: bool) {
        if v < self.hi || (v == self.hi && strict) {
            self.hi = v;
            self.hi_strict = strict;
        }
    }
}

type Region = Vec<Bound>;

fn holds(region: &mut Region, c: &Condition) {
    let b = &mut region[c.feature];
    match c.direction {
        Direction::Greater => b.raise_lo(c.threshold, true),
        Direction::Less => b.lower_hi(c.threshold, true),
    }
}

fn fails(region: &mut Region, c: &Condition) {
    let b = &mut region[c.feature];
    match c.direction {
        Direction::Greater => b.lower_hi(c.threshold, false),
        Direction::Less => b.raise_lo(c.threshold, false),
    }
}

fn is_empty(region: &Region) -> bool {
    region.iter().any(Bound::empty)
}

/// Rebuilds the subtree at `i` into `out`, skipping branches whose feasible
/// region is empty. Returns the new index.
fn restrict(tree: &AxisAlignedTree, i: usize, region: &Region, out: &mut Vec<AxisNode>) -> usize {
    match &tree.nodes[i] {
        AxisNode::Leaf { .. } => {
            out.push(tree.nodes[i].clone());
            out.len() - 1
        }
        AxisNode::Test { source, conditions, constant, left, right } => {
            if let Some(go_right) = constant {
                return restrict(tree, if *go_right { *right } else { *left }, region, out);
            }
            let mut r_region = region.clone();
            conditions.iter().for_each(|c| holds(&mut r_region, c));
            // the complement of a conjunction is not a box; only single tests refine it
            let mut l_region = region.clone();
            if let [c] = conditions.as_slice() {
                fails(&mut l_region, c);
            }
            match (is_empty(&l_region), is_empty(&r_region)) {
                (_, true) => restrict(tree, *left, &l_region, out),
                (true, false) => restrict(tree, *right, &r_region, out),
                (false, false) => {
                    let at = out.len();
                    out.push(AxisNode::Test {
                        source: *source,
                        conditions: conditions.clone(),
                        constant: None,
                        left: 0,
                        right: 0,
                    });
                    let l = restrict(tree, *left, &l_region, out);
                    let r = restrict(tree, *right, &r_region, out);
                    if let AxisNode::Test { left, right, .. } = &mut out[at] {
                        *left = l;
                        *right = r;
                    }
                    at
                }
            }
        }
    }
}

fn parents(tree: &AxisAlignedTree) -> Vec<Option<usize>> {
    let mut p = vec![None; tree.nodes.len()];
    // stale slots left behind by collapses still point at live nodes
    for i in tree.reachable() {
        if let AxisNode::Test { left, right, .. } = &tree.nodes[i] {
            p[*left] = Some(i);
            p[*right] = Some(i);
        }
    }
    p
}

/// Simplifies an axis-aligned tree: drops branches that no observation
/// within `ranges` can reach (out-of-range thresholds, tests contradicting
/// an ancestor, constant gates), then repeatedly removes the leaf with the
/// smallest share of `val_obs` (raw observations) while that share is below
/// `p_min`. The most visited leaf always survives.
pub fn prune_axis_aligned(tree: &AxisAlignedTree, ranges: &FeatureRanges, val_obs: &[Vec<f64>], p_min: f64) -> AxisAlignedTree {
    let region: Region = ranges
        .min
        .iter()
        .zip(&ranges.max)
        .map(|(&lo, &hi)| Bound { lo, lo_strict: false, hi, hi_strict: false })
        .collect();
    let mut nodes = Vec::with_capacity(tree.nodes.len());
    restrict(tree, 0, &region, &mut nodes);
    let mut out = AxisAlignedTree { timestep: tree.timestep, history: tree.history.clone(), nodes };
    if val_obs.is_empty() {
        return out;
    }

    let counts = |t: &AxisAlignedTree| {
        let mut count = vec![0usize; t.nodes.len()];
        for z in val_obs {
            count[t.route(z)] += 1;
        }
        count
    };
    let leaves_of = |t: &AxisAlignedTree| -> Vec<usize> {
        t.reachable().into_iter().filter(|&i| matches!(t.nodes[i], AxisNode::Leaf { .. })).collect()
    };
    // the initially heaviest leaf (first in preorder on ties) is never removed
    let count = counts(&out);
    let leaves = leaves_of(&out);
    let mut keep = leaves.iter().copied().fold(leaves[0], |best, l| if count[l] > count[best] { l } else { best });
    loop {
        let count = counts(&out);
        let victim = leaves_of(&out)
            .into_iter()
            .filter(|&l| l != keep && (count[l] as f64 / val_obs.len() as f64) < p_min)
            .min_by_key(|&l| count[l]);
        let Some(v) = victim else { break };
        let parent = parents(&out)[v].expect("a non-root leaf has a parent");
        let sibling = match &out.nodes[parent] {
            AxisNode::Test { left, right, .. } => {
                if *left == v {
                    *right
                } else {
                    *left
                }
            }
            AxisNode::Leaf { .. } => unreachable!(),
        };
        out.nodes[parent] = out.nodes[sibling].clone();
        if sibling == keep {
            keep = parent;
        }
    }
    out.compact();
    out
}
