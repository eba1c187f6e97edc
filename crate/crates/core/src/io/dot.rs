use std::fmt::Write as _;

use crate::simplify::{AxisAlignedTree, AxisNode, Condition};

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

fn name_of(names: &[String], i: usize, prefix: &str) -> String {
    names.get(i).cloned().unwrap_or_else(|| format!("{prefix}{i}"))
}

fn condition_label(c: &Condition, features: &[String]) -> String {
    format!("{} {} {:.4}", name_of(features, c.feature, "z"), c.direction.symbol(), c.threshold)
}

/// Renders one `digraph` per tree. The right ("yes") branch is taken when
/// every condition of a test holds.
pub fn axis_trees_to_dot(trees: &[AxisAlignedTree], features: &[String], actions: &[String]) -> String {
    let mut out = String::new();
    for (k, tree) in trees.iter().enumerate() {
        let name = tree.timestep.map_or_else(|| format!("tree_{k}"), |t| format!("t{t}"));
        writeln!(out, "digraph {name} {{").unwrap();
        writeln!(out, "  node [fontname=\"Helvetica\"];").unwrap();
        if let Some(t) = tree.timestep {
            writeln!(out, "  label=\"t = {t}\";").unwrap();
        }
        for (i, node) in tree.nodes.iter().enumerate() {
            match node {
                AxisNode::Test { conditions, constant, left, right, .. } => {
                    let mut label = match constant {
                        Some(true) => "always yes".to_string(),
                        Some(false) => "always no".to_string(),
                        None => String::new(),
                    };
                    let tests: Vec<String> = conditions.iter().map(|c| condition_label(c, features)).collect();
                    if !tests.is_empty() {
                        if !label.is_empty() {
                            label.push_str(" (");
                            label.push_str(&tests.join(" AND "));
                            label.push(')');
                        } else {
                            label = tests.join(" AND ");
                        }
                    }
                    writeln!(out, "  n{i} [shape=box, label=\"{}\"];", escape(&label)).unwrap();
                    writeln!(out, "  n{i} -> n{left} [label=\"no\"];").unwrap();
                    writeln!(out, "  n{i} -> n{right} [label=\"yes\"];").unwrap();
                }
                AxisNode::Leaf { action, probability, .. } => {
                    let label = format!("{}\\np = {:.3}", escape(&name_of(actions, *action, "action ")), probability);
                    writeln!(out, "  n{i} [shape=ellipse, label=\"{label}\"];").unwrap();
                }
            }
        }
        writeln!(out, "}}").unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simplify::Direction;

    #[test]
    fn renders_tests_and_leaves() {
        let tree = AxisAlignedTree {
            timestep: Some(2),
            history: vec![],
            nodes: vec![
                AxisNode::Test {
                    source: 0,
                    conditions: vec![Condition { feature: 0, threshold: 0.5, normalized_threshold: 0.0, direction: Direction::Greater }],
                    constant: None,
                    left: 1,
                    right: 2,
                },
                AxisNode::Leaf { source: 1, action: 0, probability: 0.9 },
                AxisNode::Leaf { source: 2, action: 1, probability: 0.8 },
            ],
        };
        let dot = axis_trees_to_dot(&[tree], &["test \"x\"".into()], &["wait".into(), "treat".into()]);
        assert!(dot.starts_with("digraph t2 {"));
        assert!(dot.contains("test \\\"x\\\" > 0.5000"));
        assert!(dot.contains("n0 -> n2 [label=\"yes\"]"));
        assert!(dot.contains("treat\\np = 0.800"));
        assert_eq!(dot.matches('{').count(), dot.matches('}').count());
    }
}
