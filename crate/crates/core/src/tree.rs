//! Part trees: the part hierarchy of one labeled shape.
//!
//! Node 0 is a virtual root. Every other node is one `(level, label)` pair
//! that occurs in the shape, and holds the indices of the points carrying
//! that label at that level.

use std::collections::BTreeMap;

use crate::cloud::{HierLabels, Label, PointCloud};
use crate::error::{Error, Result};
use crate::schema::LabelSchema;

pub type NodeId = usize;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PartNode {
    /// 0 for the root; `k + 1` for a node at schema level `k`.
    pub depth: usize,
    pub label: usize,
    pub points: Vec<usize>,
    pub children: Vec<NodeId>,
    pub parent: Option<NodeId>,
}

impl PartNode {
    /// Schema level of this node, `None` for the root.
    pub fn level(&self) -> Option<usize> {
        self.depth.checked_sub(1)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PartTree {
    nodes: Vec<PartNode>,
    level_count: usize,
    point_count: usize,
}

pub const ROOT: NodeId = 0;

/// Build the part tree of a labeled cloud.
pub fn tree_from_labels(cloud: &PointCloud, labels: &HierLabels, schema: &LabelSchema) -> Result<PartTree> {
    if labels.len() != cloud.len() {
        return Err(Error::ShapeMismatch {
            what: "labels",
            got: labels.len(),
            expected: cloud.len(),
        });
    }
    labels.validate(schema)?;
    let k_count = schema.level_count();
    let mut nodes = vec![PartNode {
        depth: 0,
        label: 0,
        points: (0..cloud.len()).filter(|&i| labels.get(0, i).is_labeled()).collect(),
        children: Vec::new(),
        parent: None,
    }];
    let mut prev: BTreeMap<usize, NodeId> = BTreeMap::new();
    for k in 0..k_count {
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, l) in labels.level(k).iter().enumerate() {
            if let Label::Part(l) = l {
                groups.entry(*l as usize).or_default().push(i);
            }
        }
        let mut current = BTreeMap::new();
        for (label, points) in groups {
            let parent = if k == 0 {
                ROOT
            } else {
                *prev.get(&schema.parent(k, label)).ok_or(Error::IncoherentLabels {
                    point: points[0],
                    level: k,
                })?
            };
            let id = nodes.len();
            nodes.push(PartNode {
                depth: k + 1,
                label,
                points,
                children: Vec::new(),
                parent: Some(parent),
            });
            nodes[parent].children.push(id);
            current.insert(label, id);
        }
        prev = current;
    }
    Ok(PartTree {
        nodes,
        level_count: k_count,
        point_count: cloud.len(),
    })
}

impl PartTree {
    pub fn root(&self) -> &PartNode {
        &self.nodes[ROOT]
    }

    pub fn node(&self, id: NodeId) -> &PartNode {
        &self.nodes[id]
    }

    pub fn nodes(&self) -> &[PartNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.len() <= 1
    }

    pub fn level_count(&self) -> usize {
        self.level_count
    }

    /// Node for `(level, label)`, if the shape has such a part.
    pub fn find(&self, level: usize, label: usize) -> Option<NodeId> {
        self.nodes.iter().position(|n| n.depth == level + 1 && n.label == label)
    }

    /// All nodes of the subtree rooted at `id`, including `id`, in preorder.
    pub fn subtree(&self, id: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(n) = stack.pop() {
            out.push(n);
            stack.extend(self.nodes[n].children.iter().rev());
        }
        out
    }

    /// Finest-level nodes under `id` (the node itself if it is one).
    pub fn leaves(&self, id: NodeId) -> Vec<NodeId> {
        self.subtree(id)
            .into_iter()
            .filter(|&n| self.nodes[n].depth == self.level_count)
            .collect()
    }

    /// Finest-level labels present under `id`, ascending.
    pub fn leaf_labels(&self, id: NodeId) -> Vec<usize> {
        let mut v: Vec<usize> = self.leaves(id).into_iter().map(|n| self.nodes[n].label).collect();
        v.sort_unstable();
        v
    }

    /// Reconstruct finest-level labels from the leaf point sets.
    pub fn flatten_leaves(&self) -> Vec<Label> {
        let mut out = vec![Label::Unlabeled; self.point_count];
        for n in self.nodes.iter().filter(|n| n.depth == self.level_count) {
            for &i in &n.points {
                out[i] = Label::part(n.label);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::coarsen_labels;

    fn cloud(n: usize) -> PointCloud {
        PointCloud::new((0..n).map(|i| [i as f64, 0.0, 0.0]).collect(), None).unwrap()
    }

    #[test]
    fn single_level_tree() {
        let s = LabelSchema::flat(2).unwrap();
        let l = HierLabels::new(
            vec![vec![Label::part(0), Label::part(0), Label::part(1), Label::part(1)]],
            &s,
        )
        .unwrap();
        let t = tree_from_labels(&cloud(4), &l, &s).unwrap();
        assert_eq!(t.root().children.len(), 2);
        for &c in &t.root().children {
            assert_eq!(t.node(c).points.len(), 2);
            assert!(t.node(c).children.is_empty());
        }
    }

    #[test]
    fn two_level_tree_nests_children() {
        let s = LabelSchema::from_parents(vec![2, 4], vec![vec![0, 0, 1, 1]]).unwrap();
        let fine = [0, 1, 2, 3, 3, 1].map(Label::part);
        let l = coarsen_labels(&fine, &s).unwrap();
        let t = tree_from_labels(&cloud(6), &l, &s).unwrap();
        assert_eq!(t.len(), 1 + 2 + 4);
        let c0 = t.find(0, 0).unwrap();
        assert_eq!(t.node(c0).points, vec![0, 1, 5]);
        assert_eq!(t.leaf_labels(c0), vec![0, 1]);
        assert_eq!(t.flatten_leaves(), fine.to_vec());
    }

    #[test]
    fn incoherent_labels_fail() {
        let s = LabelSchema::from_parents(vec![2, 4], vec![vec![0, 0, 1, 1]]).unwrap();
        let l = HierLabels::new_unchecked(vec![vec![Label::part(1)], vec![Label::part(0)]]);
        assert!(matches!(
            tree_from_labels(&cloud(1), &l, &s),
            Err(Error::IncoherentLabels { .. })
        ));
    }
}
