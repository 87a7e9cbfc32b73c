//! Multilevel part substitution.
//!
//! A synthesized shape starts from a pool shape, picks disjoint subtrees of
//! its part tree coarse-to-fine, replaces each by a same-label subtree of
//! another pool shape fitted into the replaced part's box, and finally masks
//! the labels of points where pieces of different origin touch.

use std::collections::VecDeque;

use rand::Rng;
use rayon::prelude::*;

use crate::cloud::{HierLabels, LabeledCloud, PointCloud};
use crate::error::{Error, Result};
use crate::geom::{bbox_affine, dist2, quantize3, Aabb, Vec3};
use crate::rng::Stream;
use crate::schema::LabelSchema;
use crate::spatial::KdTree;
use crate::tree::{tree_from_labels, NodeId, PartTree, ROOT};

#[derive(Clone, Debug, PartialEq)]
pub struct SubstitutionParams {
    /// Replacement threshold per level, coarsest first. Levels past the end
    /// reuse the last entry.
    pub theta: Vec<f64>,
    /// Overlap radius as a fraction of the shape diameter.
    pub overlap_epsilon: f64,
    pub seed: u64,
}

impl Default for SubstitutionParams {
    fn default() -> Self {
        SubstitutionParams {
            theta: vec![0.5],
            overlap_epsilon: 0.02,
            seed: 0,
        }
    }
}

impl SubstitutionParams {
    pub fn theta_at(&self, level: usize) -> f64 {
        self.theta.get(level).or(self.theta.last()).copied().unwrap_or(0.5)
    }

    pub fn validate(&self) -> Result<()> {
        if self.theta.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(Error::InvalidParams(format!(
                "theta must lie in [0, 1]: {:?}",
                self.theta
            )));
        }
        if !(self.overlap_epsilon > 0.0 && self.overlap_epsilon.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "overlap epsilon must be positive, got {}",
                self.overlap_epsilon
            )));
        }
        Ok(())
    }
}

/// Visit nodes breadth-first from the coarsest level; a node is selected when
/// a uniform draw falls below its level's threshold, and the children of a
/// selected node are not visited.
pub fn select_candidates<R: Rng>(tree: &PartTree, params: &SubstitutionParams, rng: &mut R) -> Vec<NodeId> {
    let mut out = Vec::new();
    let mut queue: VecDeque<NodeId> = tree.root().children.iter().copied().collect();
    while let Some(id) = queue.pop_front() {
        let node = tree.node(id);
        let level = node.depth - 1;
        let u: f64 = rng.random();
        if u < params.theta_at(level) {
            out.push(id);
        } else {
            queue.extend(node.children.iter().copied());
        }
    }
    out
}

/// Uniform choice of a `(level, label)` subtree among pool shapes other than
/// `exclude`. Returns the shape index and the node.
pub fn find_donor<R: Rng>(
    level: usize,
    label: usize,
    trees: &[PartTree],
    exclude: usize,
    rng: &mut R,
) -> Result<(usize, NodeId)> {
    let matches: Vec<(usize, NodeId)> = trees
        .iter()
        .enumerate()
        .filter(|(s, _)| *s != exclude)
        .filter_map(|(s, t)| t.find(level, label).map(|n| (s, n)))
        .collect();
    if matches.is_empty() {
        return Err(Error::NoDonorFound { level, label });
    }
    Ok(matches[rng.random_range(0..matches.len())])
}

/// Donor points after alignment, with the donor's labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Replacement {
    pub points: Vec<Vec3>,
    pub normals: Option<Vec<Vec3>>,
    pub labels: HierLabels,
}

fn points_bbox(cloud: &PointCloud, idx: &[usize]) -> Option<Aabb> {
    Aabb::of_points(idx.iter().map(|&i| &cloud.points()[i]))
}

fn leaf_points(tree: &PartTree, node: NodeId, labels: &[usize]) -> Vec<usize> {
    tree.leaves(node)
        .into_iter()
        .filter(|&n| labels.contains(&tree.node(n).label))
        .flat_map(|n| tree.node(n).points.iter().copied())
        .collect()
}

/// Largest factor `s <= 1` such that `c + s (p - c)` stays inside `bounds` for every point.
fn containment_factor(points: &[Vec3], c: Vec3, bounds: &Aabb) -> f64 {
    let mut s = 1.0f64;
    for p in points {
        for a in 0..3 {
            let d = p[a] - c[a];
            if p[a] > bounds.max[a] && d > 0.0 {
                s = s.min((bounds.max[a] - c[a]) / d);
            } else if p[a] < bounds.min[a] && d < 0.0 {
                s = s.min((bounds.min[a] - c[a]) / d);
            }
        }
    }
    s.clamp(0.0, 1.0)
}

fn clamp_into(p: Vec3, b: &Aabb) -> Vec3 {
    [
        p[0].clamp(b.min[0], b.max[0]),
        p[1].clamp(b.min[1], b.max[1]),
        p[2].clamp(b.min[2], b.max[2]),
    ]
}

/// Fit donor subtree `q` of `donor` into the place of subtree `p` of `source`.
///
/// Without shared finest-level labels the donor box is mapped onto the
/// candidate box. Otherwise the union box of the shared leaves of the donor
/// is mapped onto that of the candidate, and the result is shrunk about its
/// centroid if it leaves `source_bbox`.
pub fn substitute(
    source: &LabeledCloud,
    source_tree: &PartTree,
    p: NodeId,
    donor: &LabeledCloud,
    donor_tree: &PartTree,
    q: NodeId,
    source_bbox: &Aabb,
) -> Result<Replacement> {
    let (pn, qn) = (source_tree.node(p), donor_tree.node(q));
    if pn.depth != qn.depth || pn.label != qn.label {
        return Err(Error::InvalidParams(format!(
            "candidate (depth {}, label {}) and donor (depth {}, label {}) differ",
            pn.depth, pn.label, qn.depth, qn.label
        )));
    }
    let q_box = points_bbox(&donor.cloud, &qn.points)
        .filter(|b| qn.points.len() >= 3 && b.extent().iter().any(|&e| e > 0.0))
        .ok_or_else(|| Error::DegenerateDonor(format!("{} points", qn.points.len())))?;
    let p_box = points_bbox(&source.cloud, &pn.points)
        .ok_or_else(|| Error::InvalidParams("candidate part has no points".into()))?;

    let p_leaves = source_tree.leaf_labels(p);
    let shared: Vec<usize> = donor_tree
        .leaf_labels(q)
        .into_iter()
        .filter(|l| p_leaves.contains(l))
        .collect();
    let affine = if shared.is_empty() {
        bbox_affine(&q_box, &p_box)
    } else {
        let qs = points_bbox(&donor.cloud, &leaf_points(donor_tree, q, &shared)).unwrap_or(q_box);
        let ps = points_bbox(&source.cloud, &leaf_points(source_tree, p, &shared)).unwrap_or(p_box);
        bbox_affine(&qs, &ps)
    };

    let mut points: Vec<Vec3> = qn
        .points
        .iter()
        .map(|&i| affine.apply(donor.cloud.points()[i]))
        .collect();
    if points.iter().any(|x| !source_bbox.contains(*x)) {
        let n = points.len() as f64;
        let mut c = [0.0; 3];
        for x in &points {
            for a in 0..3 {
                c[a] += x[a] / n;
            }
        }
        let c = clamp_into(c, source_bbox);
        let s = containment_factor(&points, c, source_bbox);
        for x in points.iter_mut() {
            let y = [
                c[0] + s * (x[0] - c[0]),
                c[1] + s * (x[1] - c[1]),
                c[2] + s * (x[2] - c[2]),
            ];
            *x = clamp_into(y, source_bbox);
        }
    }
    let normals = donor
        .cloud
        .normals()
        .map(|ns| qn.points.iter().map(|&i| affine.apply_normal(ns[i])).collect());
    Ok(Replacement {
        points,
        normals,
        labels: donor.labels.select(&qn.points),
    })
}

/// Flag labeled points that have a labeled neighbour within
/// `epsilon * diameter` carrying a different finest-level label and a
/// different origin tag. Distinct tags for every point give the plain
/// "different part nearby" rule.
pub fn mark_overlaps(shape: &LabeledCloud, origins: &[usize], epsilon: f64) -> Result<Vec<bool>> {
    if origins.len() != shape.len() {
        return Err(Error::ShapeMismatch {
            what: "origin tags",
            got: origins.len(),
            expected: shape.len(),
        });
    }
    let pts = shape.cloud.points();
    let fine = shape.labels.finest();
    let radius = epsilon * shape.cloud.bbox().diagonal();
    let labeled: Vec<usize> = (0..pts.len()).filter(|&i| fine[i].is_labeled()).collect();
    let sub: Vec<Vec3> = labeled.iter().map(|&i| pts[i]).collect();
    let tree = KdTree::new(&sub);
    let mut mask = vec![false; pts.len()];
    for &i in &labeled {
        mask[i] = tree.within(pts[i], radius).into_iter().any(|j| {
            let j = labeled[j];
            fine[j] != fine[i] && origins[j] != origins[i]
        });
    }
    Ok(mask)
}

/// O(n^2) version of [`mark_overlaps`].
pub fn mark_overlaps_brute(shape: &LabeledCloud, origins: &[usize], epsilon: f64) -> Vec<bool> {
    let pts = shape.cloud.points();
    let fine = shape.labels.finest();
    let r2 = {
        let r = epsilon * shape.cloud.bbox().diagonal();
        r * r
    };
    (0..pts.len())
        .map(|i| {
            fine[i].is_labeled()
                && (0..pts.len()).any(|j| {
                    fine[j].is_labeled()
                        && fine[j] != fine[i]
                        && origins[j] != origins[i]
                        && dist2(pts[i], pts[j]) <= r2
                })
        })
        .collect()
}

/// Assemble the kept source points and the replacements into one shape, then
/// mask overlaps. Kept points have origin 0, replacement `r` has origin `r + 1`.
pub fn compose(
    source: &LabeledCloud,
    source_tree: &PartTree,
    replaced: &[(NodeId, Replacement)],
    schema: &LabelSchema,
    epsilon: f64,
) -> Result<LabeledCloud> {
    let mut removed = vec![false; source.len()];
    for (node, _) in replaced {
        for &i in &source_tree.node(*node).points {
            removed[i] = true;
        }
    }
    let kept: Vec<usize> = (0..source.len()).filter(|&i| !removed[i]).collect();
    let mut points: Vec<Vec3> = kept.iter().map(|&i| source.cloud.points()[i]).collect();
    let mut normals: Option<Vec<Vec3>> = source.cloud.normals().map(|ns| kept.iter().map(|&i| ns[i]).collect());
    let mut labels = source.labels.select(&kept);
    let mut origins = vec![0usize; kept.len()];
    for (r, (_, rep)) in replaced.iter().enumerate() {
        points.extend(rep.points.iter().map(|&p| quantize3(p)));
        normals = match (normals, &rep.normals) {
            (Some(mut ns), Some(rn)) => {
                ns.extend(rn.iter().copied());
                Some(ns)
            }
            _ => None,
        };
        labels = labels.concat(&rep.labels);
        origins.extend(std::iter::repeat_n(r + 1, rep.points.len()));
    }
    let cloud = PointCloud::new(points, normals)?;
    let shape = LabeledCloud::new(cloud, labels, schema)?;
    let mask = mark_overlaps(&shape, &origins, epsilon)?;
    let labels = shape.labels.masked(&mask);
    LabeledCloud::new(shape.cloud, labels, schema)
}

/// Synthesize one shape from `pool[source]`.
pub fn synthesize_one(
    pool: &[LabeledCloud],
    trees: &[PartTree],
    source: usize,
    schema: &LabelSchema,
    params: &SubstitutionParams,
    stream: Stream,
) -> Result<LabeledCloud> {
    let mut rng = stream.rng();
    let src = &pool[source];
    let tree = &trees[source];
    let bbox = src.cloud.bbox();
    let mut replaced = Vec::new();
    for p in select_candidates(tree, params, &mut rng) {
        let node = tree.node(p);
        let (d, q) = match find_donor(node.depth - 1, node.label, trees, source, &mut rng) {
            Ok(found) => found,
            Err(Error::NoDonorFound { .. }) => continue,
            Err(e) => return Err(e),
        };
        match substitute(src, tree, p, &pool[d], &trees[d], q, &bbox) {
            Ok(rep) => replaced.push((p, rep)),
            Err(Error::DegenerateDonor(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    compose(src, tree, &replaced, schema, params.overlap_epsilon)
}

/// Synthesize `count` shapes; shape `i` draws from substream `i`, so the
/// output does not depend on the thread count.
pub fn augment_pool(
    pool: &[LabeledCloud],
    schema: &LabelSchema,
    count: usize,
    params: &SubstitutionParams,
) -> Result<Vec<LabeledCloud>> {
    params.validate()?;
    if count == 0 {
        return Ok(Vec::new());
    }
    if pool.len() < 2 {
        return Err(Error::InvalidParams(format!(
            "augmentation needs at least 2 pool shapes, got {}",
            pool.len()
        )));
    }
    let trees = pool
        .iter()
        .map(|s| tree_from_labels(&s.cloud, &s.labels, schema))
        .collect::<Result<Vec<_>>>()?;
    let base = Stream::new(params.seed).split("augment");
    (0..count)
        .into_par_iter()
        .map(|i| {
            let stream = base.index(i as u64);
            let source = stream.split("source").rng().random_range(0..pool.len());
            synthesize_one(pool, &trees, source, schema, params, stream.split("substitute"))
        })
        .collect()
}

/// True when every labeled point's label path also occurs in some pool shape.
pub fn inherits_semantics(shape: &LabeledCloud, pool_trees: &[PartTree]) -> bool {
    let k_count = shape.labels.level_count();
    (0..shape.len()).all(|i| {
        let path: Vec<usize> = (0..k_count).map_while(|k| shape.labels.get(k, i).id()).collect();
        path.is_empty()
            || pool_trees.iter().any(|t| {
                let mut node = ROOT;
                path.iter().all(
                    |&l| match t.node(node).children.iter().find(|&&c| t.node(c).label == l) {
                        Some(&c) => {
                            node = c;
                            true
                        }
                        None => false,
                    },
                )
            })
    })
}
