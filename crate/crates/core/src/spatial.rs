//! Static 3D k-d tree for k-nearest-neighbour and radius queries.

use crate::geom::{dist2, Vec3};

const LEAF_SIZE: usize = 8;

#[derive(Debug)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

/// A k-d tree over a borrowed point slice. Query results are indices into that slice.
#[derive(Debug)]
pub struct KdTree<'a> {
    points: &'a [Vec3],
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl<'a> KdTree<'a> {
    pub fn new(points: &'a [Vec3]) -> Self {
        let mut tree = KdTree {
            points,
            order: (0..points.len()).collect(),
            nodes: Vec::new(),
        };
        if !points.is_empty() {
            tree.build(0, points.len());
        }
        tree
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &i in &self.order[start..end] {
            let p = self.points[i];
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let axis = (0..3)
            .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
            .unwrap_or(0);
        if hi[axis] <= lo[axis] {
            // all points coincide
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mid = start + (end - start) / 2;
        let pts = self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&i, &j| {
            pts[i][axis].total_cmp(&pts[j][axis]).then(i.cmp(&j))
        });
        let value = pts[self.order[mid]][axis];
        self.nodes.push(Node::Leaf { start: 0, end: 0 });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[id] = Node::Split {
            axis,
            value,
            left,
            right,
        };
        id
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The `k` nearest points to `query` as `(index, squared distance)`,
    /// sorted by distance then index.
    pub fn nearest(&self, query: Vec3, k: usize) -> Vec<(usize, f64)> {
        let mut best: Vec<(usize, f64)> = Vec::with_capacity(k + 1);
        if k == 0 || self.nodes.is_empty() {
            return best;
        }
        self.nearest_rec(0, query, k, &mut best);
        best
    }

    fn nearest_rec(&self, node: usize, q: Vec3, k: usize, best: &mut Vec<(usize, f64)>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let d = dist2(self.points[i], q);
                    if best.len() == k {
                        let (wi, wd) = best[k - 1];
                        if d > wd || (d == wd && i > wi) {
                            continue;
                        }
                    }
                    let pos = best.partition_point(|&(bi, bd)| bd < d || (bd == d && bi < i));
                    best.insert(pos, (i, d));
                    best.truncate(k);
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.nearest_rec(near, q, k, best);
                if best.len() < k || diff * diff <= best[best.len() - 1].1 {
                    self.nearest_rec(far, q, k, best);
                }
            }
        }
    }

    /// All points within `radius` (inclusive) of `query`, in unspecified order.
    pub fn within(&self, query: Vec3, radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        if !self.nodes.is_empty() {
            self.within_rec(0, query, radius * radius, &mut out);
        }
        out
    }

    fn within_rec(&self, node: usize, q: Vec3, r2: f64, out: &mut Vec<usize>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                out.extend(
                    self.order[start..end]
                        .iter()
                        .copied()
                        .filter(|&i| dist2(self.points[i], q) <= r2),
                );
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.within_rec(near, q, r2, out);
                if diff * diff <= r2 {
                    self.within_rec(far, q, r2, out);
                }
            }
        }
    }
}
