//! Pointwise MLP with one linear head per hierarchy level.
//!
//! Input features per point: coordinates, normal (zeros when absent) and the
//! mean offset to the `k` nearest neighbours.

use std::fmt::Write as _;

use ndarray::{Array1, Array2, Axis};
use rand::Rng;

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::field::LogitsField;
use crate::rng::Stream;
use crate::schema::LabelSchema;
use crate::spatial::KdTree;

pub const FEATURES: usize = 9;

/// Per-point feature matrix `n x 9`.
pub fn point_features(cloud: &PointCloud, k: usize) -> Array2<f64> {
    let pts = cloud.points();
    let n = pts.len();
    let mut x = Array2::zeros((n, FEATURES));
    let tree = KdTree::new(pts);
    for i in 0..n {
        let p = pts[i];
        for a in 0..3 {
            x[[i, a]] = p[a];
        }
        if let Some(ns) = cloud.normals() {
            for a in 0..3 {
                x[[i, 3 + a]] = ns[i][a];
            }
        }
        if k > 0 && n > 1 {
            let near: Vec<usize> = tree
                .nearest(p, k + 1)
                .into_iter()
                .map(|(j, _)| j)
                .filter(|&j| j != i)
                .take(k)
                .collect();
            let m = near.len() as f64;
            for &j in &near {
                for a in 0..3 {
                    x[[i, 6 + a]] += (pts[j][a] - p[a]) / m;
                }
            }
        }
    }
    x
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Dense {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Dense {
            w: Array2::zeros((fan_in, fan_out)),
            b: Array1::zeros(fan_out),
        }
    }

    fn glorot<R: Rng>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let w = Array2::from_shape_simple_fn((fan_in, fan_out), || a * (2.0 * rng.random::<f64>() - 1.0));
        Dense {
            w,
            b: Array1::zeros(fan_out),
        }
    }

    fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.w) + &self.b
    }
}

/// Smooth rectifier `(x + sqrt(x^2 + 4)) / 2`.
fn squareplus(x: f64) -> f64 {
    0.5 * (x + (x * x + 4.0).sqrt())
}

fn squareplus_grad(x: f64) -> f64 {
    0.5 * (1.0 + x / (x * x + 4.0).sqrt())
}

/// Parameters (or parameter gradients, same layout).
#[derive(Clone, Debug, PartialEq)]
pub struct ToyModel {
    pub hidden: Vec<Dense>,
    pub heads: Vec<Dense>,
    pub knn: usize,
}

/// Pre-activations kept for the backward pass.
#[derive(Clone, Debug)]
pub struct Activations {
    input: Array2<f64>,
    pre: Vec<Array2<f64>>,
    post: Vec<Array2<f64>>,
}

impl ToyModel {
    pub fn new(widths: &[usize], schema: &LabelSchema, knn: usize, stream: Stream) -> Self {
        let mut rng = stream.rng();
        let mut hidden = Vec::new();
        let mut fan_in = FEATURES;
        for &w in widths {
            hidden.push(Dense::glorot(fan_in, w, &mut rng));
            fan_in = w;
        }
        let heads = schema
            .labels_per_level()
            .iter()
            .map(|&l| Dense::glorot(fan_in, l, &mut rng))
            .collect();
        ToyModel { hidden, heads, knn }
    }

    pub fn zeros_like(&self) -> Self {
        let z = |d: &Dense| Dense::zeros(d.w.nrows(), d.w.ncols());
        ToyModel {
            hidden: self.hidden.iter().map(z).collect(),
            heads: self.heads.iter().map(z).collect(),
            knn: self.knn,
        }
    }

    fn layers(&self) -> impl Iterator<Item = &Dense> {
        self.hidden.iter().chain(&self.heads)
    }

    fn layers_mut(&mut self) -> impl Iterator<Item = &mut Dense> {
        self.hidden.iter_mut().chain(self.heads.iter_mut())
    }

    pub fn param_count(&self) -> usize {
        self.layers().map(|d| d.w.len() + d.b.len()).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.layers()
            .flat_map(|d| d.w.iter().chain(d.b.iter()).copied().collect::<Vec<_>>())
            .collect()
    }

    pub fn set_flat(&mut self, values: &[f64]) {
        let mut it = values.iter();
        for d in self.layers_mut() {
            for v in d.w.iter_mut().chain(d.b.iter_mut()) {
                *v = *it.next().expect("flat buffer too short");
            }
        }
    }

    /// `self += factor * other`.
    pub fn add_scaled(&mut self, other: &ToyModel, factor: f64) {
        for (a, b) in self.layers_mut().zip(other.layers()) {
            a.w.scaled_add(factor, &b.w);
            a.b.scaled_add(factor, &b.b);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers()
            .all(|d| d.w.iter().chain(d.b.iter()).all(|v| v.is_finite()))
    }

    pub fn forward_features(&self, x: &Array2<f64>) -> (LogitsField, Activations) {
        let mut pre = Vec::with_capacity(self.hidden.len());
        let mut post = Vec::with_capacity(self.hidden.len());
        let mut h = x.clone();
        for d in &self.hidden {
            let a = d.forward(&h);
            h = a.mapv(squareplus);
            pre.push(a);
            post.push(h.clone());
        }
        let levels = self.heads.iter().map(|d| d.forward(&h)).collect();
        (
            LogitsField { levels },
            Activations {
                input: x.clone(),
                pre,
                post,
            },
        )
    }

    pub fn forward(&self, cloud: &PointCloud) -> LogitsField {
        self.forward_features(&point_features(cloud, self.knn)).0
    }

    /// Parameter gradients from logit gradients.
    pub fn backward(&self, act: &Activations, grad: &LogitsField) -> ToyModel {
        let mut g = self.zeros_like();
        let last = act.post.last().unwrap_or(&act.input);
        let mut dh = Array2::<f64>::zeros(last.raw_dim());
        for (l, (head, gz)) in self.heads.iter().zip(&grad.levels).enumerate() {
            g.heads[l].w = last.t().dot(gz);
            g.heads[l].b = gz.sum_axis(Axis(0));
            dh += &gz.dot(&head.w.t());
        }
        for l in (0..self.hidden.len()).rev() {
            let mut da = dh;
            da.zip_mut_with(&act.pre[l], |d, &a| *d *= squareplus_grad(a));
            let input = if l == 0 { &act.input } else { &act.post[l - 1] };
            g.hidden[l].w = input.t().dot(&da);
            g.hidden[l].b = da.sum_axis(Axis(0));
            dh = da.dot(&self.hidden[l].w.t());
        }
        g
    }

    /// Text checkpoint; values use the shortest round-trip representation.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "mcseg-model 1");
        let _ = writeln!(out, "knn {}", self.knn);
        let _ = writeln!(out, "hidden {}", self.hidden.len());
        let _ = writeln!(out, "heads {}", self.heads.len());
        for d in self.layers() {
            let _ = writeln!(out, "dense {} {}", d.w.nrows(), d.w.ncols());
            for row in d.w.outer_iter() {
                let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
                let _ = writeln!(out, "{}", line.join(" "));
            }
            let line: Vec<String> = d.b.iter().map(|v| format!("{v:?}")).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<ToyModel> {
        let bad = |line: usize, msg: &str| Error::Format {
            path: "<checkpoint>".into(),
            line,
            msg: msg.to_string(),
        };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| bad(0, &format!("unexpected end, expected {what}")))
        };
        let (ln, head) = next("header")?;
        if head != "mcseg-model 1" {
            return Err(bad(ln, "not a version-1 checkpoint"));
        }
        let mut field = |key: &str| -> Result<usize> {
            let (ln, l) = next(key)?;
            l.strip_prefix(key)
                .and_then(|v| v.trim().parse().ok())
                .ok_or_else(|| bad(ln, &format!("expected `{key} <n>`")))
        };
        let knn = field("knn")?;
        let n_hidden = field("hidden")?;
        let n_heads = field("heads")?;
        let mut layers = Vec::new();
        for _ in 0..n_hidden + n_heads {
            let (ln, l) = next("dense")?;
            let dims: Vec<usize> = l
                .strip_prefix("dense")
                .map(|r| r.split_whitespace().filter_map(|t| t.parse().ok()).collect())
                .unwrap_or_default();
            if dims.len() != 2 {
                return Err(bad(ln, "expected `dense <in> <out>`"));
            }
            let mut d = Dense::zeros(dims[0], dims[1]);
            let mut parse_row = |want: usize| -> Result<Vec<f64>> {
                let (ln, l) = next("values")?;
                let v: Vec<f64> = l
                    .split_whitespace()
                    .map(|t| t.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| bad(ln, "bad number"))?;
                if v.len() != want || v.iter().any(|x| !x.is_finite()) {
                    return Err(bad(ln, &format!("expected {want} finite values")));
                }
                Ok(v)
            };
            for r in 0..dims[0] {
                for (c, v) in parse_row(dims[1])?.into_iter().enumerate() {
                    d.w[[r, c]] = v;
                }
            }
            d.b = Array1::from(parse_row(dims[1])?);
            layers.push(d);
        }
        let heads = layers.split_off(n_hidden);
        Ok(ToyModel {
            hidden: layers,
            heads,
            knn,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud() -> PointCloud {
        let pts = (0..20)
            .map(|i| {
                let t = i as f64 * 0.3;
                [t.cos() * 0.5, t.sin() * 0.5, (i as f64 - 10.0) * 0.05]
            })
            .collect();
        PointCloud::new(pts, None).unwrap()
    }

    fn schema() -> LabelSchema {
        LabelSchema::from_parents(vec![2, 3], vec![vec![0, 0, 1]]).unwrap()
    }

    #[test]
    fn output_shape_and_finiteness() {
        let m = ToyModel::new(&[8, 8], &schema(), 4, Stream::new(1));
        let l = m.forward(&cloud());
        assert!(l.matches_schema(&schema()));
        assert_eq!(l.rows(), 20);
        assert!(l.levels.iter().all(|a| a.iter().all(|v| v.is_finite())));
    }

    #[test]
    fn zero_logit_gradient_gives_zero_parameter_gradient() {
        let m = ToyModel::new(&[8], &schema(), 4, Stream::new(1));
        let (l, act) = m.forward_features(&point_features(&cloud(), 4));
        let g = m.backward(&act, &LogitsField::zeros(l.rows(), &schema()));
        assert!(g.to_flat().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_weights_pass_features_through() {
        let s = LabelSchema::flat(FEATURES).unwrap();
        let mut m = ToyModel::new(&[], &s, 0, Stream::new(1));
        m.heads[0].w = Array2::eye(FEATURES);
        let c = cloud();
        let l = m.forward(&c);
        assert_eq!(l.levels[0][[3, 0]], c.points()[3][0]);
    }

    #[test]
    fn checkpoint_round_trip() {
        let m = ToyModel::new(&[5, 4], &schema(), 16, Stream::new(9));
        let back = ToyModel::from_text(&m.to_text()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn features_exclude_self() {
        let c = PointCloud::new(vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]], None).unwrap();
        let x = point_features(&c, 16);
        assert_eq!(x[[0, 6]], 1.0);
        assert_eq!(x[[1, 6]], -1.0);
    }
}
