//! Straight-line reference implementations used as oracles. They work on
//! plain nested vectors and share no code with the library beyond input
//! types.

#![allow(dead_code)]

use mcseg_core::cloud::{HierLabels, Label, LabeledCloud};
use mcseg_core::field::LogitsField;
use mcseg_core::perturb::Correspondence;
use mcseg_core::schema::LabelSchema;

pub type Table = Vec<Vec<f64>>;

const FLOOR: f64 = 1e-8;

pub fn softmax(logits: &LogitsField) -> Vec<Table> {
    logits
        .levels
        .iter()
        .map(|m| {
            m.outer_iter()
                .map(|row| {
                    let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let e: Vec<f64> = row.iter().map(|v| (v - mx).exp()).collect();
                    let s: f64 = e.iter().sum();
                    e.into_iter().map(|v| v / s).collect()
                })
                .collect()
        })
        .collect()
}

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for m in 1..row.len() {
        if row[m] > row[best] {
            best = m;
        }
    }
    best
}

pub fn kl(p: &[f64], q: &[f64]) -> f64 {
    let mut s = 0.0;
    for m in 0..p.len() {
        if p[m] > 0.0 {
            s += p[m] * (p[m].max(FLOOR).ln() - q[m].max(FLOOR).ln());
        }
    }
    s
}

pub fn seg(q: &HierLabels, pa: &[Table], pb: &[Table], corr: &Correspondence) -> f64 {
    let n = corr.pairs.len() as f64;
    let mut s = 0.0;
    for c in &corr.pairs {
        for k in 0..pa.len() {
            if let Some(l) = q.get(k, c.source).id() {
                s -= pa[k][c.a][l].max(FLOOR).ln();
                s -= pb[k][c.b][l].max(FLOOR).ln();
            }
        }
    }
    s / (2.0 * n)
}

pub fn point(pa: &[Table], pb: &[Table], corr: &Correspondence) -> f64 {
    let n = corr.pairs.len() as f64;
    let mut s = 0.0;
    for c in &corr.pairs {
        for k in 0..pa.len() {
            s += kl(&pa[k][c.a], &pb[k][c.b]) + kl(&pb[k][c.b], &pa[k][c.a]);
        }
    }
    s / (2.0 * n)
}

/// BC and OC of label `l` over the listed rows of `p`, with membership from
/// `assign` (aligned with `rows`).
pub fn bc_oc(p: &Table, rows: &[usize], assign: &[usize], l: usize) -> (Option<f64>, Option<f64>) {
    let inside: Vec<f64> = rows
        .iter()
        .zip(assign)
        .filter(|(_, &a)| a == l)
        .map(|(&r, _)| p[r][l])
        .collect();
    let outside: Vec<f64> = rows
        .iter()
        .zip(assign)
        .filter(|(_, &a)| a != l)
        .map(|(&r, _)| p[r][l])
        .collect();
    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    (mean(&inside), mean(&outside))
}

pub fn part(pa: &[Table], pb: &[Table], corr: &Correspondence) -> f64 {
    let ra: Vec<usize> = corr.pairs.iter().map(|c| c.a).collect();
    let rb: Vec<usize> = corr.pairs.iter().map(|c| c.b).collect();
    let mut total = 0.0;
    for k in 0..pa.len() {
        let assign_a: Vec<usize> = ra.iter().map(|&r| argmax(&pa[k][r])).collect();
        let assign_b: Vec<usize> = rb.iter().map(|&r| argmax(&pb[k][r])).collect();
        for j in 0..pa[k][0].len() {
            for (assign, own, own_rows, other, other_rows) in [
                (&assign_a, &pa[k], &ra, &pb[k], &rb),
                (&assign_b, &pb[k], &rb, &pa[k], &ra),
            ] {
                let (bc1, oc1) = bc_oc(own, own_rows, assign, j);
                let (bc2, oc2) = bc_oc(other, other_rows, assign, j);
                let term = match (bc1, oc1) {
                    (None, Some(o1)) => (o1 - oc2.unwrap()).powi(2),
                    (Some(b1), None) => (b1 - bc2.unwrap()).powi(2),
                    (Some(b1), Some(o1)) => 0.5 * (b1 - bc2.unwrap()).powi(2) + 0.5 * (o1 - oc2.unwrap()).powi(2),
                    (None, None) => unreachable!("nonempty correspondence"),
                };
                total += term;
            }
        }
    }
    total
}

pub fn merge(fine: &Table, parents: &[usize], n_parent: usize) -> Table {
    fine.iter()
        .map(|row| {
            (0..n_parent)
                .map(|m| (0..row.len()).filter(|&c| parents[c] == m).map(|c| row[c]).sum())
                .collect()
        })
        .collect()
}

pub fn hier(pa: &[Table], pb: &[Table], schema: &LabelSchema, corr: &Correspondence) -> f64 {
    let n = corr.pairs.len() as f64;
    let mut s = 0.0;
    for k in 0..pa.len().saturating_sub(1) {
        let ma = merge(&pa[k + 1], schema.parent_map(k + 1), schema.labels(k));
        let mb = merge(&pb[k + 1], schema.parent_map(k + 1), schema.labels(k));
        for c in &corr.pairs {
            s += kl(&ma[c.a], &pb[k][c.b]) + kl(&mb[c.b], &pa[k][c.a]);
        }
    }
    s / (2.0 * n)
}

/// Intersection and union counts per label for one shape.
fn iou_counts(pred: &[usize], gt: &[Label], n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut inter = vec![0.0; n];
    let mut union = vec![0.0; n];
    for l in 0..n {
        for (p, g) in pred.iter().zip(gt) {
            let Some(g) = g.id() else { continue };
            let (in_p, in_g) = (*p == l, g == l);
            if in_p && in_g {
                inter[l] += 1.0;
            }
            if in_p || in_g {
                union[l] += 1.0;
            }
        }
    }
    (inter, union)
}

pub fn p_miou(preds: &[Vec<usize>], gts: &[Vec<Label>], n: usize) -> f64 {
    let mut inter = vec![0.0; n];
    let mut union = vec![0.0; n];
    for (p, g) in preds.iter().zip(gts) {
        let (i, u) = iou_counts(p, g, n);
        for l in 0..n {
            inter[l] += i[l];
            union[l] += u[l];
        }
    }
    let ious: Vec<f64> = (0..n)
        .filter(|&l| union[l] > 0.0)
        .map(|l| inter[l] / union[l])
        .collect();
    100.0 * ious.iter().sum::<f64>() / ious.len() as f64
}

pub fn s_miou(preds: &[Vec<usize>], gts: &[Vec<Label>], n: usize) -> f64 {
    let mut per = Vec::new();
    for (p, g) in preds.iter().zip(gts) {
        let (i, u) = iou_counts(p, g, n);
        let ious: Vec<f64> = (0..n).filter(|&l| u[l] > 0.0).map(|l| i[l] / u[l]).collect();
        if !ious.is_empty() {
            per.push(ious.iter().sum::<f64>() / ious.len() as f64);
        }
    }
    100.0 * per.iter().sum::<f64>() / per.len() as f64
}

pub fn flat(preds: &[Vec<usize>], gts: &[Vec<Label>], cats: &[usize], parts: &[Vec<usize>]) -> (f64, f64) {
    let n = 1 + parts
        .iter()
        .flatten()
        .chain(preds.iter().flatten())
        .max()
        .copied()
        .unwrap_or(0);
    let mut by_cat: Vec<Vec<f64>> = vec![Vec::new(); parts.len()];
    let mut all = Vec::new();
    for ((p, g), &c) in preds.iter().zip(gts).zip(cats) {
        let (i, u) = iou_counts(p, g, n);
        let ious: Vec<f64> = parts[c]
            .iter()
            .map(|&l| if u[l] == 0.0 { 1.0 } else { i[l] / u[l] })
            .collect();
        let m = ious.iter().sum::<f64>() / ious.len() as f64;
        by_cat[c].push(m);
        all.push(m);
    }
    let cat_means: Vec<f64> = by_cat
        .iter()
        .filter(|v| !v.is_empty())
        .map(|v| v.iter().sum::<f64>() / v.len() as f64)
        .collect();
    (
        100.0 * cat_means.iter().sum::<f64>() / cat_means.len() as f64,
        100.0 * all.iter().sum::<f64>() / all.len() as f64,
    )
}

/// A labeled point is flagged when another labeled point within
/// `epsilon * bbox diagonal` has a different finest label and origin.
pub fn overlaps(shape: &LabeledCloud, origins: &[usize], epsilon: f64) -> Vec<bool> {
    let pts = shape.cloud.points();
    let fine = shape.labels.finest();
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in pts {
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let diag = ((hi[0] - lo[0]).powi(2) + (hi[1] - lo[1]).powi(2) + (hi[2] - lo[2]).powi(2)).sqrt();
    let r2 = (epsilon * diag).powi(2);
    let mut out = vec![false; pts.len()];
    for i in 0..pts.len() {
        if fine[i] == Label::Unlabeled {
            continue;
        }
        for j in 0..pts.len() {
            if fine[j] == Label::Unlabeled || fine[j] == fine[i] || origins[j] == origins[i] {
                continue;
            }
            let d2: f64 = (0..3).map(|a| (pts[i][a] - pts[j][a]).powi(2)).sum();
            if d2 <= r2 {
                out[i] = true;
                break;
            }
        }
    }
    out
}
