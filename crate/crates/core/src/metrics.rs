//! Part segmentation metrics, reported as percentages.
//!
//! Ground-truth points marked unlabeled take part in neither intersections
//! nor unions.

use std::fmt::Write as _;

use crate::cloud::{HierLabels, Label};
use crate::error::{Error, Result};
use crate::schema::LabelSchema;

fn check_lengths(preds: &[Vec<usize>], gts: &[Vec<Label>]) -> Result<()> {
    if preds.len() != gts.len() {
        return Err(Error::ShapeCountMismatch(format!(
            "{} predicted shapes, {} ground-truth shapes",
            preds.len(),
            gts.len()
        )));
    }
    for (s, (p, g)) in preds.iter().zip(gts).enumerate() {
        if p.len() != g.len() {
            return Err(Error::ShapeCountMismatch(format!(
                "shape {s}: {} predictions for {} points",
                p.len(),
                g.len()
            )));
        }
    }
    Ok(())
}

/// Per-category intersection and union counts of one shape.
fn counts(pred: &[usize], gt: &[Label], n_labels: usize) -> (Vec<usize>, Vec<usize>) {
    let mut inter = vec![0; n_labels];
    let mut union = vec![0; n_labels];
    for (&p, g) in pred.iter().zip(gt) {
        let Some(g) = g.id() else { continue };
        if p == g {
            inter[g] += 1;
            union[g] += 1;
        } else {
            if p < n_labels {
                union[p] += 1;
            }
            union[g] += 1;
        }
    }
    (inter, union)
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Part-category IoU with points pooled over all shapes, averaged over the
/// categories that occur in the ground truth or the predictions.
pub fn p_miou(preds: &[Vec<usize>], gts: &[Vec<Label>], n_labels: usize) -> Result<f64> {
    check_lengths(preds, gts)?;
    let mut inter = vec![0usize; n_labels];
    let mut union = vec![0usize; n_labels];
    for (p, g) in preds.iter().zip(gts) {
        let (i, u) = counts(p, g, n_labels);
        for c in 0..n_labels {
            inter[c] += i[c];
            union[c] += u[c];
        }
    }
    let ious: Vec<f64> = (0..n_labels)
        .filter(|&c| union[c] > 0)
        .map(|c| inter[c] as f64 / union[c] as f64)
        .collect();
    mean(&ious).map(|m| 100.0 * m).ok_or(Error::NoLabeledPoints)
}

/// Mean over shapes of the per-shape mean IoU, skipping categories absent
/// from both the ground truth and the prediction of that shape. Shapes
/// without labeled points are skipped.
pub fn s_miou(preds: &[Vec<usize>], gts: &[Vec<Label>], n_labels: usize) -> Result<f64> {
    check_lengths(preds, gts)?;
    let per_shape: Vec<f64> = preds
        .iter()
        .zip(gts)
        .filter_map(|(p, g)| {
            let (i, u) = counts(p, g, n_labels);
            let ious: Vec<f64> = (0..n_labels)
                .filter(|&c| u[c] > 0)
                .map(|c| i[c] as f64 / u[c] as f64)
                .collect();
            mean(&ious)
        })
        .collect();
    mean(&per_shape).map(|m| 100.0 * m).ok_or(Error::NoLabeledPoints)
}

/// Flat benchmark metrics `(c-mIoU, i-mIoU)`.
///
/// `category_parts[c]` lists the part labels of object category `c`; a part
/// that is absent from both prediction and ground truth of a shape scores 1.
pub fn flat_mious(
    preds: &[Vec<usize>],
    gts: &[Vec<Label>],
    shape_categories: &[usize],
    category_parts: &[Vec<usize>],
) -> Result<(f64, f64)> {
    check_lengths(preds, gts)?;
    if shape_categories.len() != gts.len() {
        return Err(Error::ShapeCountMismatch(format!(
            "{} category ids for {} shapes",
            shape_categories.len(),
            gts.len()
        )));
    }
    if let Some(&c) = shape_categories.iter().find(|&&c| c >= category_parts.len()) {
        return Err(Error::UnknownCategory(c));
    }
    let n_labels = category_parts.iter().flatten().map(|&l| l + 1).max().unwrap_or(0);
    let n_labels = n_labels.max(preds.iter().flatten().map(|&l| l + 1).max().unwrap_or(0));
    let mut per_category: Vec<Vec<f64>> = vec![Vec::new(); category_parts.len()];
    let mut all = Vec::with_capacity(gts.len());
    for ((p, g), &cat) in preds.iter().zip(gts).zip(shape_categories) {
        let (i, u) = counts(p, g, n_labels);
        let ious: Vec<f64> = category_parts[cat]
            .iter()
            .map(|&l| if u[l] == 0 { 1.0 } else { i[l] as f64 / u[l] as f64 })
            .collect();
        let m = mean(&ious).unwrap_or(1.0);
        per_category[cat].push(m);
        all.push(m);
    }
    let i_miou = mean(&all).ok_or(Error::NoLabeledPoints)?;
    let cat_means: Vec<f64> = per_category.iter().filter_map(|v| mean(v)).collect();
    let c_miou = mean(&cat_means).ok_or(Error::NoLabeledPoints)?;
    Ok((100.0 * c_miou, 100.0 * i_miou))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LevelMetrics {
    pub p_miou: f64,
    pub s_miou: f64,
}

/// Both hierarchical metrics at every level. `preds[s][k]` holds the level-`k`
/// predictions of shape `s`.
pub fn evaluate_levels(
    preds: &[Vec<Vec<usize>>],
    gts: &[HierLabels],
    schema: &LabelSchema,
) -> Result<Vec<LevelMetrics>> {
    if preds.len() != gts.len() {
        return Err(Error::ShapeCountMismatch(format!(
            "{} predicted shapes, {} ground-truth shapes",
            preds.len(),
            gts.len()
        )));
    }
    (0..schema.level_count())
        .map(|k| {
            let p: Vec<Vec<usize>> = preds.iter().map(|s| s[k].clone()).collect();
            let g: Vec<Vec<Label>> = gts.iter().map(|s| s.level(k).to_vec()).collect();
            Ok(LevelMetrics {
                p_miou: p_miou(&p, &g, schema.labels(k))?,
                s_miou: s_miou(&p, &g, schema.labels(k))?,
            })
        })
        .collect()
}

/// Plain-text report, one line per level, levels numbered from 1.
pub fn format_report(levels: &[LevelMetrics]) -> String {
    let mut out = String::new();
    for (k, m) in levels.iter().enumerate() {
        let _ = writeln!(out, "level {} p-mIoU {:.1} s-mIoU {:.1}", k + 1, m.p_miou, m.s_miou);
    }
    out
}

pub fn format_flat_report(c_miou: f64, i_miou: f64) -> String {
    format!("c-mIoU {c_miou:.1} i-mIoU {i_miou:.1}\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(v: &[i64]) -> Vec<Label> {
        v.iter()
            .map(|&l| {
                if l < 0 {
                    Label::Unlabeled
                } else {
                    Label::part(l as usize)
                }
            })
            .collect()
    }

    #[test]
    fn perfect_predictions() {
        let g = vec![labels(&[0, 1, 1, 2])];
        let p = vec![vec![0, 1, 1, 2]];
        assert_eq!(p_miou(&p, &g, 3).unwrap(), 100.0);
        assert_eq!(s_miou(&p, &g, 3).unwrap(), 100.0);
    }

    #[test]
    fn swapped_labels_score_zero() {
        let g = vec![labels(&[0, 0, 1, 1])];
        let p = vec![vec![1, 1, 0, 0]];
        assert_eq!(p_miou(&p, &g, 2).unwrap(), 0.0);
    }

    #[test]
    fn invented_part_counts_as_zero() {
        let g = vec![labels(&[0, 0, 0, 0])];
        let p = vec![vec![0, 0, 0, 1]];
        // part 0: 3/4, part 1: 0/1
        assert!((s_miou(&p, &g, 2).unwrap() - 37.5).abs() < 1e-12);
    }

    #[test]
    fn unlabeled_points_are_ignored() {
        let g = vec![labels(&[0, -1, 1])];
        let p = vec![vec![0, 0, 1]];
        assert_eq!(s_miou(&p, &g, 2).unwrap(), 100.0);
    }

    #[test]
    fn category_and_instance_means() {
        // category 0: one shape at 60; category 1: three shapes at 80
        let g: Vec<Vec<Label>> = (0..4).map(|_| labels(&[0, 0, 0, 0, 0])).collect();
        let p = vec![
            vec![0, 0, 0, 1, 1],
            vec![0, 0, 0, 0, 1],
            vec![0, 0, 0, 0, 1],
            vec![0, 0, 0, 0, 1],
        ];
        let (c, i) = flat_mious(&p, &g, &[0, 1, 1, 1], &[vec![0], vec![0]]).unwrap();
        assert!((c - 70.0).abs() < 1e-12);
        assert!((i - 75.0).abs() < 1e-12);
    }

    #[test]
    fn unknown_category() {
        let g = vec![labels(&[0])];
        let p = vec![vec![0]];
        assert!(matches!(
            flat_mious(&p, &g, &[2], &[vec![0]]),
            Err(Error::UnknownCategory(2))
        ));
    }

    #[test]
    fn mismatched_shape_count() {
        let g = vec![labels(&[0])];
        assert!(matches!(p_miou(&[], &g, 1), Err(Error::ShapeCountMismatch(_))));
    }
}
