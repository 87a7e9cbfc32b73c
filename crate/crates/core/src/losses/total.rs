use crate::cloud::HierLabels;
use crate::error::{Error, Result};
use crate::field::{softmax_field, LogitsField};
use crate::perturb::Correspondence;
use crate::schema::LabelSchema;

use super::{hierarchical_consistency, part_consistency, point_consistency_with, seg_loss, PointMetric, TermValue};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub gamma: f64,
    pub lambda_pts: f64,
    pub lambda_part: f64,
    pub lambda_h: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            gamma: 1.0,
            lambda_pts: 0.01,
            lambda_part: 0.01,
            lambda_h: 0.01,
        }
    }
}

impl LossWeights {
    /// Cross-entropy only.
    pub fn supervised() -> Self {
        LossWeights {
            gamma: 1.0,
            lambda_pts: 0.0,
            lambda_part: 0.0,
            lambda_h: 0.0,
        }
    }

    /// The same consistency weights with `gamma = 0`, as used for unlabeled samples.
    pub fn unlabeled(self) -> Self {
        LossWeights { gamma: 0.0, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.gamma, self.lambda_pts, self.lambda_part, self.lambda_h];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidParams(format!(
                "loss weights must be non-negative: {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossReport {
    pub seg: f64,
    pub point: f64,
    pub part: f64,
    pub hier: f64,
    pub total: f64,
    pub grad_a: LogitsField,
    pub grad_b: LogitsField,
}

pub fn total_loss(
    logits_a: &LogitsField,
    logits_b: &LogitsField,
    q: Option<&HierLabels>,
    schema: &LabelSchema,
    corr: &Correspondence,
    w: &LossWeights,
) -> Result<LossReport> {
    total_loss_with(logits_a, logits_b, q, schema, corr, w, PointMetric::Kl)
}

/// Weighted sum of all terms. A term whose weight is zero still reports its
/// value but contributes nothing to the gradients. The segmentation term is
/// 0 when every corresponding point is unlabeled.
pub fn total_loss_with(
    logits_a: &LogitsField,
    logits_b: &LogitsField,
    q: Option<&HierLabels>,
    schema: &LabelSchema,
    corr: &Correspondence,
    w: &LossWeights,
    metric: PointMetric,
) -> Result<LossReport> {
    w.validate()?;
    for lf in [logits_a, logits_b] {
        if !lf.matches_schema(schema) {
            return Err(Error::ShapeMismatch {
                what: "logit levels",
                got: lf.level_count(),
                expected: schema.level_count(),
            });
        }
    }
    let p_a = softmax_field(logits_a);
    let p_b = softmax_field(logits_b);
    let seg = match q {
        Some(q) => match seg_loss(q, &p_a, &p_b, corr) {
            Ok(t) => Some(t),
            Err(Error::NoLabeledPoints) => None,
            Err(e) => return Err(e),
        },
        None if w.gamma > 0.0 => return Err(Error::MissingLabels),
        None => None,
    };
    let point = point_consistency_with(&p_a, &p_b, corr, metric)?;
    let part = part_consistency(&p_a, &p_b, corr)?;
    let hier = hierarchical_consistency(&p_a, &p_b, schema, corr)?;

    let mut grad_a = LogitsField::zeros(logits_a.rows(), schema);
    let mut grad_b = LogitsField::zeros(logits_b.rows(), schema);
    let mut accumulate = |weight: f64, t: &TermValue| {
        if weight != 0.0 {
            grad_a.add_scaled(&t.grad_a, weight);
            grad_b.add_scaled(&t.grad_b, weight);
        }
    };
    if let Some(t) = &seg {
        accumulate(w.gamma, t);
    }
    accumulate(w.lambda_pts, &point);
    accumulate(w.lambda_part, &part);
    accumulate(w.lambda_h, &hier);

    let seg_value = seg.as_ref().map_or(0.0, |t| t.value);
    let total = w.gamma * seg_value + w.lambda_pts * point.value + w.lambda_part * part.value + w.lambda_h * hier.value;
    Ok(LossReport {
        seg: seg_value,
        point: point.value,
        part: part.value,
        hier: hier.value,
        total,
        grad_a,
        grad_b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn schema() -> LabelSchema {
        LabelSchema::from_parents(vec![2, 3], vec![vec![0, 0, 1]]).unwrap()
    }

    fn logits() -> LogitsField {
        LogitsField::new(vec![
            array![[0.3, -0.2], [1.0, 0.5]],
            array![[0.1, 0.2, -0.4], [0.0, 2.0, 1.0]],
        ])
        .unwrap()
    }

    #[test]
    fn unlabeled_identical_copies_give_zero() {
        let l = logits();
        let r = total_loss(
            &l,
            &l,
            None,
            &schema(),
            &Correspondence::identity(2),
            &LossWeights::default().unlabeled(),
        )
        .unwrap();
        assert_eq!(r.point, 0.0);
        assert_eq!(r.part, 0.0);
        // these logits are not hierarchy-consistent, so only the cross-level term remains
        assert!((r.total - 0.01 * r.hier).abs() < 1e-15);
    }

    #[test]
    fn zero_weights_give_zero_gradients() {
        let l = logits();
        let w = LossWeights {
            gamma: 0.0,
            lambda_pts: 0.0,
            lambda_part: 0.0,
            lambda_h: 0.0,
        };
        let mut other = l.clone();
        other.levels[0][[0, 0]] = 3.0;
        let r = total_loss(&l, &other, None, &schema(), &Correspondence::identity(2), &w).unwrap();
        assert_eq!(r.total, 0.0);
        assert_eq!(r.grad_a.max_abs(), 0.0);
        assert_eq!(r.grad_b.max_abs(), 0.0);
    }

    #[test]
    fn missing_labels() {
        let l = logits();
        let r = total_loss(
            &l,
            &l,
            None,
            &schema(),
            &Correspondence::identity(2),
            &LossWeights::default(),
        );
        assert!(matches!(r, Err(Error::MissingLabels)));
    }
}
