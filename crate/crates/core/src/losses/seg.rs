use crate::cloud::HierLabels;
use crate::error::{Error, Result};
use crate::field::{LogitsField, ProbField};
use crate::perturb::Correspondence;

use super::{check_pair, floor_ln, zeros_like, TermValue};

/// Multilevel cross-entropy of both copies against the ground truth.
///
/// `q` is indexed by original point index. Points unlabeled at a level are
/// skipped at that level; the normalizer stays `2 |corr|`.
pub fn seg_loss(q: &HierLabels, p_a: &ProbField, p_b: &ProbField, corr: &Correspondence) -> Result<TermValue> {
    check_pair(p_a, p_b, corr)?;
    if q.level_count() != p_a.level_count() {
        return Err(Error::ShapeMismatch {
            what: "label levels",
            got: q.level_count(),
            expected: p_a.level_count(),
        });
    }
    if let Some(c) = corr.pairs.iter().find(|c| c.source >= q.len()) {
        return Err(Error::ShapeMismatch {
            what: "label index",
            got: c.source,
            expected: q.len(),
        });
    }
    let scale = 1.0 / (2.0 * corr.len() as f64);
    let mut ga = zeros_like(p_a);
    let mut gb = zeros_like(p_b);
    let mut value = 0.0;
    let mut labeled = 0usize;
    for k in 0..p_a.level_count() {
        let (ma, mb) = (p_a.level(k), p_b.level(k));
        for c in &corr.pairs {
            let Some(l) = q.get(k, c.source).id() else { continue };
            labeled += 1;
            value -= scale * (floor_ln(ma[[c.a, l]]) + floor_ln(mb[[c.b, l]]));
            for m in 0..ma.ncols() {
                let hot = if m == l { 1.0 } else { 0.0 };
                ga[k][[c.a, m]] += scale * (ma[[c.a, m]] - hot);
                gb[k][[c.b, m]] += scale * (mb[[c.b, m]] - hot);
            }
        }
    }
    if labeled == 0 {
        return Err(Error::NoLabeledPoints);
    }
    Ok(TermValue {
        value,
        grad_a: LogitsField { levels: ga },
        grad_b: LogitsField { levels: gb },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::Label;
    use crate::schema::LabelSchema;
    use ndarray::array;

    #[test]
    fn one_hot_predictions_give_zero() {
        let s = LabelSchema::flat(3).unwrap();
        let q = HierLabels::new(vec![vec![Label::part(2)]], &s).unwrap();
        let p = ProbField::new(vec![array![[0.0, 0.0, 1.0]]]).unwrap();
        let t = seg_loss(&q, &p, &p, &Correspondence::identity(1)).unwrap();
        assert_eq!(t.value, 0.0);
    }

    #[test]
    fn uniform_prediction_gives_ln_l() {
        let s = LabelSchema::flat(4).unwrap();
        let q = HierLabels::new(vec![vec![Label::part(1)]], &s).unwrap();
        let p = ProbField::new(vec![array![[0.25, 0.25, 0.25, 0.25]]]).unwrap();
        let t = seg_loss(&q, &p, &p, &Correspondence::identity(1)).unwrap();
        assert!((t.value - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn no_labeled_points() {
        let s = LabelSchema::flat(2).unwrap();
        let q = HierLabels::new(vec![vec![Label::Unlabeled]], &s).unwrap();
        let p = ProbField::new(vec![array![[0.5, 0.5]]]).unwrap();
        assert!(matches!(
            seg_loss(&q, &p, &p, &Correspondence::identity(1)),
            Err(Error::NoLabeledPoints)
        ));
    }
}
