use ndarray::Array2;

use crate::error::Result;
use crate::field::{softmax_backward, ProbField};
use crate::perturb::Correspondence;

use super::{check_pair, kl_accumulate, log_floor, zeros_like, TermValue};

/// Divergence used between corresponding probability vectors.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PointMetric {
    /// Symmetric KL divergence.
    #[default]
    Kl,
    /// Squared Euclidean distance, counted once in each direction.
    Mse,
}

/// Symmetric KL between corresponding points of the two copies, averaged
/// over `2 |corr|` and summed over levels.
pub fn point_consistency(p_a: &ProbField, p_b: &ProbField, corr: &Correspondence) -> Result<TermValue> {
    point_consistency_with(p_a, p_b, corr, PointMetric::Kl)
}

pub fn point_consistency_with(
    p_a: &ProbField,
    p_b: &ProbField,
    corr: &Correspondence,
    metric: PointMetric,
) -> Result<TermValue> {
    check_pair(p_a, p_b, corr)?;
    let mut ga = zeros_like(p_a);
    let mut gb = zeros_like(p_b);
    if corr.is_empty() {
        return Ok(TermValue {
            value: 0.0,
            grad_a: softmax_backward(p_a, &ga),
            grad_b: softmax_backward(p_b, &gb),
        });
    }
    let scale = 1.0 / (2.0 * corr.len() as f64);
    let mut value = 0.0;
    for k in 0..p_a.level_count() {
        let (ma, mb) = (p_a.level(k), p_b.level(k));
        let (gak, gbk): (&mut Array2<f64>, &mut Array2<f64>) = (&mut ga[k], &mut gb[k]);
        let (log_a, log_b) = match metric {
            PointMetric::Kl => (Some(log_floor(ma)), Some(log_floor(mb))),
            PointMetric::Mse => (None, None),
        };
        for c in &corr.pairs {
            let (ra, rb) = (ma.row(c.a), mb.row(c.b));
            match metric {
                PointMetric::Kl => {
                    let (la, lb) = (log_a.as_ref().unwrap().row(c.a), log_b.as_ref().unwrap().row(c.b));
                    let ab = kl_accumulate(ra, la, rb, lb, scale, gak.row_mut(c.a), gbk.row_mut(c.b));
                    let ba = kl_accumulate(rb, lb, ra, la, scale, gbk.row_mut(c.b), gak.row_mut(c.a));
                    value += scale * (ab + ba);
                }
                PointMetric::Mse => {
                    let d2: f64 = ra.iter().zip(rb.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
                    value += scale * 2.0 * d2;
                    for m in 0..ra.len() {
                        let d = ra[m] - rb[m];
                        gak[[c.a, m]] += scale * 4.0 * d;
                        gbk[[c.b, m]] -= scale * 4.0 * d;
                    }
                }
            }
        }
    }
    Ok(TermValue {
        value,
        grad_a: softmax_backward(p_a, &ga),
        grad_b: softmax_backward(p_b, &gb),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn identical_fields_give_zero() {
        let p = ProbField::new(vec![array![[0.2, 0.8], [0.6, 0.4]]]).unwrap();
        let t = point_consistency(&p, &p, &Correspondence::identity(2)).unwrap();
        assert_eq!(t.value, 0.0);
        assert!(t.grad_a.max_abs() < 1e-15);
    }

    #[test]
    #[allow(clippy::excessive_precision)]
    fn opposite_near_one_hot_rows() {
        // (1/2) * 2 * (1 - 2e) ln((1 - e) / e) at e = 1e-8, from a 40-digit evaluation.
        let e = 1e-8;
        let a = ProbField::new(vec![array![[1.0 - e, e]]]).unwrap();
        let b = ProbField::new(vec![array![[e, 1.0 - e]]]).unwrap();
        let t = point_consistency(&a, &b, &Correspondence::identity(1)).unwrap();
        assert!((t.value - 18.420680365538750743).abs() < 1e-9);
    }

    #[test]
    fn mse_variant() {
        let a = ProbField::new(vec![array![[0.5, 0.5]]]).unwrap();
        let b = ProbField::new(vec![array![[0.25, 0.75]]]).unwrap();
        let t = point_consistency_with(&a, &b, &Correspondence::identity(1), PointMetric::Mse).unwrap();
        assert!((t.value - 0.125).abs() < 1e-15);
    }
}
