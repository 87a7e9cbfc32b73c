//! Segmentation and multilevel consistency losses with analytic gradients.
//!
//! Every term takes the probability fields of the two perturbed copies plus
//! the correspondence between their rows, and returns its value together with
//! gradients with respect to the pre-softmax logits of each copy. Rows outside
//! the correspondence receive zero gradient.

mod hierarchical;
mod part;
mod point;
mod seg;
mod total;

use ndarray::{Array2, ArrayView1, ArrayViewMut1};

pub use hierarchical::{hierarchical_consistency, merge_to_parent};
pub use part::{confidences, part_consistency, pseudo_partition, Confidences, PseudoPartition};
pub use point::{point_consistency, point_consistency_with, PointMetric};
pub use seg::seg_loss;
pub use total::{total_loss, total_loss_with, LossReport, LossWeights};

use crate::error::{Error, Result};
use crate::field::{LogitsField, ProbField};
use crate::perturb::Correspondence;

/// Probabilities are floored at this value inside logarithms only.
pub const LOG_FLOOR: f64 = 1e-8;

/// A loss value with gradients with respect to the logits of both copies.
#[derive(Clone, Debug, PartialEq)]
pub struct TermValue {
    pub value: f64,
    pub grad_a: LogitsField,
    pub grad_b: LogitsField,
}

pub(crate) fn zeros_like(p: &ProbField) -> Vec<Array2<f64>> {
    p.levels().iter().map(|m| Array2::zeros(m.raw_dim())).collect()
}

#[inline]
pub(crate) fn floor_ln(x: f64) -> f64 {
    x.max(LOG_FLOOR).ln()
}

/// Elementwise floored logarithm of a probability matrix.
pub(crate) fn log_floor(m: &Array2<f64>) -> Array2<f64> {
    m.mapv(floor_ln)
}

/// `D_KL(p || q)` given the rows and their floored logs; adds
/// `scale * dD/dp` to `gp` and `scale * dD/dq` to `gq`.
pub(crate) fn kl_accumulate(
    p: ArrayView1<'_, f64>,
    lp: ArrayView1<'_, f64>,
    q: ArrayView1<'_, f64>,
    lq: ArrayView1<'_, f64>,
    scale: f64,
    mut gp: ArrayViewMut1<'_, f64>,
    mut gq: ArrayViewMut1<'_, f64>,
) -> f64 {
    let mut value = 0.0;
    for m in 0..p.len() {
        let (pm, qm) = (p[m], q[m]);
        let d = lp[m] - lq[m];
        if pm != 0.0 {
            value += pm * d;
        }
        let active_p = if pm > LOG_FLOOR { 1.0 } else { 0.0 };
        gp[m] += scale * (d + active_p);
        if qm > LOG_FLOOR {
            gq[m] -= scale * pm / qm;
        }
    }
    value
}

pub(crate) fn check_pair(p_a: &ProbField, p_b: &ProbField, corr: &Correspondence) -> Result<()> {
    if p_a.level_count() != p_b.level_count() {
        return Err(Error::ShapeMismatch {
            what: "levels",
            got: p_b.level_count(),
            expected: p_a.level_count(),
        });
    }
    for (ma, mb) in p_a.levels().iter().zip(p_b.levels()) {
        if ma.ncols() != mb.ncols() {
            return Err(Error::ShapeMismatch {
                what: "columns",
                got: mb.ncols(),
                expected: ma.ncols(),
            });
        }
    }
    for c in &corr.pairs {
        if c.a >= p_a.rows() || c.b >= p_b.rows() {
            return Err(Error::ShapeMismatch {
                what: "correspondence row",
                got: c.a.max(c.b),
                expected: p_a.rows().min(p_b.rows()),
            });
        }
    }
    Ok(())
}
