//! Part-level consistency through pseudo-partitions.
//!
//! The argmax partition of one copy is imposed on the other, and the
//! belonging- and outlier-confidence of every pseudo-part are compared
//! between the copies. Assignments are treated as constants when
//! differentiating; only the confidence means carry gradient.

use ndarray::Array2;

use crate::error::Result;
use crate::field::{argmax_row, softmax_backward, ProbField};
use crate::perturb::Correspondence;

use super::{check_pair, zeros_like, TermValue};

/// Per-level argmax assignment of every row.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PseudoPartition {
    pub levels: Vec<Vec<usize>>,
}

pub fn pseudo_partition(p: &ProbField) -> PseudoPartition {
    PseudoPartition { levels: p.argmax() }
}

/// Belonging- and outlier-confidence of one pseudo-part; `None` when the
/// part (or its complement) is empty.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Confidences {
    pub bc: Option<f64>,
    pub oc: Option<f64>,
}

pub fn confidences(partition: &PseudoPartition, p: &ProbField, level: usize, label: usize) -> Confidences {
    let assign = &partition.levels[level];
    let col = p.level(level).column(label);
    let (mut s_in, mut n_in, mut s_out, mut n_out) = (0.0, 0usize, 0.0, 0usize);
    for (i, &a) in assign.iter().enumerate() {
        if a == label {
            s_in += col[i];
            n_in += 1;
        } else {
            s_out += col[i];
            n_out += 1;
        }
    }
    Confidences {
        bc: (n_in > 0).then(|| s_in / n_in as f64),
        oc: (n_out > 0).then(|| s_out / n_out as f64),
    }
}

/// One imposed-partition term for a label column: `assign` comes from the
/// `src` copy, `src_rows`/`dst_rows` map correspondence entries to rows.
#[allow(clippy::too_many_arguments)]
fn imposed_term(
    assign: &[usize],
    label: usize,
    src: &Array2<f64>,
    src_rows: &[usize],
    dst: &Array2<f64>,
    dst_rows: &[usize],
    g_src: &mut Array2<f64>,
    g_dst: &mut Array2<f64>,
) -> f64 {
    let (mut in_src, mut in_dst, mut out_src, mut out_dst) = (0.0, 0.0, 0.0, 0.0);
    let mut n_in = 0usize;
    for (t, &a) in assign.iter().enumerate() {
        let (vs, vd) = (src[[src_rows[t], label]], dst[[dst_rows[t], label]]);
        if a == label {
            in_src += vs;
            in_dst += vd;
            n_in += 1;
        } else {
            out_src += vs;
            out_dst += vd;
        }
    }
    let n_out = assign.len() - n_in;
    let (alpha, beta) = match (n_in, n_out) {
        (0, _) => (0.0, 1.0),
        (_, 0) => (1.0, 0.0),
        _ => (0.5, 0.5),
    };
    let d_bc = if n_in > 0 { (in_src - in_dst) / n_in as f64 } else { 0.0 };
    let d_oc = if n_out > 0 {
        (out_src - out_dst) / n_out as f64
    } else {
        0.0
    };
    let g_in = if n_in > 0 {
        alpha * 2.0 * d_bc / n_in as f64
    } else {
        0.0
    };
    let g_out = if n_out > 0 {
        beta * 2.0 * d_oc / n_out as f64
    } else {
        0.0
    };
    for (t, &a) in assign.iter().enumerate() {
        let g = if a == label { g_in } else { g_out };
        g_src[[src_rows[t], label]] += g;
        g_dst[[dst_rows[t], label]] -= g;
    }
    alpha * d_bc * d_bc + beta * d_oc * d_oc
}

/// Part-level consistency summed over levels and labels.
///
/// For each label the partition of copy A is imposed on copy B and vice
/// versa. Weights are `alpha = beta = 1/2` when both the part and its
/// complement are nonempty, `(0, 1)` for an empty part and `(1, 0)` for a
/// part covering every point.
pub fn part_consistency(p_a: &ProbField, p_b: &ProbField, corr: &Correspondence) -> Result<TermValue> {
    check_pair(p_a, p_b, corr)?;
    let mut ga = zeros_like(p_a);
    let mut gb = zeros_like(p_b);
    let rows_a: Vec<usize> = corr.pairs.iter().map(|c| c.a).collect();
    let rows_b: Vec<usize> = corr.pairs.iter().map(|c| c.b).collect();
    let mut value = 0.0;
    if !corr.is_empty() {
        for k in 0..p_a.level_count() {
            let (ma, mb) = (p_a.level(k), p_b.level(k));
            let assign_a: Vec<usize> = rows_a.iter().map(|&r| argmax_row(ma.row(r))).collect();
            let assign_b: Vec<usize> = rows_b.iter().map(|&r| argmax_row(mb.row(r))).collect();
            let (gak, gbk) = (&mut ga[k], &mut gb[k]);
            for j in 0..ma.ncols() {
                let from_a = imposed_term(&assign_a, j, ma, &rows_a, mb, &rows_b, gak, gbk);
                let from_b = imposed_term(&assign_b, j, mb, &rows_b, ma, &rows_a, gbk, gak);
                value += from_a + from_b;
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
    fn confidences_hand_example() {
        let p = ProbField::new(vec![array![[0.8, 0.2], [0.6, 0.4], [0.3, 0.7], [0.1, 0.9]]]).unwrap();
        let part = pseudo_partition(&p);
        assert_eq!(part.levels[0], vec![0, 0, 1, 1]);
        let c = confidences(&part, &p, 0, 0);
        assert!((c.bc.unwrap() - 0.7).abs() < 1e-15);
        assert!((c.oc.unwrap() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn full_and_empty_parts() {
        let p = ProbField::new(vec![array![[0.9, 0.1], [0.9, 0.1]]]).unwrap();
        let part = pseudo_partition(&p);
        let c = confidences(&part, &p, 0, 0);
        assert_eq!(c.bc, Some(0.9));
        assert_eq!(c.oc, None);
        let c = confidences(&part, &p, 0, 1);
        assert_eq!(c.bc, None);
        assert!((c.oc.unwrap() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn identical_fields_give_zero() {
        let p = ProbField::new(vec![array![[0.9, 0.1], [0.3, 0.7], [0.5, 0.5]]]).unwrap();
        let t = part_consistency(&p, &p, &Correspondence::identity(3)).unwrap();
        assert_eq!(t.value, 0.0);
    }

    #[test]
    fn swapping_copies_is_exactly_symmetric() {
        let a = ProbField::new(vec![array![[0.9, 0.1], [0.8, 0.2], [0.3, 0.7]]]).unwrap();
        let b = ProbField::new(vec![array![[0.6, 0.4], [0.2, 0.8], [0.45, 0.55]]]).unwrap();
        let c = Correspondence::identity(3);
        let ab = part_consistency(&a, &b, &c).unwrap();
        let ba = part_consistency(&b, &a, &c).unwrap();
        assert_eq!(ab.value, ba.value);
    }
}
