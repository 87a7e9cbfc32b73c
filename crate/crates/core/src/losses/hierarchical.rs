use ndarray::Array2;

use crate::error::{Error, Result};
use crate::field::{softmax_backward, ProbField};
use crate::perturb::Correspondence;
use crate::schema::LabelSchema;

use super::{check_pair, kl_accumulate, log_floor, zeros_like, TermValue};

/// Pseudo-probabilities at level `fine_level - 1`: each parent's entry is the
/// sum of its children's probabilities at `fine_level`.
pub fn merge_to_parent(p: &ProbField, fine_level: usize, schema: &LabelSchema) -> Result<Array2<f64>> {
    if fine_level == 0 || fine_level >= p.level_count() || p.level_count() != schema.level_count() {
        return Err(Error::InvalidParams(format!(
            "cannot merge level {fine_level} of a {}-level field",
            p.level_count()
        )));
    }
    let fine = p.level(fine_level);
    let parents = schema.parent_map(fine_level);
    let mut out = Array2::zeros((fine.nrows(), schema.labels(fine_level - 1)));
    for (i, row) in fine.outer_iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            out[[i, parents[c]]] += v;
        }
    }
    Ok(out)
}

/// Cross-copy KL between merged fine-level predictions of one copy and the
/// direct coarse-level predictions of the other, over levels `0..K-1`.
pub fn hierarchical_consistency(
    p_a: &ProbField,
    p_b: &ProbField,
    schema: &LabelSchema,
    corr: &Correspondence,
) -> Result<TermValue> {
    check_pair(p_a, p_b, corr)?;
    let mut ga = zeros_like(p_a);
    let mut gb = zeros_like(p_b);
    let mut value = 0.0;
    if schema.level_count() >= 2 && !corr.is_empty() {
        let scale = 1.0 / (2.0 * corr.len() as f64);
        for k in 0..schema.level_count() - 1 {
            let merged_a = merge_to_parent(p_a, k + 1, schema)?;
            let merged_b = merge_to_parent(p_b, k + 1, schema)?;
            let mut g_merged_a = Array2::<f64>::zeros(merged_a.raw_dim());
            let mut g_merged_b = Array2::<f64>::zeros(merged_b.raw_dim());
            let (ca, cb) = (p_a.level(k), p_b.level(k));
            let (lma, lmb, lca, lcb) = (log_floor(&merged_a), log_floor(&merged_b), log_floor(ca), log_floor(cb));
            for c in &corr.pairs {
                let ab = kl_accumulate(
                    merged_a.row(c.a),
                    lma.row(c.a),
                    cb.row(c.b),
                    lcb.row(c.b),
                    scale,
                    g_merged_a.row_mut(c.a),
                    gb[k].row_mut(c.b),
                );
                let ba = kl_accumulate(
                    merged_b.row(c.b),
                    lmb.row(c.b),
                    ca.row(c.a),
                    lca.row(c.a),
                    scale,
                    g_merged_b.row_mut(c.b),
                    ga[k].row_mut(c.a),
                );
                value += scale * (ab + ba);
            }
            let parents = schema.parent_map(k + 1);
            scatter_to_children(&g_merged_a, parents, &mut ga[k + 1]);
            scatter_to_children(&g_merged_b, parents, &mut gb[k + 1]);
        }
    }
    Ok(TermValue {
        value,
        grad_a: softmax_backward(p_a, &ga),
        grad_b: softmax_backward(p_b, &gb),
    })
}

fn scatter_to_children(g_parent: &Array2<f64>, parents: &[usize], g_child: &mut Array2<f64>) {
    for (i, mut row) in g_child.outer_iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            *v += g_parent[[i, parents[c]]];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn merge_total_mass() {
        let s = LabelSchema::from_parents(vec![1, 2], vec![vec![0, 0]]).unwrap();
        let p = ProbField::new(vec![array![[1.0]], array![[0.3, 0.7]]]).unwrap();
        let m = merge_to_parent(&p, 1, &s).unwrap();
        assert_eq!(m, array![[1.0]]);
    }

    #[test]
    fn merge_chair_arm() {
        // coarse: 0 arm, 1 other; fine: 0 vertical bar, 1 horizontal bar, 2 other
        let s = LabelSchema::from_parents(vec![2, 3], vec![vec![0, 0, 1]]).unwrap();
        let p = ProbField::new(vec![array![[0.5, 0.5]], array![[0.3, 0.2, 0.5]]]).unwrap();
        let m = merge_to_parent(&p, 1, &s).unwrap();
        assert!((m[[0, 0]] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn single_level_schema_gives_zero() {
        let s = LabelSchema::flat(2).unwrap();
        let a = ProbField::new(vec![array![[0.9, 0.1]]]).unwrap();
        let b = ProbField::new(vec![array![[0.2, 0.8]]]).unwrap();
        let t = hierarchical_consistency(&a, &b, &s, &Correspondence::identity(1)).unwrap();
        assert_eq!(t.value, 0.0);
    }

    #[test]
    fn consistent_hierarchy_gives_zero() {
        let s = LabelSchema::from_parents(vec![2, 3], vec![vec![0, 0, 1]]).unwrap();
        let a = ProbField::new(vec![array![[0.6, 0.4]], array![[0.1, 0.5, 0.4]]]).unwrap();
        let b = ProbField::new(vec![array![[0.6, 0.4]], array![[0.3, 0.3, 0.4]]]).unwrap();
        let t = hierarchical_consistency(&a, &b, &s, &Correspondence::identity(1)).unwrap();
        assert!(t.value.abs() < 1e-15);
    }
}
