//! Per-level score and probability matrices (one row per point).

use ndarray::{Array2, ArrayView1, ArrayViewMut1, Axis};

use crate::error::{Error, Result};
use crate::schema::LabelSchema;

pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// Unnormalized per-level scores. Also used for gradients with respect to them.
#[derive(Clone, Debug, PartialEq)]
pub struct LogitsField {
    pub levels: Vec<Array2<f64>>,
}

/// Row-stochastic per-level probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbField {
    levels: Vec<Array2<f64>>,
}

impl LogitsField {
    pub fn new(levels: Vec<Array2<f64>>) -> Result<Self> {
        check_rows(&levels)?;
        if levels.iter().any(|m| m.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidField("non-finite logit".into()));
        }
        Ok(LogitsField { levels })
    }

    pub fn zeros(rows: usize, schema: &LabelSchema) -> Self {
        LogitsField {
            levels: schema
                .labels_per_level()
                .iter()
                .map(|&l| Array2::zeros((rows, l)))
                .collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.levels.first().map_or(0, |m| m.nrows())
    }

    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    pub fn matches_schema(&self, schema: &LabelSchema) -> bool {
        self.levels.len() == schema.level_count()
            && self
                .levels
                .iter()
                .zip(schema.labels_per_level())
                .all(|(m, &l)| m.ncols() == l)
    }

    /// `self += factor * other`.
    pub fn add_scaled(&mut self, other: &LogitsField, factor: f64) {
        for (a, b) in self.levels.iter_mut().zip(&other.levels) {
            a.scaled_add(factor, b);
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.levels
            .iter()
            .flat_map(|m| m.iter())
            .fold(0.0, |a: f64, v| a.max(v.abs()))
    }

    /// Flat copy of every entry, level by level, row-major.
    pub fn to_flat(&self) -> Vec<f64> {
        self.levels.iter().flat_map(|m| m.iter().copied()).collect()
    }

    /// Overwrite entries from a flat buffer in [`LogitsField::to_flat`] order.
    pub fn set_flat(&mut self, values: &[f64]) {
        let mut it = values.iter();
        for m in &mut self.levels {
            for v in m.iter_mut() {
                *v = *it.next().expect("flat buffer too short");
            }
        }
    }
}

fn check_rows(levels: &[Array2<f64>]) -> Result<()> {
    if let Some(first) = levels.first() {
        if let Some(m) = levels.iter().find(|m| m.nrows() != first.nrows()) {
            return Err(Error::ShapeMismatch {
                what: "rows",
                got: m.nrows(),
                expected: first.nrows(),
            });
        }
    }
    Ok(())
}

impl ProbField {
    /// Validates entry range and row sums; never modifies the input.
    pub fn new(levels: Vec<Array2<f64>>) -> Result<Self> {
        check_rows(&levels)?;
        for (k, m) in levels.iter().enumerate() {
            // summed entries may round a few ulps past 1
            if m.iter().any(|v| !(0.0..=1.0 + ROW_SUM_TOLERANCE).contains(v)) {
                return Err(Error::InvalidField(format!("level {k} has an entry outside [0, 1]")));
            }
            for (i, row) in m.axis_iter(Axis(0)).enumerate() {
                if (row.sum() - 1.0).abs() > ROW_SUM_TOLERANCE {
                    return Err(Error::InvalidField(format!("level {k} row {i} does not sum to 1")));
                }
            }
        }
        Ok(ProbField { levels })
    }

    pub(crate) fn from_trusted(levels: Vec<Array2<f64>>) -> Self {
        ProbField { levels }
    }

    pub fn levels(&self) -> &[Array2<f64>] {
        &self.levels
    }

    pub fn level(&self, k: usize) -> &Array2<f64> {
        &self.levels[k]
    }

    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    pub fn rows(&self) -> usize {
        self.levels.first().map_or(0, |m| m.nrows())
    }

    pub fn row(&self, level: usize, i: usize) -> ArrayView1<'_, f64> {
        self.levels[level].row(i)
    }

    /// Row-argmax labels per level, smallest index on ties.
    pub fn argmax(&self) -> Vec<Vec<usize>> {
        self.levels
            .iter()
            .map(|m| m.axis_iter(Axis(0)).map(|r| argmax_row(r)).collect())
            .collect()
    }
}

pub fn argmax_row(row: ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = j;
        }
    }
    best
}

fn softmax_row(mut row: ArrayViewMut1<'_, f64>) {
    let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    row.mapv_inplace(|v| (v - m).exp());
    let s = row.sum();
    row.mapv_inplace(|v| v / s);
}

/// Numerically stable row softmax of every level.
pub fn softmax_field(logits: &LogitsField) -> ProbField {
    let levels = logits
        .levels
        .iter()
        .map(|m| {
            let mut p = m.clone();
            for row in p.axis_iter_mut(Axis(0)) {
                softmax_row(row);
            }
            p
        })
        .collect();
    ProbField::from_trusted(levels)
}

/// Pull a gradient with respect to probabilities back through the softmax:
/// `dz_m = p_m (g_m - <g, p>)`.
pub fn softmax_backward(p: &ProbField, grad_p: &[Array2<f64>]) -> LogitsField {
    let levels = p
        .levels
        .iter()
        .zip(grad_p)
        .map(|(pm, gm)| {
            let mut out = Array2::zeros(pm.raw_dim());
            for ((pr, gr), mut or) in pm
                .axis_iter(Axis(0))
                .zip(gm.axis_iter(Axis(0)))
                .zip(out.axis_iter_mut(Axis(0)))
            {
                let dot: f64 = pr.iter().zip(gr.iter()).map(|(a, b)| a * b).sum();
                for ((o, &pv), &gv) in or.iter_mut().zip(pr.iter()).zip(gr.iter()) {
                    *o = pv * (gv - dot);
                }
            }
            out
        })
        .collect();
    LogitsField { levels }
}
