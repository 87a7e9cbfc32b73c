//! Python bindings. Fields, labels and correspondences cross the boundary as
//! nested lists; `-1` marks an unlabeled point.

use mcseg_core::cloud::{HierLabels, Label};
use mcseg_core::field::LogitsField;
use mcseg_core::gradcheck::GradcheckConfig;
use mcseg_core::io;
use mcseg_core::losses::{total_loss, LossWeights};
use mcseg_core::perturb::{CorrPair, Correspondence};
use mcseg_core::rng::Stream;
use mcseg_core::schema::LabelSchema;
use mcseg_core::synth;
use ndarray::Array2;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

type ShapeLists = (Vec<[f64; 3]>, Vec<Vec<i64>>);

fn err(e: mcseg_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn labels_from(raw: Vec<i64>) -> Vec<Label> {
    raw.into_iter()
        .map(|l| {
            if l < 0 {
                Label::Unlabeled
            } else {
                Label::part(l as usize)
            }
        })
        .collect()
}

fn logits_from(levels: Vec<Vec<Vec<f64>>>) -> PyResult<LogitsField> {
    let mats = levels
        .into_iter()
        .enumerate()
        .map(|(k, rows)| {
            let cols = rows.first().map_or(0, Vec::len);
            let n = rows.len();
            let flat: Vec<f64> = rows.into_iter().flatten().collect();
            Array2::from_shape_vec((n, cols), flat).map_err(|_| PyValueError::new_err(format!("level {k} is ragged")))
        })
        .collect::<PyResult<Vec<_>>>()?;
    LogitsField::new(mats).map_err(err)
}

fn parse_schema(text: &str) -> PyResult<LabelSchema> {
    io::parse_schema(text, "<schema>").map_err(err)
}

/// Loss terms for two copies of a shape.
///
/// `schema` is schema-file text, the logits are per-level row lists, `corr`
/// holds `(source, a, b)` triples and `labels` per-level source labels.
#[pyfunction]
#[pyo3(signature = (schema, logits_a, logits_b, corr, labels=None, gamma=1.0, lambda_pts=0.01, lambda_part=0.01, lambda_h=0.01))]
#[allow(clippy::too_many_arguments)]
fn loss_terms<'py>(
    py: Python<'py>,
    schema: &str,
    logits_a: Vec<Vec<Vec<f64>>>,
    logits_b: Vec<Vec<Vec<f64>>>,
    corr: Vec<(usize, usize, usize)>,
    labels: Option<Vec<Vec<i64>>>,
    gamma: f64,
    lambda_pts: f64,
    lambda_part: f64,
    lambda_h: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let schema = parse_schema(schema)?;
    let corr = Correspondence {
        pairs: corr
            .into_iter()
            .map(|(source, a, b)| CorrPair { source, a, b })
            .collect(),
    };
    let labels = labels
        .map(|l| HierLabels::new(l.into_iter().map(labels_from).collect(), &schema))
        .transpose()
        .map_err(err)?;
    let w = LossWeights {
        gamma,
        lambda_pts,
        lambda_part,
        lambda_h,
    };
    let r = total_loss(
        &logits_from(logits_a)?,
        &logits_from(logits_b)?,
        labels.as_ref(),
        &schema,
        &corr,
        &w,
    )
    .map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("seg", r.seg)?;
    d.set_item("point", r.point)?;
    d.set_item("part", r.part)?;
    d.set_item("hier", r.hier)?;
    d.set_item("total", r.total)?;
    Ok(d)
}

/// Pooled part IoU over all shapes, in percent.
#[pyfunction]
fn p_miou(preds: Vec<Vec<usize>>, gts: Vec<Vec<i64>>, n_labels: usize) -> PyResult<f64> {
    let gts: Vec<_> = gts.into_iter().map(labels_from).collect();
    mcseg_core::metrics::p_miou(&preds, &gts, n_labels).map_err(err)
}

/// Mean of per-shape mIoU, in percent.
#[pyfunction]
fn s_miou(preds: Vec<Vec<usize>>, gts: Vec<Vec<i64>>, n_labels: usize) -> PyResult<f64> {
    let gts: Vec<_> = gts.into_iter().map(labels_from).collect();
    mcseg_core::metrics::s_miou(&preds, &gts, n_labels).map_err(err)
}

/// One procedural shape: `(points, labels)` with labels listed per level.
#[pyfunction]
#[pyo3(signature = (category, seed, points=None))]
fn generate_shape(category: &str, seed: u64, points: Option<usize>) -> PyResult<ShapeLists> {
    let mut spec =
        synth::builtin(category).ok_or_else(|| PyValueError::new_err(format!("unknown category {category:?}")))?;
    if let Some(n) = points {
        spec.points = n;
    }
    let shape = synth::generate_shape(&spec, Stream::new(seed)).map_err(err)?;
    let labels = (0..shape.labels.level_count())
        .map(|k| shape.labels.level(k).iter().map(|l| l.to_i64()).collect())
        .collect();
    Ok((shape.cloud.points().to_vec(), labels))
}

/// Schema-file text of a built-in category.
#[pyfunction]
fn category_schema(category: &str) -> PyResult<String> {
    synth::builtin(category)
        .map(|s| io::format_schema(&s.schema))
        .ok_or_else(|| PyValueError::new_err(format!("unknown category {category:?}")))
}

/// Finite-difference check; returns `(target, max_rel, passed)` per target.
#[pyfunction]
#[pyo3(signature = (instances=50, seed=0))]
fn gradcheck(instances: usize, seed: u64) -> PyResult<Vec<(String, f64, bool)>> {
    let cfg = GradcheckConfig {
        instances,
        seed,
        ..GradcheckConfig::default()
    };
    let reports = mcseg_core::gradcheck::run(&cfg).map_err(err)?;
    Ok(reports
        .iter()
        .map(|r| (r.target.name().to_string(), r.max_rel, r.passed(cfg.tolerance)))
        .collect())
}

#[pymodule]
fn mcseg(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(loss_terms, m)?)?;
    m.add_function(wrap_pyfunction!(p_miou, m)?)?;
    m.add_function(wrap_pyfunction!(s_miou, m)?)?;
    m.add_function(wrap_pyfunction!(generate_shape, m)?)?;
    m.add_function(wrap_pyfunction!(category_schema, m)?)?;
    m.add_function(wrap_pyfunction!(gradcheck, m)?)?;
    Ok(())
}
