//! Finite-difference checks of every analytic gradient.
//!
//! Each instance draws a random schema (`K <= 3`, `L <= 8`), two logit
//! tables of at most 20 rows, a random correspondence and random labels, then
//! compares analytic gradients to central differences entry by entry. The
//! relative error is `|a - n| / max(|a|, |n|, floor)`; the floor keeps entries
//! whose true gradient is zero from dividing rounding noise by zero.

use std::fmt;

use ndarray::Array2;
use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::cloud::{coarsen_labels, HierLabels, Label, PointCloud};
use crate::error::Result;
use crate::field::{argmax_row, softmax_field, LogitsField};
use crate::losses::{
    hierarchical_consistency, part_consistency, point_consistency, seg_loss, total_loss, LossWeights, TermValue,
};
use crate::model::ToyModel;
use crate::perturb::{CorrPair, Correspondence};
use crate::rng::Stream;
use crate::schema::LabelSchema;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Target {
    Seg,
    Point,
    Part,
    Hier,
    Total,
    Model,
}

impl Target {
    pub const ALL: [Target; 6] = [
        Target::Seg,
        Target::Point,
        Target::Part,
        Target::Hier,
        Target::Total,
        Target::Model,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Target::Seg => "L_seg",
            Target::Point => "L_point",
            Target::Part => "L_part",
            Target::Hier => "L_h",
            Target::Total => "L_tc",
            Target::Model => "model",
        }
    }

    /// Terms that contain the part loss are only checked where the argmax
    /// partition survives the step.
    fn needs_stable_argmax(self) -> bool {
        matches!(self, Target::Part | Target::Total)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradcheckConfig {
    pub instances: usize,
    pub step: f64,
    pub tolerance: f64,
    pub floor: f64,
    pub seed: u64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        GradcheckConfig {
            instances: 50,
            step: 1e-5,
            tolerance: 1e-4,
            floor: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TargetReport {
    pub target: Target,
    pub instances: usize,
    pub checked: usize,
    pub skipped: usize,
    pub max_rel: f64,
}

impl TargetReport {
    pub fn passed(&self, tolerance: f64) -> bool {
        self.checked > 0 && self.max_rel <= tolerance
    }
}

impl fmt::Display for TargetReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<8} instances {} entries {} skipped {} max rel {:.3e}",
            self.target.name(),
            self.instances,
            self.checked,
            self.skipped,
            self.max_rel
        )
    }
}

pub fn rel_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// A random loss instance.
#[derive(Clone, Debug)]
pub struct Instance {
    pub schema: LabelSchema,
    pub logits_a: LogitsField,
    pub logits_b: LogitsField,
    pub labels: HierLabels,
    pub corr: Correspondence,
}

pub fn random_schema(rng: &mut ChaCha8Rng, max_levels: usize, max_labels: usize) -> LabelSchema {
    let k = rng.random_range(1..=max_levels);
    let mut counts = vec![rng.random_range(1..=max_labels)];
    let mut maps = Vec::new();
    for level in 1..k {
        let l = rng.random_range(1..=max_labels);
        let up = counts[level - 1];
        maps.push((0..l).map(|_| rng.random_range(0..up)).collect());
        counts.push(l);
    }
    LabelSchema::from_parents(counts, maps).expect("random schema is valid")
}

pub fn random_logits(rng: &mut ChaCha8Rng, rows: usize, schema: &LabelSchema, scale: f64) -> LogitsField {
    let levels = schema
        .labels_per_level()
        .iter()
        .map(|&l| Array2::from_shape_fn((rows, l), |_| scale * (2.0 * rng.random::<f64>() - 1.0)))
        .collect();
    LogitsField::new(levels).expect("finite logits")
}

impl Instance {
    pub fn random(stream: Stream) -> Instance {
        let mut rng = stream.rng();
        let schema = random_schema(&mut rng, 3, 8);
        let n_src = rng.random_range(2..=20);
        let n_a = rng.random_range(1..=n_src);
        let n_b = rng.random_range(1..=n_src);
        let m = rng.random_range(1..=n_a.min(n_b));
        let mut src = sample(&mut rng, n_src, m).into_vec();
        let mut a = sample(&mut rng, n_a, m).into_vec();
        let b = sample(&mut rng, n_b, m).into_vec();
        src.sort_unstable();
        a.sort_unstable();
        let pairs = (0..m)
            .map(|i| CorrPair {
                source: src[i],
                a: a[i],
                b: b[i],
            })
            .collect();
        let mut fine: Vec<Label> = (0..n_src)
            .map(|_| {
                if rng.random::<f64>() < 0.2 {
                    Label::Unlabeled
                } else {
                    Label::part(rng.random_range(0..schema.labels(schema.finest())))
                }
            })
            .collect();
        // at least one labeled correspondence keeps the cross-entropy defined
        fine[src[0]] = Label::part(rng.random_range(0..schema.labels(schema.finest())));
        let labels = coarsen_labels(&fine, &schema).expect("labels follow the schema");
        let logits_a = random_logits(&mut rng, n_a, &schema, 3.0);
        let logits_b = random_logits(&mut rng, n_b, &schema, 3.0);
        Instance {
            schema,
            logits_a,
            logits_b,
            labels,
            corr: Correspondence { pairs },
        }
    }

    /// Value and logit gradients of one loss term.
    pub fn evaluate(&self, target: Target, la: &LogitsField, lb: &LogitsField) -> Result<TermValue> {
        let (pa, pb) = (softmax_field(la), softmax_field(lb));
        match target {
            Target::Seg => seg_loss(&self.labels, &pa, &pb, &self.corr),
            Target::Point => point_consistency(&pa, &pb, &self.corr),
            Target::Part => part_consistency(&pa, &pb, &self.corr),
            Target::Hier => hierarchical_consistency(&pa, &pb, &self.schema, &self.corr),
            Target::Total | Target::Model => {
                let w = LossWeights {
                    gamma: 1.0,
                    lambda_pts: 0.3,
                    lambda_part: 0.5,
                    lambda_h: 0.7,
                };
                let r = total_loss(la, lb, Some(&self.labels), &self.schema, &self.corr, &w)?;
                Ok(TermValue {
                    value: r.total,
                    grad_a: r.grad_a,
                    grad_b: r.grad_b,
                })
            }
        }
    }
}

#[derive(Default)]
struct Tally {
    checked: usize,
    skipped: usize,
    max_rel: f64,
}

impl Tally {
    fn record(&mut self, rel: f64) {
        self.checked += 1;
        if rel > self.max_rel || rel.is_nan() {
            self.max_rel = if rel.is_nan() { f64::INFINITY } else { rel };
        }
    }
}

fn check_loss(inst: &Instance, target: Target, cfg: &GradcheckConfig, tally: &mut Tally) -> Result<()> {
    let base = inst.evaluate(target, &inst.logits_a, &inst.logits_b)?;
    let h = cfg.step;
    for side in 0..2 {
        let (logits, grad) = if side == 0 {
            (&inst.logits_a, &base.grad_a)
        } else {
            (&inst.logits_b, &base.grad_b)
        };
        for k in 0..logits.level_count() {
            let (rows, cols) = logits.levels[k].dim();
            for i in 0..rows {
                let before = argmax_row(logits.levels[k].row(i));
                for j in 0..cols {
                    let mut plus = logits.clone();
                    let mut minus = logits.clone();
                    plus.levels[k][[i, j]] += h;
                    minus.levels[k][[i, j]] -= h;
                    if target.needs_stable_argmax()
                        && (argmax_row(plus.levels[k].row(i)) != before || argmax_row(minus.levels[k].row(i)) != before)
                    {
                        tally.skipped += 1;
                        continue;
                    }
                    let (fp, fm) = if side == 0 {
                        (
                            inst.evaluate(target, &plus, &inst.logits_b)?.value,
                            inst.evaluate(target, &minus, &inst.logits_b)?.value,
                        )
                    } else {
                        (
                            inst.evaluate(target, &inst.logits_a, &plus)?.value,
                            inst.evaluate(target, &inst.logits_a, &minus)?.value,
                        )
                    };
                    let numeric = (fp - fm) / (2.0 * h);
                    tally.record(rel_error(grad.levels[k][[i, j]], numeric, cfg.floor));
                }
            }
        }
    }
    Ok(())
}

/// Checks the backward pass on `L = sum(G * logits(theta))` for a random `G`.
fn check_model(stream: Stream, cfg: &GradcheckConfig, tally: &mut Tally) -> Result<()> {
    let mut rng = stream.rng();
    let schema = random_schema(&mut rng, 3, 8);
    let n = rng.random_range(2..=20);
    let points = (0..n)
        .map(|_| [0; 3].map(|_: i32| 2.0 * rng.random::<f64>() - 1.0))
        .collect();
    let normals = (0..n)
        .map(|_| {
            let v = [0; 3].map(|_: i32| 2.0 * rng.random::<f64>() - 1.0 + 1e-3);
            let len = crate::geom::norm(v);
            v.map(|x| x / len)
        })
        .collect();
    let cloud = PointCloud::new(points, Some(normals))?;
    let depth = rng.random_range(0..=2);
    let widths: Vec<usize> = (0..depth).map(|_| rng.random_range(2..=6)).collect();
    let knn = rng.random_range(1..=4).min(n - 1);
    let mut model = ToyModel::new(&widths, &schema, knn, stream.split("init"));
    let features = crate::model::point_features(&cloud, knn);
    let g = random_logits(&mut rng, n, &schema, 1.0);
    let objective = |m: &ToyModel| -> f64 {
        let (z, _) = m.forward_features(&features);
        z.levels.iter().zip(&g.levels).map(|(z, g)| (z * g).sum()).sum()
    };
    let (_, act) = model.forward_features(&features);
    let analytic = model.backward(&act, &g).to_flat();
    let theta = model.to_flat();
    for (p, &a) in analytic.iter().enumerate() {
        let mut t = theta.clone();
        t[p] = theta[p] + cfg.step;
        model.set_flat(&t);
        let fp = objective(&model);
        t[p] = theta[p] - cfg.step;
        model.set_flat(&t);
        let fm = objective(&model);
        tally.record(rel_error(a, (fp - fm) / (2.0 * cfg.step), cfg.floor));
    }
    Ok(())
}

pub fn run_target(target: Target, cfg: &GradcheckConfig) -> Result<TargetReport> {
    let root = Stream::new(cfg.seed).split("gradcheck").split(target.name());
    let mut tally = Tally::default();
    for i in 0..cfg.instances {
        let s = root.index(i as u64);
        match target {
            Target::Model => check_model(s, cfg, &mut tally)?,
            _ => check_loss(&Instance::random(s), target, cfg, &mut tally)?,
        }
    }
    Ok(TargetReport {
        target,
        instances: cfg.instances,
        checked: tally.checked,
        skipped: tally.skipped,
        max_rel: tally.max_rel,
    })
}

pub fn run(cfg: &GradcheckConfig) -> Result<Vec<TargetReport>> {
    Target::ALL.iter().map(|&t| run_target(t, cfg)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_floor() {
        assert_eq!(rel_error(0.0, 0.0, 1e-6), 0.0);
        assert!((rel_error(1e-12, 0.0, 1e-6) - 1e-6).abs() < 1e-18);
        assert!((rel_error(2.0, 1.0, 1e-6) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn small_suite_passes() {
        let cfg = GradcheckConfig {
            instances: 5,
            ..GradcheckConfig::default()
        };
        for r in run(&cfg).unwrap() {
            assert!(r.passed(cfg.tolerance), "{r}");
        }
    }

    #[test]
    fn a_wrong_gradient_is_caught() {
        let inst = Instance::random(Stream::new(3));
        let base = inst.evaluate(Target::Point, &inst.logits_a, &inst.logits_b).unwrap();
        let h = 1e-5;
        let c = inst.corr.pairs[0].a;
        let mut plus = inst.logits_a.clone();
        let mut minus = inst.logits_a.clone();
        plus.levels[0][[c, 0]] += h;
        minus.levels[0][[c, 0]] -= h;
        let num = (inst.evaluate(Target::Point, &plus, &inst.logits_b).unwrap().value
            - inst.evaluate(Target::Point, &minus, &inst.logits_b).unwrap().value)
            / (2.0 * h);
        let a = base.grad_a.levels[0][[c, 0]];
        assert!(rel_error(a, num, 1e-6) < 1e-4);
        assert!(rel_error(a * 1.01 + 1e-3, num, 1e-6) > 1e-4);
    }
}
