//! Semi-supervised training loop for [`ToyModel`].

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;

use crate::cloud::{HierLabels, LabeledCloud, PointCloud};
use crate::error::{Error, Result};
use crate::field::argmax_row;
use crate::losses::{total_loss_with, LossWeights, PointMetric};
use crate::metrics::{evaluate_levels, LevelMetrics};
use crate::model::{point_features, ToyModel};
use crate::partsub::{augment_pool, SubstitutionParams};
use crate::perturb::{make_pair, PerturbParams};
use crate::rng::Stream;
use crate::schema::LabelSchema;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_iters: usize,
    pub lr: f64,
    pub weights: LossWeights,
    pub point_metric: PointMetric,
    /// Number of part-substituted shapes generated from the labeled pool.
    pub augment_count: usize,
    /// Whether unlabeled training shapes enter the batches.
    pub use_unlabeled: bool,
    pub hidden: Vec<usize>,
    pub knn: usize,
    pub perturb: PerturbParams,
    pub substitution: SubstitutionParams,
    /// Evaluate on the test set every this many iterations; 0 evaluates only at the end.
    pub eval_every: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 16,
            max_iters: 80_000,
            lr: 0.1,
            weights: LossWeights::default(),
            point_metric: PointMetric::Kl,
            augment_count: 0,
            use_unlabeled: true,
            hidden: vec![64, 64],
            knn: 16,
            perturb: PerturbParams::default(),
            substitution: SubstitutionParams::default(),
            eval_every: 0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || !self.batch_size.is_multiple_of(2) {
            return Err(Error::InvalidParams(format!(
                "batch size must be even and positive, got {}",
                self.batch_size
            )));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidParams(format!("learning rate {}", self.lr)));
        }
        self.weights.validate()?;
        self.perturb.validate()?;
        self.substitution.validate()
    }

    /// Step size at `iter`: decays by 10 at half and at three quarters of the run.
    pub fn lr_at(&self, iter: usize) -> f64 {
        let mut lr = self.lr;
        if iter >= self.max_iters / 2 {
            lr *= 0.1;
        }
        if iter >= self.max_iters * 3 / 4 {
            lr *= 0.1;
        }
        lr
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pool {
    Labeled,
    Synthetic,
    Unlabeled,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BatchSlot {
    pub pool: Pool,
    pub index: usize,
}

impl BatchSlot {
    pub fn is_labeled(&self) -> bool {
        self.pool != Pool::Unlabeled
    }
}

fn draw<R: Rng>(pool: Pool, size: usize, count: usize, rng: &mut R, out: &mut Vec<BatchSlot>) {
    if count == 0 || size == 0 {
        return;
    }
    if size >= count {
        out.extend(
            sample(rng, size, count)
                .into_iter()
                .map(|index| BatchSlot { pool, index }),
        );
    } else {
        out.extend((0..count).map(|_| BatchSlot {
            pool,
            index: rng.random_range(0..size),
        }));
    }
}

/// Half labeled, half unlabeled; half of the labeled part is synthetic when
/// synthetic shapes exist. Without unlabeled shapes the whole batch is
/// labeled. Small pools are drawn with repetition.
pub fn build_batch<R: Rng>(
    n_labeled: usize,
    n_synthetic: usize,
    n_unlabeled: usize,
    batch_size: usize,
    rng: &mut R,
) -> Result<Vec<BatchSlot>> {
    if n_labeled == 0 {
        return Err(Error::EmptyLabeledPool);
    }
    let n_lab = if n_unlabeled == 0 { batch_size } else { batch_size / 2 };
    let n_syn = if n_synthetic == 0 { 0 } else { n_lab / 2 };
    let mut out = Vec::with_capacity(batch_size);
    draw(Pool::Labeled, n_labeled, n_lab - n_syn, rng, &mut out);
    draw(Pool::Synthetic, n_synthetic, n_syn, rng, &mut out);
    draw(Pool::Unlabeled, n_unlabeled, batch_size - n_lab, rng, &mut out);
    Ok(out)
}

/// Training pools. Labels of unlabeled shapes are never read.
#[derive(Clone, Debug)]
pub struct TrainData {
    pub schema: LabelSchema,
    pub labeled: Vec<LabeledCloud>,
    pub unlabeled: Vec<PointCloud>,
    pub test: Vec<LabeledCloud>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepLog {
    pub iter: usize,
    pub lr: f64,
    pub seg: f64,
    pub point: f64,
    pub part: f64,
    pub hier: f64,
    pub total: f64,
}

impl StepLog {
    pub fn line(&self) -> String {
        format!(
            "iter {} lr {:e} seg {:.6} point {:.6} part {:.6} hier {:.6} total {:.6}",
            self.iter, self.lr, self.seg, self.point, self.part, self.hier, self.total
        )
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: ToyModel,
    pub log: Vec<StepLog>,
    pub evals: Vec<(usize, Vec<LevelMetrics>)>,
    /// Samples dropped because no point survived in both copies.
    pub skipped: usize,
}

/// Per-level argmax predictions on the unperturbed cloud.
pub fn predict(model: &ToyModel, cloud: &PointCloud) -> Vec<Vec<usize>> {
    model
        .forward(cloud)
        .levels
        .iter()
        .map(|m| m.outer_iter().map(argmax_row).collect())
        .collect()
}

pub fn evaluate(model: &ToyModel, test: &[LabeledCloud], schema: &LabelSchema) -> Result<Vec<LevelMetrics>> {
    let preds: Vec<Vec<Vec<usize>>> = test.par_iter().map(|s| predict(model, &s.cloud)).collect();
    let gts: Vec<HierLabels> = test.iter().map(|s| s.labels.clone()).collect();
    evaluate_levels(&preds, &gts, schema)
}

struct SampleResult {
    grad: ToyModel,
    log: StepLog,
}

fn run_sample(
    model: &ToyModel,
    cloud: &PointCloud,
    labels: Option<&HierLabels>,
    schema: &LabelSchema,
    config: &TrainConfig,
    seg_scale: f64,
    stream: Stream,
) -> Result<Option<SampleResult>> {
    let params = PerturbParams {
        seed: stream.seed(),
        ..config.perturb.clone()
    };
    let pair = match make_pair(cloud, &params) {
        Ok(p) => p,
        Err(Error::EmptyCorrespondence) => return Ok(None),
        Err(e) => return Err(e),
    };
    let (la, act_a) = model.forward_features(&point_features(&pair.copy_a, model.knn));
    let (lb, act_b) = model.forward_features(&point_features(&pair.copy_b, model.knn));
    let w = if labels.is_some() {
        config.weights
    } else {
        config.weights.unlabeled()
    };
    let scaled = LossWeights {
        gamma: w.gamma * seg_scale,
        ..w
    };
    let r = total_loss_with(
        &la,
        &lb,
        labels,
        schema,
        &pair.correspondence,
        &scaled,
        config.point_metric,
    )?;
    let mut grad = model.backward(&act_a, &r.grad_a);
    grad.add_scaled(&model.backward(&act_b, &r.grad_b), 1.0);
    Ok(Some(SampleResult {
        grad,
        log: StepLog {
            seg: r.seg,
            point: r.point,
            part: r.part,
            hier: r.hier,
            ..Default::default()
        },
    }))
}

/// Train from scratch. Per-sample gradients are summed in batch order, so the
/// result does not depend on the number of threads.
pub fn train(config: &TrainConfig, data: &TrainData) -> Result<TrainOutcome> {
    train_with_log(config, data, |_| {})
}

pub fn train_with_log(
    config: &TrainConfig,
    data: &TrainData,
    mut on_step: impl FnMut(&StepLog),
) -> Result<TrainOutcome> {
    config.validate()?;
    let schema = &data.schema;
    if data.labeled.is_empty() {
        return Err(Error::EmptyLabeledPool);
    }
    let root = Stream::new(config.seed);
    let synthetic = if config.augment_count > 0 {
        let params = SubstitutionParams {
            seed: root.split("augment").seed(),
            ..config.substitution.clone()
        };
        augment_pool(&data.labeled, schema, config.augment_count, &params)?
    } else {
        Vec::new()
    };
    let n_unlabeled = if config.use_unlabeled { data.unlabeled.len() } else { 0 };
    let mut model = ToyModel::new(&config.hidden, schema, config.knn, root.split("init"));
    let mut log = Vec::with_capacity(config.max_iters);
    let mut evals = Vec::new();
    let mut skipped = 0;
    let batch_stream = root.split("batch");
    let sample_stream = root.split("sample");
    for iter in 0..config.max_iters {
        let mut rng = batch_stream.index(iter as u64).rng();
        let batch = build_batch(
            data.labeled.len(),
            synthetic.len(),
            n_unlabeled,
            config.batch_size,
            &mut rng,
        )?;
        let it_stream = sample_stream.index(iter as u64);
        // cross-entropy is averaged over labeled slots, consistency over all slots
        let n_labeled = batch.iter().filter(|s| s.is_labeled()).count();
        let seg_scale = batch.len() as f64 / n_labeled as f64;
        let results: Vec<Result<Option<SampleResult>>> = batch
            .par_iter()
            .enumerate()
            .map(|(slot, s)| {
                let (cloud, labels) = match s.pool {
                    Pool::Labeled => (&data.labeled[s.index].cloud, Some(&data.labeled[s.index].labels)),
                    Pool::Synthetic => (&synthetic[s.index].cloud, Some(&synthetic[s.index].labels)),
                    Pool::Unlabeled => (&data.unlabeled[s.index], None),
                };
                run_sample(
                    &model,
                    cloud,
                    labels,
                    schema,
                    config,
                    seg_scale,
                    it_stream.index(slot as u64),
                )
            })
            .collect();
        let mut grad = model.zeros_like();
        let lr = config.lr_at(iter);
        let mut step = StepLog {
            iter,
            lr,
            ..Default::default()
        };
        let scale = 1.0 / batch.len() as f64;
        for r in results {
            match r? {
                Some(s) => {
                    grad.add_scaled(&s.grad, 1.0);
                    step.seg += seg_scale * scale * s.log.seg;
                    step.point += scale * s.log.point;
                    step.part += scale * s.log.part;
                    step.hier += scale * s.log.hier;
                }
                None => skipped += 1,
            }
        }
        let w = &config.weights;
        step.total =
            w.gamma * step.seg + w.lambda_pts * step.point + w.lambda_part * step.part + w.lambda_h * step.hier;
        model.add_scaled(&grad, -lr * scale);
        if !model.is_finite() {
            return Err(Error::InvalidParams(format!("parameters diverged at iteration {iter}")));
        }
        on_step(&step);
        log.push(step);
        if config.eval_every > 0
            && (iter + 1) % config.eval_every == 0
            && iter + 1 < config.max_iters
            && !data.test.is_empty()
        {
            evals.push((iter + 1, evaluate(&model, &data.test, schema)?));
        }
    }
    if !data.test.is_empty() {
        evals.push((config.max_iters, evaluate(&model, &data.test, schema)?));
    }
    Ok(TrainOutcome {
        model,
        log,
        evals,
        skipped,
    })
}
