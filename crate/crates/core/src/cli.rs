//! The `mcseg` command line.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::cloud::{HierLabels, Label, LabeledCloud};
use crate::error::{Error, Result};
use crate::geom::Aabb;
use crate::gradcheck::{self, GradcheckConfig};
use crate::io::{self, Config, ManifestEntry, Split};
use crate::losses::{total_loss_with, LossWeights, PointMetric};
use crate::metrics::{evaluate_levels, flat_mious, format_flat_report, format_report};
use crate::model::ToyModel;
use crate::partsub::{augment_pool, SubstitutionParams};
use crate::perturb::{make_pair, PerturbParams};
use crate::rng::Stream;
use crate::schema::LabelSchema;
use crate::synth::{builtin, generate_dataset, CategorySpec};
use crate::trainer::{predict, train_with_log, TrainConfig, TrainData};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "mcseg",
    version,
    about = "Multilevel-consistency semi-supervised part segmentation"
)]
pub struct Cli {
    /// Master seed.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; 1 gives the strict single-threaded mode, 0 uses all cores.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// Flat `key = value` settings file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic dataset with a manifest.
    GenData(GenDataArgs),
    /// Write part-substituted shapes built from the labeled training shapes.
    Augment(AugmentArgs),
    /// Dump one perturbation pair of a cloud.
    Perturb(PerturbArgs),
    /// Evaluate the loss terms on two logit files.
    Loss(LossArgs),
    /// Run the finite-difference gradient suite.
    Gradcheck(GradcheckArgs),
    /// Train the toy model on a manifest.
    Train(TrainArgs),
    /// Score prediction files against ground truth.
    Eval(EvalArgs),
    /// Print the version.
    Version,
}

#[derive(Args, Debug)]
pub struct GenDataArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Built-in category (chair, table, lamp).
    #[arg(long)]
    pub category: Option<String>,
    /// Category spec file, instead of a built-in.
    #[arg(long, conflicts_with = "category")]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub train: Option<usize>,
    #[arg(long)]
    pub test: Option<usize>,
    #[arg(long)]
    pub fraction: Option<f64>,
    #[arg(long)]
    pub points: Option<usize>,
}

#[derive(Args, Debug)]
pub struct AugmentArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Defaults to `schema.txt` next to the manifest.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long)]
    pub count: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct PerturbArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub schema: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct LossArgs {
    #[arg(long)]
    pub schema: PathBuf,
    #[arg(long)]
    pub logits_a: PathBuf,
    #[arg(long)]
    pub logits_b: PathBuf,
    /// `source a b` lines.
    #[arg(long)]
    pub corr: PathBuf,
    /// Labeled cloud indexed by source point; without it the cross-entropy is off.
    #[arg(long)]
    pub labels: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 50)]
    pub instances: usize,
    #[arg(long, default_value_t = 1e-5)]
    pub step: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Defaults to `schema.txt` next to the manifest.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub iters: Option<usize>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub schema: PathBuf,
    /// Lines `ground_truth prediction [category]`, paths relative to this file.
    #[arg(long)]
    pub pairs: PathBuf,
    /// Flat mode: lines `category label...` listing the finest-level parts of
    /// each category.
    #[arg(long)]
    pub flat: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Every key accepted in a config file.
pub const CONFIG_KEYS: &[&str] = &[
    "perturb.scale_min",
    "perturb.scale_max",
    "perturb.max_rotation_deg",
    "perturb.translation_min",
    "perturb.translation_max",
    "perturb.clip_min",
    "perturb.clip_max",
    "subst.theta",
    "subst.overlap_epsilon",
    "loss.gamma",
    "loss.lambda_pts",
    "loss.lambda_part",
    "loss.lambda_h",
    "loss.point_metric",
    "train.batch_size",
    "train.max_iters",
    "train.lr",
    "train.augment_count",
    "train.use_unlabeled",
    "train.hidden",
    "train.knn",
    "train.eval_every",
    "data.category",
    "data.train",
    "data.test",
    "data.fraction",
    "data.points",
];

#[derive(Clone, Debug, PartialEq)]
pub struct DataSettings {
    pub category: String,
    pub train: usize,
    pub test: usize,
    pub fraction: f64,
    pub points: Option<usize>,
}

impl Default for DataSettings {
    fn default() -> Self {
        DataSettings {
            category: "chair".into(),
            train: 200,
            test: 50,
            fraction: 0.02,
            points: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Settings {
    pub train: TrainConfig,
    pub data: DataSettings,
}

/// A scalar broadcast to three axes, or three values.
fn three(config: &Config, key: &str) -> Result<Option<[f64; 3]>> {
    match config.get_list::<f64>(key)? {
        None => Ok(None),
        Some(v) if v.len() == 1 => Ok(Some([v[0]; 3])),
        Some(v) if v.len() == 3 => Ok(Some([v[0], v[1], v[2]])),
        Some(_) => Err(Error::InvalidParams(format!("`{key}` takes one or three values"))),
    }
}

impl Settings {
    pub fn from_config(config: &Config, seed: u64) -> Result<Settings> {
        config.check_known(CONFIG_KEYS)?;
        let mut s = Settings::default();
        let t = &mut s.train;
        t.seed = seed;
        let p = &mut t.perturb;
        if let Some(v) = config.get("perturb.scale_min")? {
            p.scale_range.0 = v;
        }
        if let Some(v) = config.get("perturb.scale_max")? {
            p.scale_range.1 = v;
        }
        if let Some(v) = three(config, "perturb.max_rotation_deg")? {
            p.max_rotation_deg = v;
        }
        if let Some(v) = three(config, "perturb.translation_min")? {
            for a in 0..3 {
                p.translation_range[a].0 = v[a];
            }
        }
        if let Some(v) = three(config, "perturb.translation_max")? {
            for a in 0..3 {
                p.translation_range[a].1 = v[a];
            }
        }
        let clip_min = three(config, "perturb.clip_min")?.unwrap_or(p.clip_region.min);
        let clip_max = three(config, "perturb.clip_max")?.unwrap_or(p.clip_region.max);
        if (0..3).any(|a| clip_min[a] > clip_max[a]) {
            return Err(Error::InvalidParams("perturb.clip_min exceeds perturb.clip_max".into()));
        }
        p.clip_region = Aabb::new(clip_min, clip_max);
        if let Some(v) = config.get_list("subst.theta")? {
            t.substitution.theta = v;
        }
        if let Some(v) = config.get("subst.overlap_epsilon")? {
            t.substitution.overlap_epsilon = v;
        }
        let w = &mut t.weights;
        if let Some(v) = config.get("loss.gamma")? {
            w.gamma = v;
        }
        if let Some(v) = config.get("loss.lambda_pts")? {
            w.lambda_pts = v;
        }
        if let Some(v) = config.get("loss.lambda_part")? {
            w.lambda_part = v;
        }
        if let Some(v) = config.get("loss.lambda_h")? {
            w.lambda_h = v;
        }
        if let Some(v) = config.get::<String>("loss.point_metric")? {
            t.point_metric = match v.as_str() {
                "kl" => PointMetric::Kl,
                "mse" => PointMetric::Mse,
                _ => {
                    return Err(Error::InvalidParams(format!(
                        "loss.point_metric must be kl or mse, got {v}"
                    )))
                }
            };
        }
        if let Some(v) = config.get("train.batch_size")? {
            t.batch_size = v;
        }
        if let Some(v) = config.get("train.max_iters")? {
            t.max_iters = v;
        }
        if let Some(v) = config.get("train.lr")? {
            t.lr = v;
        }
        if let Some(v) = config.get("train.augment_count")? {
            t.augment_count = v;
        }
        if let Some(v) = config.get("train.use_unlabeled")? {
            t.use_unlabeled = v;
        }
        if let Some(v) = config.get_list("train.hidden")? {
            t.hidden = v;
        }
        if let Some(v) = config.get("train.knn")? {
            t.knn = v;
        }
        if let Some(v) = config.get("train.eval_every")? {
            t.eval_every = v;
        }
        let d = &mut s.data;
        if let Some(v) = config.get("data.category")? {
            d.category = v;
        }
        if let Some(v) = config.get("data.train")? {
            d.train = v;
        }
        if let Some(v) = config.get("data.test")? {
            d.test = v;
        }
        if let Some(v) = config.get("data.fraction")? {
            d.fraction = v;
        }
        d.points = config.get("data.points")?;
        s.train.validate()?;
        Ok(s)
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidParams(_) | Error::InvalidFraction(_) => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

/// Parse `args` (program name first), run, and return the exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    match pool.install(|| run(&cli)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn run(cli: &Cli) -> Result<i32> {
    let config = match &cli.config {
        Some(p) => Config::read(p)?,
        None => Config::default(),
    };
    let settings = Settings::from_config(&config, cli.seed)?;
    match &cli.command {
        Command::GenData(a) => gen_data(a, &settings, cli.seed),
        Command::Augment(a) => augment(a, &settings, cli.seed),
        Command::Perturb(a) => perturb(a, &settings, cli.seed),
        Command::Loss(a) => loss(a, &settings),
        Command::Gradcheck(a) => run_gradcheck(a, cli.seed),
        Command::Train(a) => train_cmd(a, &settings),
        Command::Eval(a) => eval(a),
        Command::Version => {
            println!("mcseg {}", env!("CARGO_PKG_VERSION"));
            Ok(EXIT_OK)
        }
    }
}

fn shape_name(i: usize) -> String {
    format!("{i:04}.txt")
}

fn gen_data(a: &GenDataArgs, s: &Settings, seed: u64) -> Result<i32> {
    let mut spec: CategorySpec = match (&a.spec, &a.category) {
        (Some(p), _) => CategorySpec::parse(&io::read_text(p)?)?,
        (None, name) => {
            let name = name.as_deref().unwrap_or(&s.data.category);
            builtin(name).ok_or_else(|| Error::InvalidParams(format!("unknown category `{name}`")))?
        }
    };
    if let Some(n) = a.points.or(s.data.points) {
        spec.points = n;
    }
    let n_train = a.train.unwrap_or(s.data.train);
    let n_test = a.test.unwrap_or(s.data.test);
    let fraction = a.fraction.unwrap_or(s.data.fraction);
    let ds = generate_dataset(&spec, n_train, n_test, fraction, Stream::new(seed).split("data"))?;
    io::write_text(&a.out.join("schema.txt"), &io::format_schema(&spec.schema))?;
    let mut manifest = Vec::new();
    for (split, dir, shapes) in [(Split::Train, "train", &ds.train), (Split::Test, "test", &ds.test)] {
        for (i, shape) in shapes.iter().enumerate() {
            let rel = PathBuf::from(dir).join(shape_name(i));
            io::write_labeled_cloud(&a.out.join(&rel), shape, Some("../schema.txt"))?;
            manifest.push(ManifestEntry {
                path: rel,
                split,
                labeled: split == Split::Test || ds.labeled[i],
            });
        }
    }
    io::write_text(&a.out.join("manifest.txt"), &io::format_manifest(&manifest))?;
    println!(
        "wrote {} train ({} labeled) and {} test shapes to {}",
        ds.train.len(),
        ds.labeled.iter().filter(|&&l| l).count(),
        ds.test.len(),
        a.out.display()
    );
    Ok(EXIT_OK)
}

fn default_schema(manifest: &Path, schema: &Option<PathBuf>) -> PathBuf {
    schema
        .clone()
        .unwrap_or_else(|| manifest.parent().unwrap_or(Path::new("")).join("schema.txt"))
}

struct Loaded {
    schema: LabelSchema,
    entries: Vec<(ManifestEntry, LabeledCloud)>,
}

fn load_manifest(manifest: &Path, schema: &Option<PathBuf>) -> Result<Loaded> {
    use rayon::prelude::*;
    let schema = io::read_schema(&default_schema(manifest, schema))?;
    let entries = io::read_manifest(manifest)?;
    let shapes = entries
        .par_iter()
        .map(|e| io::read_labeled_cloud(&e.path, &schema))
        .collect::<Result<Vec<_>>>()?;
    Ok(Loaded {
        schema,
        entries: entries.into_iter().zip(shapes).collect(),
    })
}

fn augment(a: &AugmentArgs, s: &Settings, seed: u64) -> Result<i32> {
    let loaded = load_manifest(&a.manifest, &a.schema)?;
    let pool: Vec<LabeledCloud> = loaded
        .entries
        .iter()
        .filter(|(e, _)| e.split == Split::Train && e.labeled)
        .map(|(_, c)| c.clone())
        .collect();
    let params = SubstitutionParams {
        seed: Stream::new(seed).split("augment").seed(),
        ..s.train.substitution.clone()
    };
    let shapes = augment_pool(&pool, &loaded.schema, a.count, &params)?;
    io::write_text(&a.out.join("schema.txt"), &io::format_schema(&loaded.schema))?;
    let mut manifest = Vec::new();
    for (i, shape) in shapes.iter().enumerate() {
        let rel = PathBuf::from("synthetic").join(shape_name(i));
        io::write_labeled_cloud(&a.out.join(&rel), shape, Some("../schema.txt"))?;
        manifest.push(ManifestEntry {
            path: rel,
            split: Split::Train,
            labeled: true,
        });
    }
    io::write_text(&a.out.join("manifest.txt"), &io::format_manifest(&manifest))?;
    println!(
        "wrote {} shapes from a pool of {} to {}",
        shapes.len(),
        pool.len(),
        a.out.display()
    );
    Ok(EXIT_OK)
}

fn perturb(a: &PerturbArgs, s: &Settings, seed: u64) -> Result<i32> {
    let schema = io::read_schema(&a.schema)?;
    let shape = io::read_labeled_cloud(&a.input, &schema)?;
    let params = PerturbParams {
        seed,
        ..s.train.perturb.clone()
    };
    let pair = make_pair(&shape.cloud, &params)?;
    let la = shape.labels.select(&pair.source_indices_a());
    let lb = shape.labels.select(&pair.source_indices_b());
    let copy_a = LabeledCloud::new(pair.copy_a.clone(), la, &schema)?;
    let copy_b = LabeledCloud::new(pair.copy_b.clone(), lb, &schema)?;
    io::write_labeled_cloud(&a.out.join("copy_a.txt"), &copy_a, None)?;
    io::write_labeled_cloud(&a.out.join("copy_b.txt"), &copy_b, None)?;
    io::write_text(
        &a.out.join("corr.txt"),
        &io::format_correspondence(&pair.correspondence),
    )?;
    let mut t = String::new();
    for (name, tr) in [("a", &pair.transform_a), ("b", &pair.transform_b)] {
        let deg = tr.angles.map(f64::to_degrees);
        let _ = writeln!(
            t,
            "{name} scale {} angles_deg {} {} {} translation {} {} {}",
            io::fmt_f64(tr.scale),
            io::fmt_f64(deg[0]),
            io::fmt_f64(deg[1]),
            io::fmt_f64(deg[2]),
            io::fmt_f64(tr.translation[0]),
            io::fmt_f64(tr.translation[1]),
            io::fmt_f64(tr.translation[2]),
        );
    }
    io::write_text(&a.out.join("transforms.txt"), &t)?;
    println!(
        "copy a {} points, copy b {} points, {} correspondences",
        copy_a.len(),
        copy_b.len(),
        pair.correspondence.len()
    );
    Ok(EXIT_OK)
}

fn loss(a: &LossArgs, s: &Settings) -> Result<i32> {
    let schema = io::read_schema(&a.schema)?;
    let la = io::parse_logits(&io::read_text(&a.logits_a)?, &a.logits_a.display().to_string())?;
    let lb = io::parse_logits(&io::read_text(&a.logits_b)?, &a.logits_b.display().to_string())?;
    let corr = io::parse_correspondence(&io::read_text(&a.corr)?, &a.corr.display().to_string())?;
    let labels: Option<HierLabels> = match &a.labels {
        Some(p) => Some(io::read_labeled_cloud(p, &schema)?.labels),
        None => None,
    };
    let w: LossWeights = if labels.is_some() {
        s.train.weights
    } else {
        s.train.weights.unlabeled()
    };
    let r = total_loss_with(&la, &lb, labels.as_ref(), &schema, &corr, &w, s.train.point_metric)?;
    println!("L_seg {:?}", r.seg);
    println!("L_point {:?}", r.point);
    println!("L_part {:?}", r.part);
    println!("L_h {:?}", r.hier);
    println!("L_tc {:?}", r.total);
    Ok(EXIT_OK)
}

fn run_gradcheck(a: &GradcheckArgs, seed: u64) -> Result<i32> {
    let cfg = GradcheckConfig {
        instances: a.instances,
        step: a.step,
        tolerance: a.tolerance,
        seed,
        ..GradcheckConfig::default()
    };
    let mut ok = true;
    for r in gradcheck::run(&cfg)? {
        let pass = r.passed(cfg.tolerance);
        ok &= pass;
        println!("{} {r}", if pass { "PASS" } else { "FAIL" });
    }
    Ok(if ok { EXIT_OK } else { EXIT_NUMERIC })
}

/// One line per point with that point's label at every level.
pub fn format_predictions(pred: &[Vec<usize>]) -> String {
    let n = pred.first().map_or(0, Vec::len);
    let mut out = String::new();
    for i in 0..n {
        let row: Vec<String> = pred.iter().map(|level| level[i].to_string()).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
    out
}

/// Inverse of [`format_predictions`]; labels are checked against `schema`.
pub fn parse_predictions(text: &str, path: &str, schema: &LabelSchema) -> Result<Vec<Vec<usize>>> {
    let k = schema.level_count();
    let mut out = vec![Vec::new(); k];
    for (ln, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| Error::Format {
            path: path.to_string(),
            line: ln + 1,
            msg,
        };
        let v: Vec<usize> = line
            .split_whitespace()
            .map(|t| t.parse().ok())
            .collect::<Option<_>>()
            .ok_or_else(|| err("expected non-negative labels".into()))?;
        if v.len() != k {
            return Err(err(format!("expected {k} labels, found {}", v.len())));
        }
        for (level, &l) in v.iter().enumerate() {
            if l >= schema.labels(level) {
                return Err(Error::SchemaMismatch {
                    path: path.to_string(),
                    line: ln + 1,
                    msg: format!(
                        "label {l} at level {} is outside 0..{}",
                        level + 1,
                        schema.labels(level)
                    ),
                });
            }
            out[level].push(l);
        }
    }
    Ok(out)
}

fn train_cmd(a: &TrainArgs, s: &Settings) -> Result<i32> {
    let loaded = load_manifest(&a.manifest, &a.schema)?;
    let mut config = s.train.clone();
    if let Some(n) = a.iters {
        config.max_iters = n;
    }
    let mut data = TrainData {
        schema: loaded.schema.clone(),
        labeled: Vec::new(),
        unlabeled: Vec::new(),
        test: Vec::new(),
    };
    for (e, shape) in loaded.entries {
        match (e.split, e.labeled) {
            (Split::Test, _) => data.test.push(shape),
            (Split::Train, true) => data.labeled.push(shape),
            (Split::Train, false) => data.unlabeled.push(shape.cloud),
        }
    }
    let mut log = String::new();
    let outcome = train_with_log(&config, &data, |step| {
        log.push_str(&step.line());
        log.push('\n');
    })?;
    io::write_text(&a.out.join("model.txt"), &outcome.model.to_text())?;
    io::write_text(&a.out.join("train.log"), &log)?;
    let mut evals = String::new();
    for (iter, m) in &outcome.evals {
        let _ = writeln!(evals, "# iter {iter}");
        evals.push_str(&format_report(m));
    }
    io::write_text(&a.out.join("metrics.txt"), &evals)?;
    write_test_predictions(&outcome.model, &data.test, &a.out)?;
    if let Some((_, m)) = outcome.evals.last() {
        print!("{}", format_report(m));
    }
    if outcome.skipped > 0 {
        eprintln!("note: {} samples had an empty correspondence", outcome.skipped);
    }
    Ok(EXIT_OK)
}

/// Writes `predictions/NNNN.txt`, `predictions/gt/NNNN.txt` and a pairs file
/// that `eval` reads directly.
fn write_test_predictions(model: &ToyModel, test: &[LabeledCloud], out: &Path) -> Result<()> {
    let dir = out.join("predictions");
    let mut pairs = String::new();
    for (i, shape) in test.iter().enumerate() {
        let name = shape_name(i);
        io::write_text(&dir.join(&name), &format_predictions(&predict(model, &shape.cloud)))?;
        io::write_labeled_cloud(&dir.join("gt").join(&name), shape, None)?;
        let _ = writeln!(pairs, "gt/{name} {name}");
    }
    io::write_text(&dir.join("pairs.txt"), &pairs)
}

fn eval(a: &EvalArgs) -> Result<i32> {
    let schema = io::read_schema(&a.schema)?;
    let pairs_path = a.pairs.display().to_string();
    let base = a.pairs.parent().unwrap_or(Path::new(""));
    let mut gts = Vec::new();
    let mut preds = Vec::new();
    let mut cats = Vec::new();
    for (ln, line) in io::read_text(&a.pairs)?.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        let bad = |msg: &str| Error::Format {
            path: pairs_path.clone(),
            line: ln + 1,
            msg: msg.to_string(),
        };
        if !(2..=3).contains(&toks.len()) {
            return Err(bad("expected `ground_truth prediction [category]`"));
        }
        let gt_path = base.join(toks[0]);
        let pred_path = base.join(toks[1]);
        let gt = io::read_labeled_cloud(&gt_path, &schema)?;
        let pred = parse_predictions(&io::read_text(&pred_path)?, &pred_path.display().to_string(), &schema)?;
        if pred[0].len() != gt.len() {
            return Err(Error::ShapeCountMismatch(format!(
                "{}: {} predictions for {} points",
                pred_path.display(),
                pred[0].len(),
                gt.len()
            )));
        }
        match toks.get(2) {
            Some(c) => cats.push(c.parse::<usize>().map_err(|_| bad("bad category id"))?),
            None if a.flat.is_some() => return Err(bad("flat mode needs a category per line")),
            None => {}
        }
        gts.push(gt.labels);
        preds.push(pred);
    }
    let report = match &a.flat {
        None => format_report(&evaluate_levels(&preds, &gts, &schema)?),
        Some(p) => {
            let parts = parse_category_parts(&io::read_text(p)?, &p.display().to_string())?;
            let fine = schema.finest();
            let pf: Vec<Vec<usize>> = preds.iter().map(|s| s[fine].clone()).collect();
            let gf: Vec<Vec<Label>> = gts.iter().map(|s| s.finest().to_vec()).collect();
            let (c, i) = flat_mious(&pf, &gf, &cats, &parts)?;
            format_flat_report(c, i)
        }
    };
    if let Some(out) = &a.out {
        io::write_text(out, &report)?;
    }
    print!("{report}");
    let _ = std::io::stdout().flush();
    Ok(EXIT_OK)
}

/// Lines `category label...`; categories must be listed as 0, 1, 2, ...
pub fn parse_category_parts(text: &str, path: &str) -> Result<Vec<Vec<usize>>> {
    let mut out: Vec<Vec<usize>> = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let v: Vec<usize> = line
            .split_whitespace()
            .map(|t| t.parse().ok())
            .collect::<Option<_>>()
            .filter(|v: &Vec<usize>| v.len() >= 2 && v[0] == out.len())
            .ok_or_else(|| Error::Format {
                path: path.to_string(),
                line: ln + 1,
                msg: format!("expected `{} label...`", out.len()),
            })?;
        out.push(v[1..].to_vec());
    }
    Ok(out)
}
