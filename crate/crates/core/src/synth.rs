//! Procedural labeled shapes built from boxes and cylinders.
//!
//! A category spec is plain text:
//!
//! ```text
//! category stool
//! points 512
//! scale 0.9:1.1 1 1
//! level top support
//! level top:top leg:support
//! component top
//! option 1
//! box top 0 0 0 1 0.1 1
//! component legs
//! option 0.7
//! cylinder leg 0 -0.5 0 0.1 1
//! option 0.3
//! ```
//!
//! `level` lines go coarsest first; below the first level every name is
//! written `name:parent`. A component picks one of its options with
//! probability proportional to the weight, and an option without parts
//! means the component is absent. Box parts take center and size per axis,
//! cylinders (vertical axis) take center, diameter and height. Every number
//! of a part may be a range `lo:hi`, drawn uniformly per shape. `scale`
//! gives per-axis ranges applied to the whole shape.

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;

use crate::cloud::{coarsen_labels, Label, LabeledCloud, PointCloud};
use crate::error::{Error, Result};
use crate::geom::{quantize3, Vec3};
use crate::rng::Stream;
use crate::schema::LabelSchema;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub fn fixed(v: f64) -> Self {
        Range { lo: v, hi: v }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        self.lo + (self.hi - self.lo) * u
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Primitive {
    Box {
        center: [Range; 3],
        size: [Range; 3],
    },
    Cylinder {
        center: [Range; 3],
        diameter: Range,
        height: Range,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct PartSpec {
    /// Finest-level label.
    pub label: usize,
    pub primitive: Primitive,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptionSpec {
    pub weight: f64,
    pub parts: Vec<PartSpec>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComponentSpec {
    pub name: String,
    pub options: Vec<OptionSpec>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CategorySpec {
    pub name: String,
    pub schema: LabelSchema,
    pub points: usize,
    pub scale: [Range; 3],
    pub components: Vec<ComponentSpec>,
}

const CHAIR: &str = "\
category chair
points 2048
scale 0.85:1.15 0.85:1.2 0.85:1.15
level back seat support arm
level back_panel:back back_bar:back seat:seat leg_front_left:support leg_front_right:support leg_back_left:support leg_back_right:support stretcher:support pole:support base:support arm_vertical:arm arm_horizontal:arm
component seat
option 1
box seat 0 0 0 1 0.08:0.14 0.9:1.05
component back
option 0.6
box back_panel 0 0.55:0.65 -0.47 0.95:1 0.9:1.2 0.06:0.1
option 0.4
box back_panel 0 1.0:1.1 -0.47 1 0.12:0.18 0.08
box back_bar -0.3 0.5 -0.47 0.08:0.12 0.9 0.06
box back_bar 0 0.5 -0.47 0.08:0.12 0.9 0.06
box back_bar 0.3 0.5 -0.47 0.08:0.12 0.9 0.06
component support
option 0.4
box leg_front_left -0.44 -0.5 0.42 0.07:0.12 1 0.07:0.12
box leg_front_right 0.44 -0.5 0.42 0.07:0.12 1 0.07:0.12
box leg_back_left -0.44 -0.5 -0.42 0.07:0.12 1 0.07:0.12
box leg_back_right 0.44 -0.5 -0.42 0.07:0.12 1 0.07:0.12
option 0.2
box leg_front_left -0.44 -0.5 0.42 0.07:0.1 1 0.07:0.1
box leg_front_right 0.44 -0.5 0.42 0.07:0.1 1 0.07:0.1
box leg_back_left -0.44 -0.5 -0.42 0.07:0.1 1 0.07:0.1
box leg_back_right 0.44 -0.5 -0.42 0.07:0.1 1 0.07:0.1
box stretcher 0 -0.65:-0.55 0 0.85 0.05 0.05
option 0.15
box leg_front_left -0.44 -0.5 0 0.06:0.1 1 0.9:1
box leg_front_right 0.44 -0.5 0 0.06:0.1 1 0.9:1
option 0.25
cylinder pole 0 -0.45 0 0.1:0.16 0.9
cylinder base 0 -0.95 0 0.8:1.1 0.06:0.1
component arm
option 0.6
option 0.4
box arm_vertical -0.5 0.15 0.3 0.06 0.3 0.06
box arm_vertical 0.5 0.15 0.3 0.06 0.3 0.06
box arm_horizontal -0.5 0.32 -0.05 0.08:0.12 0.05 0.8
box arm_horizontal 0.5 0.32 -0.05 0.08:0.12 0.05 0.8
";

const TABLE: &str = "\
category table
points 2048
scale 0.9:1.6 0.7:1.1 0.8:1.2
level top support
level top:top leg_front_left:support leg_front_right:support leg_back_left:support leg_back_right:support stretcher:support pedestal:support foot:support
component top
option 0.7
box top 0 0 0 1.2 0.05:0.1 0.8
option 0.3
cylinder top 0 0 0 1.0:1.2 0.05:0.08
component support
option 0.5
box leg_front_left -0.5 -0.5 0.32 0.06:0.1 1 0.06:0.1
box leg_front_right 0.5 -0.5 0.32 0.06:0.1 1 0.06:0.1
box leg_back_left -0.5 -0.5 -0.32 0.06:0.1 1 0.06:0.1
box leg_back_right 0.5 -0.5 -0.32 0.06:0.1 1 0.06:0.1
option 0.2
box leg_front_left -0.5 -0.5 0.32 0.06:0.1 1 0.06:0.1
box leg_front_right 0.5 -0.5 0.32 0.06:0.1 1 0.06:0.1
box leg_back_left -0.5 -0.5 -0.32 0.06:0.1 1 0.06:0.1
box leg_back_right 0.5 -0.5 -0.32 0.06:0.1 1 0.06:0.1
box stretcher 0 -0.8:-0.6 0 1.0 0.04 0.04
option 0.3
cylinder pedestal 0 -0.5 0 0.12:0.2 0.95
cylinder foot 0 -0.97 0 0.5:0.8 0.05
";

const LAMP: &str = "\
category lamp
points 2048
scale 0.8:1.2 0.8:1.3 0.8:1.2
level base body shade
level base_plate:base pole:body arm:body shade:shade
component base
option 0.6
cylinder base_plate 0 -1 0 0.5:0.7 0.06:0.1
option 0.4
box base_plate 0 -1 0 0.5:0.6 0.06:0.1 0.4:0.5
component body
option 0.6
cylinder pole 0 -0.3 0 0.04:0.07 1.4
option 0.4
cylinder pole 0 -0.5 0 0.04:0.07 1.0
box arm 0.2 0.0 0 0.4:0.5 0.04 0.04
component shade
option 1
cylinder shade 0 0.5:0.6 0 0.4:0.6 0.3:0.4
";

/// Names of the built-in categories.
pub const BUILTIN: [&str; 3] = ["chair", "table", "lamp"];

pub fn builtin(name: &str) -> Option<CategorySpec> {
    let text = match name {
        "chair" => CHAIR,
        "table" => TABLE,
        "lamp" => LAMP,
        _ => return None,
    };
    Some(CategorySpec::parse(text).expect("built-in spec parses"))
}

fn parse_range(tok: &str) -> Option<Range> {
    match tok.split_once(':') {
        Some((a, b)) => {
            let (lo, hi) = (a.parse().ok()?, b.parse().ok()?);
            (lo <= hi).then_some(Range { lo, hi })
        }
        None => tok.parse().ok().map(Range::fixed),
    }
}

impl CategorySpec {
    pub fn parse(text: &str) -> Result<CategorySpec> {
        let bad = |line: usize, msg: &str| Error::InvalidSpec(format!("line {line}: {msg}"));
        let mut name = None;
        let mut points = 2048usize;
        let mut scale = [Range::fixed(1.0); 3];
        let mut levels: Vec<Vec<(String, Option<String>)>> = Vec::new();
        let mut components: Vec<ComponentSpec> = Vec::new();
        let mut raw_parts: Vec<(usize, usize, String, Primitive)> = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let ln = ln + 1;
            let line = line.split('#').next().unwrap_or("").trim();
            let toks: Vec<&str> = line.split_whitespace().collect();
            let Some((&head, args)) = toks.split_first() else {
                continue;
            };
            match head {
                "category" => name = Some(args.join(" ")),
                "points" => {
                    points = args
                        .first()
                        .and_then(|t| t.parse().ok())
                        .filter(|&n| n > 0)
                        .ok_or_else(|| bad(ln, "expected a positive point count"))?
                }
                "scale" => {
                    if args.len() != 3 {
                        return Err(bad(ln, "scale takes 3 ranges"));
                    }
                    for (s, t) in scale.iter_mut().zip(args) {
                        *s = parse_range(t)
                            .filter(|r| r.lo > 0.0)
                            .ok_or_else(|| bad(ln, "bad scale range"))?;
                    }
                }
                "level" => {
                    let first = levels.is_empty();
                    let mut names = Vec::new();
                    for t in args {
                        if first {
                            names.push((t.to_string(), None));
                        } else {
                            let (c, p) = t.split_once(':').ok_or_else(|| bad(ln, "expected name:parent"))?;
                            names.push((c.to_string(), Some(p.to_string())));
                        }
                    }
                    if names.is_empty() {
                        return Err(bad(ln, "empty level"));
                    }
                    levels.push(names);
                }
                "component" => components.push(ComponentSpec {
                    name: args.join(" "),
                    options: Vec::new(),
                }),
                "option" => {
                    let w = args
                        .first()
                        .and_then(|t| t.parse::<f64>().ok())
                        .filter(|w| *w > 0.0 && w.is_finite())
                        .ok_or_else(|| bad(ln, "expected a positive weight"))?;
                    components
                        .last_mut()
                        .ok_or_else(|| bad(ln, "option outside a component"))?
                        .options
                        .push(OptionSpec {
                            weight: w,
                            parts: Vec::new(),
                        });
                }
                "box" | "cylinder" => {
                    let want = if head == "box" { 7 } else { 6 };
                    if args.len() != want {
                        return Err(bad(ln, &format!("{head} takes a label and {} numbers", want - 1)));
                    }
                    let r: Vec<Range> = args[1..]
                        .iter()
                        .map(|t| parse_range(t))
                        .collect::<Option<_>>()
                        .ok_or_else(|| bad(ln, "bad number"))?;
                    let center = [r[0], r[1], r[2]];
                    let primitive = if head == "box" {
                        Primitive::Box {
                            center,
                            size: [r[3], r[4], r[5]],
                        }
                    } else {
                        Primitive::Cylinder {
                            center,
                            diameter: r[3],
                            height: r[4],
                        }
                    };
                    let c = components
                        .len()
                        .checked_sub(1)
                        .ok_or_else(|| bad(ln, "part outside a component"))?;
                    let o = components[c]
                        .options
                        .len()
                        .checked_sub(1)
                        .ok_or_else(|| bad(ln, "part outside an option"))?;
                    raw_parts.push((c, o, args[0].to_string(), primitive));
                }
                _ => return Err(bad(ln, &format!("unknown keyword {head}"))),
            }
        }
        let name = name.ok_or_else(|| Error::InvalidSpec("missing category line".into()))?;
        if levels.is_empty() {
            return Err(Error::InvalidSpec("missing level lines".into()));
        }
        let mut parents = Vec::new();
        for k in 1..levels.len() {
            let map = levels[k]
                .iter()
                .map(|(c, p)| {
                    let p = p.as_deref().unwrap_or("");
                    levels[k - 1]
                        .iter()
                        .position(|(n, _)| n == p)
                        .ok_or_else(|| Error::InvalidSpec(format!("level {}: unknown parent {p} of {c}", k + 1)))
                })
                .collect::<Result<Vec<_>>>()?;
            parents.push(map);
        }
        let names: Vec<Vec<String>> = levels
            .iter()
            .map(|l| l.iter().map(|(n, _)| n.clone()).collect())
            .collect();
        let schema = LabelSchema::from_parents(names.iter().map(Vec::len).collect(), parents)?.with_names(names)?;
        let finest = schema.level_count() - 1;
        for (c, o, label, primitive) in raw_parts {
            let label = schema
                .label_by_name(finest, &label)
                .ok_or_else(|| Error::InvalidSpec(format!("unknown finest-level label {label}")))?;
            components[c].options[o].parts.push(PartSpec { label, primitive });
        }
        if let Some(c) = components.iter().find(|c| c.options.is_empty()) {
            return Err(Error::InvalidSpec(format!("component {} has no options", c.name)));
        }
        if components.iter().all(|c| c.options.iter().all(|o| o.parts.is_empty())) {
            return Err(Error::InvalidSpec("spec has no parts".into()));
        }
        Ok(CategorySpec {
            name,
            schema,
            points,
            scale,
            components,
        })
    }
}

/// A concrete solid with its surface area.
#[derive(Clone, Copy, Debug)]
enum Solid {
    Box {
        center: Vec3,
        half: Vec3,
    },
    Cylinder {
        center: Vec3,
        radius: f64,
        half_height: f64,
    },
}

impl Solid {
    fn area(&self) -> f64 {
        match *self {
            Solid::Box { half: h, .. } => 8.0 * (h[0] * h[1] + h[1] * h[2] + h[0] * h[2]),
            Solid::Cylinder {
                radius, half_height, ..
            } => {
                let tau = std::f64::consts::TAU;
                tau * radius * 2.0 * half_height + tau * radius * radius
            }
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> (Vec3, Vec3) {
        match *self {
            Solid::Box { center, half } => {
                let faces = [half[1] * half[2], half[0] * half[2], half[0] * half[1]];
                let total: f64 = faces.iter().sum::<f64>() * 2.0;
                let mut t = rng.random::<f64>() * total;
                let mut face = 5;
                for f in 0..6 {
                    if t < faces[f / 2] || f == 5 {
                        face = f;
                        break;
                    }
                    t -= faces[f / 2];
                }
                let axis = face / 2;
                let sign = if face % 2 == 0 { 1.0 } else { -1.0 };
                let mut p = [0.0; 3];
                let mut n = [0.0; 3];
                for a in 0..3 {
                    p[a] = if a == axis {
                        center[a] + sign * half[a]
                    } else {
                        center[a] + half[a] * (2.0 * rng.random::<f64>() - 1.0)
                    };
                }
                n[axis] = sign;
                (p, n)
            }
            Solid::Cylinder {
                center,
                radius,
                half_height,
            } => {
                let side = 2.0 * half_height;
                let cap = 0.5 * radius;
                let total = side + 2.0 * cap;
                let t = rng.random::<f64>() * total;
                let theta = std::f64::consts::TAU * rng.random::<f64>();
                let (s, c) = theta.sin_cos();
                if t < side {
                    let y = center[1] + half_height * (2.0 * rng.random::<f64>() - 1.0);
                    ([center[0] + radius * c, y, center[2] + radius * s], [c, 0.0, s])
                } else {
                    let sign = if t < side + cap { 1.0 } else { -1.0 };
                    let r = radius * rng.random::<f64>().sqrt();
                    (
                        [center[0] + r * c, center[1] + sign * half_height, center[2] + r * s],
                        [0.0, sign, 0.0],
                    )
                }
            }
        }
    }
}

fn pick_weighted<R: Rng>(weights: impl Iterator<Item = f64> + Clone, rng: &mut R) -> usize {
    let total: f64 = weights.clone().sum();
    let mut t = rng.random::<f64>() * total;
    let mut last = 0;
    for (i, w) in weights.enumerate() {
        if t < w {
            return i;
        }
        t -= w;
        last = i;
    }
    last
}

/// Which option every component chose for a shape, in component order.
pub fn draw_options<R: Rng>(spec: &CategorySpec, rng: &mut R) -> Vec<usize> {
    spec.components
        .iter()
        .map(|c| pick_weighted(c.options.iter().map(|o| o.weight), rng))
        .collect()
}

pub fn generate_shape(spec: &CategorySpec, stream: Stream) -> Result<LabeledCloud> {
    let mut rng = stream.rng();
    let scale: Vec<f64> = spec.scale.iter().map(|r| r.draw(&mut rng)).collect();
    let options = draw_options(spec, &mut rng);
    let mut solids: Vec<(usize, Solid)> = Vec::new();
    for (c, &o) in spec.components.iter().zip(&options) {
        for part in &c.options[o].parts {
            let solid = match part.primitive {
                Primitive::Box { center, size } => {
                    let mut ce = [0.0; 3];
                    let mut half = [0.0; 3];
                    for a in 0..3 {
                        ce[a] = center[a].draw(&mut rng) * scale[a];
                        half[a] = 0.5 * size[a].draw(&mut rng) * scale[a];
                    }
                    Solid::Box { center: ce, half }
                }
                Primitive::Cylinder {
                    center,
                    diameter,
                    height,
                } => {
                    let mut ce = [0.0; 3];
                    for a in 0..3 {
                        ce[a] = center[a].draw(&mut rng) * scale[a];
                    }
                    Solid::Cylinder {
                        center: ce,
                        radius: 0.25 * diameter.draw(&mut rng) * (scale[0] + scale[2]),
                        half_height: 0.5 * height.draw(&mut rng) * scale[1],
                    }
                }
            };
            solids.push((part.label, solid));
        }
    }
    if solids.is_empty() || solids.iter().any(|(_, s)| s.area().is_nan() || s.area() <= 0.0) {
        return Err(Error::InvalidSpec(format!(
            "{}: drew a shape without surface",
            spec.name
        )));
    }
    let mut points = Vec::with_capacity(spec.points);
    let mut normals = Vec::with_capacity(spec.points);
    let mut fine = Vec::with_capacity(spec.points);
    for _ in 0..spec.points {
        let s = pick_weighted(solids.iter().map(|(_, s)| s.area()), &mut rng);
        let (p, n) = solids[s].1.sample(&mut rng);
        points.push(p);
        normals.push(n);
        fine.push(Label::part(solids[s].0));
    }
    let cloud = PointCloud::new(points, Some(normals))?.normalized_to_unit_sphere();
    let normals = cloud.normals().map(|ns| ns.iter().map(|&n| quantize3(n)).collect());
    let points = cloud.points().iter().map(|&p| quantize3(p)).collect();
    let cloud = PointCloud::new(points, normals)?;
    let labels = coarsen_labels(&fine, &spec.schema)?;
    LabeledCloud::new(cloud, labels, &spec.schema)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub train: Vec<LabeledCloud>,
    pub test: Vec<LabeledCloud>,
    /// One flag per training shape.
    pub labeled: Vec<bool>,
}

/// Number of labeled shapes for a fraction, `ceil(fraction * n)`.
pub fn labeled_count(fraction: f64, n: usize) -> usize {
    // guard against products such as 0.07 * 100 = 7.000000000000001
    ((fraction * n as f64) - 1e-9).ceil().max(0.0) as usize
}

pub fn generate_dataset(
    spec: &CategorySpec,
    n_train: usize,
    n_test: usize,
    labeled_fraction: f64,
    stream: Stream,
) -> Result<Dataset> {
    if !(labeled_fraction > 0.0 && labeled_fraction <= 1.0) {
        return Err(Error::InvalidFraction(labeled_fraction));
    }
    if n_train < 2 {
        return Err(Error::InvalidParams(format!(
            "need at least 2 training shapes, got {n_train}"
        )));
    }
    let gen = |name: &str, n: usize| -> Result<Vec<LabeledCloud>> {
        let s = stream.split(name);
        (0..n)
            .into_par_iter()
            .map(|i| generate_shape(spec, s.index(i as u64)))
            .collect()
    };
    let train = gen("train", n_train)?;
    let test = gen("test", n_test)?;
    let mut labeled = vec![false; n_train];
    let mut rng = stream.split("labeled").rng();
    for i in sample(&mut rng, n_train, labeled_count(labeled_fraction, n_train).min(n_train)) {
        labeled[i] = true;
    }
    Ok(Dataset { train, test, labeled })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_parse() {
        for name in BUILTIN {
            let s = builtin(name).unwrap();
            assert_eq!(s.schema.level_count(), 2);
        }
        let chair = builtin("chair").unwrap();
        assert_eq!(chair.schema.labels_per_level(), &[4, 12]);
    }

    #[test]
    fn minimal_spec_has_one_label() {
        let spec = CategorySpec::parse(
            "category cube\npoints 64\nlevel all\nlevel cube:all\ncomponent c\noption 1\nbox cube 0 0 0 1 1 1\n",
        )
        .unwrap();
        let s = generate_shape(&spec, Stream::new(3)).unwrap();
        assert!(s.labels.finest().iter().all(|&l| l == Label::part(0)));
        assert!(s.labels.level(0).iter().all(|&l| l == Label::part(0)));
    }

    #[test]
    fn deterministic() {
        let spec = builtin("chair").unwrap();
        assert_eq!(
            generate_shape(&spec, Stream::new(0)).unwrap(),
            generate_shape(&spec, Stream::new(0)).unwrap()
        );
    }

    #[test]
    fn labeled_count_uses_ceiling() {
        assert_eq!(labeled_count(0.02, 100), 2);
        assert_eq!(labeled_count(0.02, 200), 4);
        assert_eq!(labeled_count(0.07, 100), 7);
        assert_eq!(labeled_count(0.015, 100), 2);
        assert_eq!(labeled_count(1.0, 5), 5);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(CategorySpec::parse("points 3\n").is_err());
        assert!(CategorySpec::parse("category x\nlevel a\nlevel b:zz\n").is_err());
        assert!(CategorySpec::parse("category x\nlevel a\ncomponent c\noption 1\nbox nope 0 0 0 1 1 1\n").is_err());
        assert!(matches!(
            generate_dataset(&builtin("lamp").unwrap(), 4, 1, 0.0, Stream::new(0)),
            Err(Error::InvalidFraction(_))
        ));
    }
}
