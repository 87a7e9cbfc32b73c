//! Text formats: labeled clouds, schemas, manifests, logits and config files.
//!
//! Labeled cloud:
//!
//! ```text
//! #schema schema.txt
//! #points 2
//! 0.1 0.2 0.3 0 0 1 2 7
//! 0.4 0.5 0.6 0 0 1 -1 -1
//! ```
//!
//! Each point line holds `x y z`, optionally `nx ny nz`, then one label per
//! level (coarsest first, `-1` for unlabeled). Other `#` lines are comments.
//!
//! Schema:
//!
//! ```text
//! levels 2
//! level 1 2 back support
//! level 2 3 back_panel leg stretcher
//! parent 0 0
//! parent 1 1
//! parent 2 1
//! ```
//!
//! `parent` lines belong to the most recent `level` line. Manifest lines are
//! `path split labeled` with `split` one of `train`/`test` and `labeled` 0 or 1.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use crate::cloud::{HierLabels, Label, LabeledCloud, PointCloud};
use crate::error::{Error, Result};
use crate::field::LogitsField;
use crate::geom::quantize;
use crate::perturb::{CorrPair, Correspondence};
use crate::schema::LabelSchema;

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// A float at 9 significant digits, in the shortest form that reads back to
/// the same value.
pub fn fmt_f64(x: f64) -> String {
    let q = quantize(x);
    if q == 0.0 {
        "0".to_string()
    } else {
        format!("{q}")
    }
}

fn format_err(path: &str, line: usize, msg: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_string(),
        line,
        msg: msg.into(),
    }
}

fn schema_err(path: &str, line: usize, msg: impl Into<String>) -> Error {
    Error::SchemaMismatch {
        path: path.to_string(),
        line,
        msg: msg.into(),
    }
}

pub fn format_labeled_cloud(shape: &LabeledCloud, schema_ref: Option<&str>) -> String {
    let mut out = String::new();
    if let Some(s) = schema_ref {
        let _ = writeln!(out, "#schema {s}");
    }
    let _ = writeln!(out, "#points {}", shape.len());
    let normals = shape.cloud.normals();
    for (i, p) in shape.cloud.points().iter().enumerate() {
        let mut fields: Vec<String> = p.iter().map(|&v| fmt_f64(v)).collect();
        if let Some(ns) = normals {
            fields.extend(ns[i].iter().map(|&v| fmt_f64(v)));
        }
        for k in 0..shape.labels.level_count() {
            fields.push(shape.labels.get(k, i).to_i64().to_string());
        }
        let _ = writeln!(out, "{}", fields.join(" "));
    }
    out
}

pub fn write_labeled_cloud(path: &Path, shape: &LabeledCloud, schema_ref: Option<&str>) -> Result<()> {
    write_text(path, &format_labeled_cloud(shape, schema_ref))
}

/// Parse a labeled cloud against `schema`. Returns the cloud and the
/// `#schema` reference, if any.
pub fn parse_labeled_cloud(text: &str, path: &str, schema: &LabelSchema) -> Result<(LabeledCloud, Option<String>)> {
    let k_count = schema.level_count();
    let mut schema_ref = None;
    let mut declared: Option<(usize, usize)> = None;
    let mut points = Vec::new();
    let mut normals = Vec::new();
    let mut with_normals: Option<bool> = None;
    let mut levels: Vec<Vec<Label>> = vec![Vec::new(); k_count];
    for (ln, line) in text.lines().enumerate() {
        let ln = ln + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let rest = rest.trim();
            if let Some(s) = rest.strip_prefix("schema") {
                schema_ref = Some(s.trim().to_string());
            } else if let Some(n) = rest.strip_prefix("points") {
                let n = n
                    .trim()
                    .parse::<usize>()
                    .map_err(|_| format_err(path, ln, "expected `#points <n>`"))?;
                declared = Some((n, ln));
            }
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        let has_normals = match toks.len() {
            n if n == 3 + k_count => false,
            n if n == 6 + k_count => true,
            n => {
                return Err(format_err(
                    path,
                    ln,
                    format!(
                        "expected {} or {} fields for {k_count} levels, found {n}",
                        3 + k_count,
                        6 + k_count
                    ),
                ))
            }
        };
        if *with_normals.get_or_insert(has_normals) != has_normals {
            return Err(format_err(path, ln, "normals present on some lines only"));
        }
        let n_float = if has_normals { 6 } else { 3 };
        let mut v = [0.0; 6];
        for (slot, tok) in v.iter_mut().zip(&toks[..n_float]) {
            *slot = tok
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| format_err(path, ln, format!("bad coordinate `{tok}`")))?;
        }
        points.push([v[0], v[1], v[2]]);
        if has_normals {
            let n = [v[3], v[4], v[5]];
            if (crate::geom::norm(n) - 1.0).abs() > crate::cloud::NORMAL_TOLERANCE {
                return Err(format_err(path, ln, "normal is not unit length"));
            }
            normals.push(n);
        }
        for (k, tok) in toks[n_float..].iter().enumerate() {
            let l: i64 = tok
                .parse()
                .map_err(|_| format_err(path, ln, format!("bad label `{tok}`")))?;
            let label = match l {
                -1 => Label::Unlabeled,
                l if l >= 0 && (l as usize) < schema.labels(k) => Label::part(l as usize),
                l => {
                    return Err(schema_err(
                        path,
                        ln,
                        format!("label {l} at level {} is outside 0..{}", k + 1, schema.labels(k)),
                    ))
                }
            };
            levels[k].push(label);
        }
        let i = points.len() - 1;
        for k in 1..k_count {
            let (p, c) = (levels[k - 1][i], levels[k][i]);
            let ok = match (p, c) {
                (Label::Part(p), Label::Part(c)) => schema.parent(k, c as usize) == p as usize,
                (Label::Unlabeled, Label::Part(_)) => false,
                _ => true,
            };
            if !ok {
                return Err(schema_err(
                    path,
                    ln,
                    format!("level {} label does not descend from level {k}", k + 1),
                ));
            }
        }
    }
    if let Some((n, ln)) = declared {
        if n != points.len() {
            return Err(format_err(
                path,
                ln,
                format!("declared {n} points, found {}", points.len()),
            ));
        }
    }
    if points.is_empty() {
        return Err(format_err(path, text.lines().count().max(1), "no points"));
    }
    let normals = with_normals.unwrap_or(false).then_some(normals);
    let cloud = PointCloud::new(points, normals).map_err(|e| format_err(path, 0, e.to_string()))?;
    let labels = HierLabels::new(levels, schema)?;
    Ok((LabeledCloud::new(cloud, labels, schema)?, schema_ref))
}

pub fn read_labeled_cloud(path: &Path, schema: &LabelSchema) -> Result<LabeledCloud> {
    let text = read_text(path)?;
    Ok(parse_labeled_cloud(&text, &path.display().to_string(), schema)?.0)
}

pub fn format_schema(schema: &LabelSchema) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "levels {}", schema.level_count());
    for k in 0..schema.level_count() {
        let mut line = format!("level {} {}", k + 1, schema.labels(k));
        for name in schema.level_names(k) {
            line.push(' ');
            line.push_str(name);
        }
        let _ = writeln!(out, "{line}");
        if k > 0 {
            for (c, p) in schema.parent_map(k).iter().enumerate() {
                let _ = writeln!(out, "parent {c} {p}");
            }
        }
    }
    out
}

pub fn parse_schema(text: &str, path: &str) -> Result<LabelSchema> {
    let mut declared: Option<usize> = None;
    let mut counts: Vec<usize> = Vec::new();
    let mut names: Vec<Vec<String>> = Vec::new();
    let mut maps: Vec<Vec<Option<usize>>> = Vec::new();
    let mut last_line = 0;
    for (ln, line) in text.lines().enumerate() {
        let ln = ln + 1;
        last_line = ln;
        let line = line.split('#').next().unwrap_or("").trim();
        let toks: Vec<&str> = line.split_whitespace().collect();
        let Some((&head, args)) = toks.split_first() else {
            continue;
        };
        let num = |t: Option<&&str>, what: &str| -> Result<usize> {
            t.and_then(|t| t.parse().ok())
                .ok_or_else(|| format_err(path, ln, format!("expected {what}")))
        };
        match head {
            "levels" => declared = Some(num(args.first(), "a level count")?),
            "level" => {
                let k = num(args.first(), "a level number")?;
                if k != counts.len() + 1 {
                    return Err(format_err(
                        path,
                        ln,
                        format!("expected level {}, found {k}", counts.len() + 1),
                    ));
                }
                let l = num(args.get(1), "a label count")?;
                let n: Vec<String> = args[2..].iter().map(|s| s.to_string()).collect();
                if !n.is_empty() && n.len() != l {
                    return Err(format_err(path, ln, format!("{} names for {l} labels", n.len())));
                }
                counts.push(l);
                names.push(n);
                if k > 1 {
                    maps.push(vec![None; l]);
                }
            }
            "parent" => {
                let c = num(args.first(), "a child label")?;
                let p = num(args.get(1), "a parent label")?;
                let Some(map) = maps.last_mut().filter(|_| counts.len() > 1) else {
                    return Err(format_err(path, ln, "parent line before a level 2+ line"));
                };
                let k = counts.len();
                if c >= map.len() {
                    return Err(format_err(path, ln, format!("label {c} is outside level {k}")));
                }
                if p >= counts[k - 2] {
                    return Err(format_err(path, ln, format!("parent {p} is outside level {}", k - 1)));
                }
                if map[c].replace(p).is_some() {
                    return Err(format_err(path, ln, format!("label {c} has two parents")));
                }
            }
            _ => return Err(format_err(path, ln, format!("unknown keyword `{head}`"))),
        }
    }
    if let Some(d) = declared {
        if d != counts.len() {
            return Err(format_err(
                path,
                last_line,
                format!("declared {d} levels, found {}", counts.len()),
            ));
        }
    }
    LabelSchema::new(counts, maps)?.with_names(names)
}

pub fn read_schema(path: &Path) -> Result<LabelSchema> {
    parse_schema(&read_text(path)?, &path.display().to_string())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub split: Split,
    pub labeled: bool,
}

pub fn format_manifest(entries: &[ManifestEntry]) -> String {
    let mut out = String::new();
    for e in entries {
        let split = match e.split {
            Split::Train => "train",
            Split::Test => "test",
        };
        let _ = writeln!(out, "{} {split} {}", e.path.display(), u8::from(e.labeled));
    }
    out
}

pub fn parse_manifest(text: &str, path: &str) -> Result<Vec<ManifestEntry>> {
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let ln = ln + 1;
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 3 {
            return Err(format_err(path, ln, "expected `path split labeled`"));
        }
        let split = match toks[1] {
            "train" => Split::Train,
            "test" => Split::Test,
            s => return Err(format_err(path, ln, format!("unknown split `{s}`"))),
        };
        let labeled = match toks[2] {
            "1" | "true" => true,
            "0" | "false" => false,
            s => return Err(format_err(path, ln, format!("bad labeled flag `{s}`"))),
        };
        out.push(ManifestEntry {
            path: PathBuf::from(toks[0]),
            split,
            labeled,
        });
    }
    Ok(out)
}

/// Manifest entries with paths resolved against the manifest's directory.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let base = path.parent().unwrap_or(Path::new(""));
    let mut entries = parse_manifest(&read_text(path)?, &path.display().to_string())?;
    for e in &mut entries {
        if e.path.is_relative() {
            e.path = base.join(&e.path);
        }
    }
    Ok(entries)
}

/// Logits: `#logits <rows> <L1> .. <LK>`, then one line per row with every
/// level's scores concatenated.
pub fn format_logits(l: &LogitsField) -> String {
    let mut out = String::new();
    let widths: Vec<String> = l.levels.iter().map(|m| m.ncols().to_string()).collect();
    let _ = writeln!(out, "#logits {} {}", l.rows(), widths.join(" "));
    for i in 0..l.rows() {
        let row: Vec<String> = l
            .levels
            .iter()
            .flat_map(|m| m.row(i).iter().map(|v| format!("{v:?}")).collect::<Vec<_>>())
            .collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
    out
}

pub fn parse_logits(text: &str, path: &str) -> Result<LogitsField> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let (ln, head) = lines.next().ok_or_else(|| format_err(path, 1, "empty logits file"))?;
    let dims: Vec<usize> = head
        .strip_prefix("#logits")
        .map(|r| {
            r.split_whitespace()
                .map(|t| t.parse())
                .collect::<std::result::Result<_, _>>()
        })
        .and_then(|r| r.ok())
        .filter(|d: &Vec<usize>| d.len() >= 2)
        .ok_or_else(|| format_err(path, ln, "expected `#logits <rows> <L1> ..`"))?;
    let (rows, widths) = (dims[0], &dims[1..]);
    let total: usize = widths.iter().sum();
    let mut levels: Vec<Array2<f64>> = widths.iter().map(|&w| Array2::zeros((rows, w))).collect();
    let mut r = 0;
    for (ln, line) in lines {
        if line.starts_with('#') {
            continue;
        }
        if r == rows {
            return Err(format_err(path, ln, "more rows than declared"));
        }
        let v: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().ok().filter(|x| x.is_finite()))
            .collect::<Option<_>>()
            .ok_or_else(|| format_err(path, ln, "bad number"))?;
        if v.len() != total {
            return Err(format_err(
                path,
                ln,
                format!("expected {total} values, found {}", v.len()),
            ));
        }
        let mut off = 0;
        for (m, &w) in levels.iter_mut().zip(widths) {
            for c in 0..w {
                m[[r, c]] = v[off + c];
            }
            off += w;
        }
        r += 1;
    }
    if r != rows {
        return Err(format_err(path, 0, format!("declared {rows} rows, found {r}")));
    }
    LogitsField::new(levels)
}

/// Correspondence: one `source a b` triple per line.
pub fn format_correspondence(c: &Correspondence) -> String {
    let mut out = String::new();
    for p in &c.pairs {
        let _ = writeln!(out, "{} {} {}", p.source, p.a, p.b);
    }
    out
}

pub fn parse_correspondence(text: &str, path: &str) -> Result<Correspondence> {
    let mut pairs = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let v: Vec<usize> = line
            .split_whitespace()
            .map(|t| t.parse().ok())
            .collect::<Option<_>>()
            .filter(|v: &Vec<usize>| v.len() == 3)
            .ok_or_else(|| format_err(path, ln + 1, "expected `source a b`"))?;
        pairs.push(CorrPair {
            source: v[0],
            a: v[1],
            b: v[2],
        });
    }
    Ok(Correspondence { pairs })
}

/// Flat `key = value` settings; `#` starts a comment.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Config {
    values: BTreeMap<String, (String, usize)>,
    path: String,
}

impl Config {
    pub fn parse(text: &str, path: &str) -> Result<Config> {
        let mut values = BTreeMap::new();
        for (ln, line) in text.lines().enumerate() {
            let ln = ln + 1;
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| format_err(path, ln, "expected `key = value`"))?;
            let k = k.trim();
            if k.is_empty() {
                return Err(format_err(path, ln, "empty key"));
            }
            if values.insert(k.to_string(), (v.trim().to_string(), ln)).is_some() {
                return Err(format_err(path, ln, format!("duplicate key `{k}`")));
            }
        }
        Ok(Config {
            values,
            path: path.to_string(),
        })
    }

    pub fn read(path: &Path) -> Result<Config> {
        Config::parse(&read_text(path)?, &path.display().to_string())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(String::as_str)
    }

    /// Error for the first key not in `known`.
    pub fn check_known(&self, known: &[&str]) -> Result<()> {
        match self.values.iter().find(|(k, _)| !known.contains(&k.as_str())) {
            Some((k, (_, ln))) => Err(format_err(&self.path, *ln, format!("unknown key `{k}`"))),
            None => Ok(()),
        }
    }

    pub fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.values.get(key) {
            None => Ok(None),
            Some((v, ln)) => v
                .parse()
                .map(Some)
                .map_err(|_| format_err(&self.path, *ln, format!("bad value `{v}` for `{key}`"))),
        }
    }

    /// Comma-separated list.
    pub fn get_list<T: std::str::FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        match self.values.get(key) {
            None => Ok(None),
            Some((v, ln)) => v
                .split(',')
                .map(|t| t.trim())
                .filter(|t| !t.is_empty())
                .map(|t| t.parse().ok())
                .collect::<Option<Vec<T>>>()
                .map(Some)
                .ok_or_else(|| format_err(&self.path, *ln, format!("bad list `{v}` for `{key}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::coarsen_labels;

    fn schema() -> LabelSchema {
        LabelSchema::from_parents(vec![2, 3], vec![vec![0, 1, 1]])
            .unwrap()
            .with_names(vec![
                vec!["back".into(), "support".into()],
                vec!["panel".into(), "leg".into(), "stretcher".into()],
            ])
            .unwrap()
    }

    #[test]
    fn schema_round_trip() {
        let s = schema();
        assert_eq!(parse_schema(&format_schema(&s), "s").unwrap(), s);
    }

    #[test]
    fn missing_parent_line() {
        let text = "levels 2\nlevel 1 2\nlevel 2 3\nparent 0 0\nparent 1 1\n";
        assert!(matches!(
            parse_schema(text, "s"),
            Err(Error::MissingParent { level: 1, label: 2 })
        ));
    }

    #[test]
    fn cloud_round_trip_is_exact() {
        let s = schema();
        let pts = vec![[0.123456789, -0.5, 1.0 / 3.0], [1e-12, 0.25, -0.75]];
        let pts: Vec<_> = pts.into_iter().map(crate::geom::quantize3).collect();
        let fine = vec![Label::part(2), Label::Unlabeled];
        let shape = LabeledCloud::new(
            PointCloud::new(pts, Some(vec![[0.0, 0.0, 1.0], [1.0, 0.0, 0.0]])).unwrap(),
            coarsen_labels(&fine, &s).unwrap(),
            &s,
        )
        .unwrap();
        let text = format_labeled_cloud(&shape, Some("schema.txt"));
        let (back, r) = parse_labeled_cloud(&text, "c", &s).unwrap();
        assert_eq!(back, shape);
        assert_eq!(r.as_deref(), Some("schema.txt"));
    }

    #[test]
    fn out_of_range_label_reports_line() {
        let text = "#points 2\n0 0 0 0 0\n0 0 0 1 99\n";
        match parse_labeled_cloud(text, "c", &schema()) {
            Err(Error::SchemaMismatch { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_lines() {
        let s = schema();
        for (text, line) in [
            ("0 0 0 0\n", 1),
            ("0 0 x 0 0\n", 1),
            ("#points 3\n0 0 0 0 0\n", 1),
            ("0 0 0 0 0\n0 0 0 0 0 1 0 0\n", 2),
            ("0 0 0 0 0 2 0 0\n", 1),
            ("0 0 0 1 0\n", 1),
        ] {
            let e = parse_labeled_cloud(text, "c", &s).unwrap_err();
            match e {
                Error::Format { line: l, .. } | Error::SchemaMismatch { line: l, .. } => assert_eq!(l, line, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn manifest_round_trip() {
        let m = vec![
            ManifestEntry {
                path: "train/0000.txt".into(),
                split: Split::Train,
                labeled: true,
            },
            ManifestEntry {
                path: "test/0000.txt".into(),
                split: Split::Test,
                labeled: false,
            },
        ];
        assert_eq!(parse_manifest(&format_manifest(&m), "m").unwrap(), m);
    }

    #[test]
    fn logits_round_trip() {
        let l = LogitsField::new(vec![
            Array2::from_shape_vec((2, 2), vec![0.1, -2.5, 1e-300, 3.0]).unwrap(),
            Array2::from_shape_vec((2, 1), vec![7.0, 1.0 / 3.0]).unwrap(),
        ])
        .unwrap();
        assert_eq!(parse_logits(&format_logits(&l), "l").unwrap(), l);
    }

    #[test]
    fn config_values() {
        let c = Config::parse("# comment\ntrain.lr = 0.05\nsubst.theta = 0.5, 0.25\n", "cfg").unwrap();
        assert_eq!(c.get::<f64>("train.lr").unwrap(), Some(0.05));
        assert_eq!(c.get_list::<f64>("subst.theta").unwrap(), Some(vec![0.5, 0.25]));
        assert!(c.check_known(&["train.lr"]).is_err());
        assert!(Config::parse("a = 1\na = 2\n", "cfg").is_err());
    }
}
