use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mcseg_core::io;
use mcseg_core::rng::Stream;
use mcseg_core::synth::{builtin, generate_shape};
use mcseg_core::Error;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn mcseg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mcseg")).args(args).output().unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn eval_reproduces_the_hand_worked_report() {
    let dir = fixtures().join("golden");
    let out = mcseg(&[
        "eval",
        "--schema",
        path_str(&dir.join("schema.txt")),
        "--pairs",
        path_str(&dir.join("pairs.txt")),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let want = std::fs::read_to_string(dir.join("expected_report.txt")).unwrap();
    assert_eq!(String::from_utf8(out.stdout).unwrap(), want);
}

#[test]
fn flat_eval_reproduces_the_hand_worked_report() {
    let dir = fixtures().join("golden");
    let tmp = tempfile::tempdir().unwrap();
    let report = tmp.path().join("report.txt");
    let out = mcseg(&[
        "eval",
        "--schema",
        path_str(&dir.join("schema.txt")),
        "--pairs",
        path_str(&dir.join("pairs.txt")),
        "--flat",
        path_str(&dir.join("categories.txt")),
        "--out",
        path_str(&report),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let want = std::fs::read_to_string(dir.join("expected_flat.txt")).unwrap();
    assert_eq!(std::fs::read_to_string(report).unwrap(), want);
}

#[test]
fn malformed_clouds_are_rejected_at_their_line() {
    let schema = io::read_schema(&fixtures().join("golden/schema.txt")).unwrap();
    let cases = [
        ("too_few_fields.txt", 2, false),
        ("nan_coordinate.txt", 2, false),
        ("bad_number.txt", 2, false),
        ("count_mismatch.txt", 1, false),
        ("mixed_normals.txt", 3, false),
        ("normal_not_unit.txt", 2, false),
        ("fractional_label.txt", 2, false),
        ("label_out_of_range.txt", 3, true),
        ("incoherent.txt", 2, true),
        ("child_without_parent.txt", 2, true),
    ];
    for (name, line, schema_error) in cases {
        let err = io::read_labeled_cloud(&fixtures().join("malformed").join(name), &schema).unwrap_err();
        match err {
            Error::Format { line: l, .. } if !schema_error => assert_eq!(l, line, "{name}"),
            Error::SchemaMismatch { line: l, .. } if schema_error => assert_eq!(l, line, "{name}"),
            other => panic!("{name}: {other:?}"),
        }
    }
}

#[test]
fn label_99_with_eight_labels_is_a_schema_mismatch() {
    let schema = io::read_schema(&fixtures().join("schema8.txt")).unwrap();
    let err = io::read_labeled_cloud(&fixtures().join("malformed/label_99.txt"), &schema).unwrap_err();
    assert!(matches!(err, Error::SchemaMismatch { line: 4, .. }), "{err:?}");
}

#[test]
fn schema_without_a_parent_is_rejected() {
    let err = io::read_schema(&fixtures().join("bad_schema_missing_parent.txt")).unwrap_err();
    assert!(matches!(err, Error::MissingParent { level: 1, label: 1 }), "{err:?}");
}

#[test]
fn generated_chair_round_trips() {
    let spec = builtin("chair").unwrap();
    let shape = generate_shape(&spec, Stream::new(1)).unwrap();
    let text = io::format_labeled_cloud(&shape, Some("schema.txt"));
    let (back, _) = io::parse_labeled_cloud(&text, "chair", &spec.schema).unwrap();
    assert_eq!(back, shape);
    let schema_text = io::format_schema(&spec.schema);
    assert_eq!(io::parse_schema(&schema_text, "schema").unwrap(), spec.schema);
}

#[test]
fn exit_codes() {
    assert_eq!(mcseg(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(
        mcseg(&["eval", "--schema", "/nonexistent/schema.txt", "--pairs", "x"])
            .status
            .code(),
        Some(2)
    );
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.cfg");
    std::fs::write(&cfg, "train.batch_size = 3\n").unwrap();
    assert_eq!(mcseg(&["--config", path_str(&cfg), "version"]).status.code(), Some(1));
    let out = mcseg(&["version"]);
    assert!(String::from_utf8(out.stdout).unwrap().starts_with("mcseg "));
    assert_eq!(
        mcseg(&["gradcheck", "--instances", "2", "--tolerance", "1e-30"])
            .status
            .code(),
        Some(3)
    );
    assert_eq!(mcseg(&["gradcheck", "--instances", "2"]).status.code(), Some(0));
}

#[test]
fn loss_command_on_identical_copies() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("schema.txt"), "levels 1\nlevel 1 3\n").unwrap();
    let logits = "#logits 2 3\n0.5 -1 2\n0 0 0\n";
    std::fs::write(d.join("a.txt"), logits).unwrap();
    std::fs::write(d.join("b.txt"), logits).unwrap();
    std::fs::write(d.join("corr.txt"), "0 0 0\n1 1 1\n").unwrap();
    let out = mcseg(&[
        "loss",
        "--schema",
        path_str(&d.join("schema.txt")),
        "--logits-a",
        path_str(&d.join("a.txt")),
        "--logits-b",
        path_str(&d.join("b.txt")),
        "--corr",
        path_str(&d.join("corr.txt")),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(
        text.contains("L_point 0.0\n") && text.contains("L_part 0.0\n") && text.contains("L_tc 0.0\n"),
        "{text}"
    );
}
