use std::path::{Path, PathBuf};
use std::process::Command;

use mpkernel::cli::{run, EXIT_CAP, EXIT_INPUT, EXIT_OK};

const SINGLE_VERTEX: &str = "multipers-bifiltration v1\n1\n0 0 ; 1 0 0\n";
const EMPTY: &str = "multipers-bifiltration v1\n0\n";
const EDGE: &str = "multipers-bifiltration v1\n3\n0 0 ; 1 0.1 0.2\n0 1 ; 1 0.2 0.1\n1 0 1 ; 1 0.6 0.7\n";
const EDGE2: &str = "multipers-bifiltration v1\n3\n0 0 ; 1 0.3 0.1\n0 1 ; 1 0.1 0.3\n1 0 1 ; 2 0.5 0.9 0.8 0.4\n";

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn mpk(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("mpk").chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn validate_single_vertex() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "v.txt", SINGLE_VERTEX);
    let (code, out, _) = mpk(&["validate", s(&f)]);
    assert_eq!(code, EXIT_OK);
    assert!(out.starts_with("ok: 1 simplices"), "{out}");
}

#[test]
fn validate_reports_input_errors() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.txt", "multipers-bifiltration v1\n2\n0 0 ; 1 0 0\n1 0 1 ; 1 1 1\n");
    let (code, _, err) = mpk(&["validate", s(&bad)]);
    assert_eq!(code, EXIT_INPUT);
    assert!(err.starts_with("error:"), "{err}");

    let (code, _, _) = mpk(&["validate", s(&dir.path().join("missing.txt"))]);
    assert_eq!(code, EXIT_INPUT);
}

#[test]
fn usage_errors_exit_one() {
    let (code, _, err) = mpk(&["kernel", "--epsilon"]);
    assert_eq!(code, EXIT_INPUT);
    assert!(!err.is_empty());
    let (code, _, _) = mpk(&["no-such-command"]);
    assert_eq!(code, EXIT_INPUT);
}

#[test]
fn kernel_of_empty_filtrations() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "e.txt", EMPTY);
    let (code, out, _) = mpk(&["kernel", s(&f), s(&f), "--epsilon", "0.1"]);
    assert_eq!(code, EXIT_OK);
    let mut lines = out.lines();
    assert_eq!(lines.next().unwrap().parse::<f64>().unwrap(), 0.0);
    let record: serde_json::Value = serde_json::from_str(lines.next().unwrap()).unwrap();
    let end = |k: &str| record["interval"][k].as_str().unwrap().parse::<f64>().unwrap();
    let (lo, hi) = (end("lo"), end("hi"));
    assert!(lo <= 0.0 && hi - lo <= 0.1, "{record}");
}

#[test]
fn kernel_resolution_cap_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "x.txt", EDGE);
    let (code, _, err) = mpk(&["kernel", s(&f), s(&f), "--epsilon", "1e-6", "--max-depth", "2"]);
    assert_eq!(code, EXIT_CAP, "{err}");
}

#[test]
fn kernel_rejects_bad_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "x.txt", EDGE);
    for args in [
        vec!["--epsilon", "-1"],
        vec!["--t", "0"],
        vec!["--essential", "cap=0.5"],
        vec!["--essential", "sometimes"],
        vec!["--rect", "0", "0", "0", "1"],
    ] {
        let mut argv = vec!["kernel", s(&f), s(&f)];
        argv.extend(args.iter().copied());
        assert_eq!(mpk(&argv).0, EXIT_INPUT, "{args:?}");
    }
}

#[test]
fn kernel_output_is_symmetric_and_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let x = write(dir.path(), "x.txt", EDGE);
    let y = write(dir.path(), "y.txt", EDGE2);
    let a = mpk(&["kernel", s(&x), s(&y), "--epsilon", "0.2"]);
    let b = mpk(&["kernel", s(&x), s(&y), "--epsilon", "0.2"]);
    assert_eq!(a.0, EXIT_OK);
    assert_eq!(a.1, b.1);
    let c = mpk(&["kernel", s(&y), s(&x), "--epsilon", "0.2"]);
    let first = |o: &str| o.lines().next().unwrap().parse::<f64>().unwrap();
    assert!((first(&a.1) - first(&c.1)).abs() <= 0.2);
}

#[test]
fn gram_writes_csv_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let files = [
        write(dir.path(), "a.txt", EMPTY),
        write(dir.path(), "b.txt", EDGE),
        write(dir.path(), "c.txt", EDGE2),
    ];
    let out = dir.path().join("gram.csv");
    let (code, _, err) = mpk(&[
        "gram",
        s(&files[0]),
        s(&files[1]),
        s(&files[2]),
        "--epsilon",
        "0.2",
        "--out",
        s(&out),
    ]);
    assert_eq!(code, EXIT_OK, "{err}");
    let csv = std::fs::read_to_string(&out).unwrap();
    let rows: Vec<Vec<f64>> = csv
        .lines()
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 3);
    for i in 0..3 {
        assert_eq!(rows[i].len(), 3);
        for j in 0..3 {
            assert_eq!(rows[i][j], rows[j][i]);
        }
    }
    assert_eq!(rows[0], vec![0.0, 0.0, 0.0]);
    let side: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("gram.csv.json")).unwrap()).unwrap();
    assert_eq!(side["intervals"].as_array().unwrap().len(), 3);
    assert_eq!(side["final_resolution"][1].as_array().unwrap().len(), 3);
}

#[test]
fn gram_reads_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "a.txt", EDGE);
    write(dir.path(), "b.txt", EDGE2);
    let manifest = write(dir.path(), "list.txt", "a.txt\n\nb.txt\n");
    let (code, out, err) = mpk(&["gram", "--manifest", s(&manifest), "--epsilon", "0.2"]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert_eq!(out.lines().count(), 2);
}

#[test]
fn diagram_csv_marks_essential_classes() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "x.txt", EDGE);
    let (code, out, _) = mpk(&["diagram", s(&f), "--line", "0.7071067811865476", "0", "--degree", "0"]);
    assert_eq!(code, EXIT_OK);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "degree,birth,death");
    assert_eq!(lines.len(), 3);
    assert!(lines.iter().any(|l| l.ends_with(",inf")));
}

#[test]
fn distance_and_matching_of_identical_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "x.txt", EDGE);
    let (code, out, _) = mpk(&["match-distance", s(&f), s(&f), "--samples", "4"]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(out.lines().next().unwrap(), "0");
    let (code, out, _) = mpk(&["distance", s(&f), s(&f), "--epsilon", "0.3"]);
    assert_eq!(code, EXIT_OK);
    let record: serde_json::Value = serde_json::from_str(out.lines().nth(1).unwrap()).unwrap();
    let lo: f64 = record["interval"]["lo"].as_str().unwrap().parse().unwrap();
    assert_eq!(lo, 0.0);
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let good = write(dir.path(), "v.txt", SINGLE_VERTEX);
    let bad = write(dir.path(), "bad.txt", "not a bi-filtration\n");
    let bin = env!("CARGO_BIN_EXE_mpk");
    let ok = Command::new(bin).args(["validate", s(&good)]).output().unwrap();
    assert_eq!(ok.status.code(), Some(EXIT_OK));
    let status = Command::new(bin).args(["validate", s(&bad)]).output().unwrap();
    assert_eq!(status.status.code(), Some(EXIT_INPUT));
    assert!(!status.stderr.is_empty());
}
