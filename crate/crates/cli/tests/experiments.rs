mod common;

use std::fs;
use std::path::Path;

use cdtkit::classify::check_linear_separability;
use common::*;

fn texture_config(dir: &Path, seed: Option<u64>) {
    let seed = seed.map_or(String::new(), |s| format!(r#""seed": {s},"#));
    fs::write(
        dir.join("gen.json"),
        format!(r#"{{"schema_version": 1, {seed} "preset": "texture", "output_dir": "data"}}"#),
    )
    .unwrap();
}

#[test]
fn generate_is_reproducible_and_records_provenance() {
    let dir = tempfile::tempdir().unwrap();
    texture_config(dir.path(), Some(11));
    ok(cdtkit(dir.path(), &["generate", "gen.json", "-q"]));
    let names = ["raw.csv", "cdt.csv", "params.csv", "provenance.json", "cdt.csv.meta.json"];
    let first: Vec<Vec<u8>> = names
        .iter()
        .map(|n| fs::read(dir.path().join("data").join(n)).unwrap())
        .collect();
    ok(cdtkit(dir.path(), &["generate", "gen.json", "-q"]));
    for (n, bytes) in names.iter().zip(&first) {
        assert_eq!(&fs::read(dir.path().join("data").join(n)).unwrap(), bytes, "{n}");
    }

    let prov: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("data/provenance.json")).unwrap()).unwrap();
    assert_eq!(prov["translation_range"], serde_json::json!([0.0, 0.5]));
    assert_eq!(prov["scaling_range"], serde_json::json!([0.6, 1.67]));
    assert_eq!(prov["seed"], 11);
    assert_eq!(read_rows(&dir.path().join("data/raw.csv")).len(), 128);
}

#[test]
fn generate_without_seed_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    texture_config(dir.path(), None);
    let run = cdtkit(dir.path(), &["generate", "gen.json"]);
    assert_eq!(run.code, 2);
    assert!(run.stderr.contains("seed"), "{}", run.stderr);
    assert!(!dir.path().join("data").exists());
    ok(cdtkit(dir.path(), &["generate", "gen.json", "--seed", "5", "-q"]));
}

#[test]
fn config_schema_is_checked() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("gen.json"),
        r#"{"schema_version": 2, "seed": 1, "preset": "texture"}"#,
    )
    .unwrap();
    let run = cdtkit(dir.path(), &["generate", "gen.json"]);
    assert_eq!(run.code, 2);
    assert!(run.stderr.contains("schema_version"));
    let run = cdtkit(dir.path(), &["generate", "missing.json"]);
    assert_eq!(run.code, 2);
    assert!(run.stderr.contains("missing.json"));
}

#[test]
fn texture_preset_table() {
    let dir = tempfile::tempdir().unwrap();
    texture_config(dir.path(), Some(2024));
    ok(cdtkit(dir.path(), &["generate", "gen.json", "-q"]));
    fs::write(
        dir.path().join("eval.json"),
        r#"{"schema_version": 1, "seed": 7, "folds": 5, "output_dir": "report",
            "classifiers": ["lda", "plda", "svm"],
            "spaces": [{"name": "raw", "path": "data/raw.csv"},
                       {"name": "cdt", "path": "data/raw.csv", "cdt": {"grid": 256}}]}"#,
    )
    .unwrap();
    let run = ok(cdtkit(dir.path(), &["evaluate", "eval.json"]));
    assert!(run.stdout.contains("mean test error"));

    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("report/report.json")).unwrap()).unwrap();
    let results = report["results"].as_array().unwrap();
    assert_eq!(results.len(), 6);
    for r in results {
        let err = r["report"]["mean_test_error"].as_f64().unwrap();
        if r["space"] == "cdt" {
            assert!(err <= 0.03, "{} {err}", r["classifier"]);
        } else {
            assert!(err >= 0.2, "{} {err}", r["classifier"]);
        }
    }
    let csv = fs::read_to_string(dir.path().join("report/report.csv")).unwrap();
    assert!(csv.starts_with("space,classifier,fold,train_error,test_error,params\n"));
    assert_eq!(csv.lines().count(), 1 + 6 * 5);
    assert!(fs::read_to_string(dir.path().join("report/report.txt")).unwrap().contains("kappa"));
}

fn small_set(dir: &Path) {
    let xs = centers(0.0, 1.0, 32);
    let rows: Vec<(i64, Vec<f64>)> = (0..20)
        .map(|i| {
            let label = (i % 2) as i64;
            let m = 0.2 + 0.03 * (i / 2) as f64;
            let s = if label == 0 { 0.05 } else { 0.1 };
            (label, xs.iter().map(|&x| gaussian(x, m, s) + 0.01).collect())
        })
        .collect();
    write_rows(&dir.join("small.csv"), &rows);
}

#[test]
fn leave_one_out_runs_every_fold_and_repeats_exactly() {
    let dir = tempfile::tempdir().unwrap();
    small_set(dir.path());
    fs::write(
        dir.path().join("eval.json"),
        r#"{"schema_version": 1, "seed": 3, "folds": "loo", "classifiers": ["lda"],
            "spaces": [{"name": "cdt", "path": "small.csv", "cdt": {"grid": 64}}]}"#,
    )
    .unwrap();
    ok(cdtkit(dir.path(), &["evaluate", "eval.json", "-q", "--output-dir", "a"]));
    ok(cdtkit(dir.path(), &["evaluate", "eval.json", "-q", "--output-dir", "b"]));
    let a = fs::read(dir.path().join("a/report.json")).unwrap();
    assert_eq!(a, fs::read(dir.path().join("b/report.json")).unwrap());
    let report: serde_json::Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(report["results"][0]["report"]["folds"].as_array().unwrap().len(), 20);
    assert_eq!(report["folds"], "loo");
}

#[test]
fn evaluate_validates_paths_up_front() {
    let dir = tempfile::tempdir().unwrap();
    small_set(dir.path());
    fs::write(
        dir.path().join("eval.json"),
        r#"{"schema_version": 1, "seed": 3, "folds": 2, "classifiers": ["lda"],
            "spaces": [{"name": "a", "path": "small.csv"}, {"name": "b", "path": "gone.csv"}]}"#,
    )
    .unwrap();
    let run = cdtkit(dir.path(), &["evaluate", "eval.json"]);
    assert_eq!(run.code, 2);
    assert!(run.stderr.contains("gone.csv"));
    assert!(!dir.path().join("report.json").exists());
}

fn projection_coords(path: &Path) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut p = Vec::new();
    let mut q = Vec::new();
    for line in text.lines().skip(1) {
        let cells: Vec<&str> = line.split(',').collect();
        let xy = vec![cells[3].parse().unwrap(), cells[4].parse().unwrap()];
        if cells[1] == "0" {
            p.push(xy);
        } else {
            q.push(xy);
        }
    }
    (p, q)
}

#[test]
fn projection_of_separable_features() {
    let dir = tempfile::tempdir().unwrap();
    texture_config(dir.path(), Some(2024));
    ok(cdtkit(dir.path(), &["generate", "gen.json", "-q"]));
    let args = ["project", "data/cdt.csv", "--train-frac", "0.5", "--seed", "9", "-q"];
    ok(cdtkit(dir.path(), &args));
    let svg = fs::read_to_string(dir.path().join("projection.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
    assert!(svg.contains(r#"class="class-0""#) && svg.contains(r#"class="class-1""#));
    let fills: std::collections::BTreeSet<&str> = svg
        .match_indices("<g class=")
        .map(|(i, _)| {
            let rest = &svg[i..];
            let start = rest.find("fill=\"").unwrap() + 6;
            &rest[start..start + 7]
        })
        .collect();
    assert_eq!(fills.len(), 2);

    let (p, q) = projection_coords(&dir.path().join("projection.csv"));
    assert_eq!(p.len() + q.len(), 128);
    assert!(check_linear_separability(&p, &q).unwrap().is_separable());

    let first = fs::read(dir.path().join("projection.csv")).unwrap();
    ok(cdtkit(dir.path(), &args));
    assert_eq!(fs::read(dir.path().join("projection.csv")).unwrap(), first);
}

#[test]
fn projection_needs_two_classes() {
    let dir = tempfile::tempdir().unwrap();
    write_rows(&dir.path().join("one.csv"), &[(4, vec![1.0, 2.0]), (4, vec![2.0, 1.0])]);
    let run = cdtkit(dir.path(), &["project", "one.csv"]);
    assert_eq!(run.code, 2);
    assert!(run.stderr.contains("class"), "{}", run.stderr);
}
