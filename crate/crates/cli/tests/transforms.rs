mod common;

use std::fs;

use common::*;
use statrs::distribution::{ContinuousCDF, Normal};

#[test]
fn uniform_rows_map_to_zero() {
    let dir = tempfile::tempdir().unwrap();
    write_rows(&dir.path().join("u.csv"), &[(0, vec![1.0; 50]), (1, vec![4.0; 50])]);
    ok(cdtkit(dir.path(), &["transform", "u.csv", "t.csv", "--grid", "64", "-q"]));
    let rows = read_rows(&dir.path().join("t.csv"));
    assert_eq!(rows.len(), 2);
    for (_, v) in rows {
        assert_eq!(v.len(), 64);
        assert!(v.iter().all(|x| x.abs() < 1e-12), "{v:?}");
    }
    let meta = fs::read_to_string(dir.path().join("t.csv.meta.json")).unwrap();
    assert!(meta.contains("\"kind\": \"cdt\""));
    assert!(meta.contains("\"points\": 64"));
}

fn normal_fixture(dir: &std::path::Path) {
    let xs = centers(-5.0, 5.0, 1000);
    let row: Vec<f64> = xs.iter().map(|&x| gaussian(x, 0.0, 1.0)).collect();
    write_rows(&dir.join("normal.csv"), &[(0, row)]);
}

#[test]
fn normal_row_matches_golden_and_analytic_form() {
    let dir = tempfile::tempdir().unwrap();
    normal_fixture(dir.path());
    ok(cdtkit(
        dir.path(),
        &["transform", "normal.csv", "t.csv", "--grid", "1024", "--domain", "-5,5", "-q"],
    ));
    let got = &read_rows(&dir.path().join("t.csv"))[0].1;

    let golden_path = golden_dir().join("normal_m1024.csv");
    let golden = &read_rows(&golden_path)[0].1;
    assert_eq!(got.len(), golden.len());
    let worst = got
        .iter()
        .zip(golden)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(worst <= 1e-6, "golden deviation {worst:e}");

    let phi = Normal::new(0.0, 1.0).unwrap();
    for (k, v) in got.iter().enumerate() {
        let x = (k as f64 + 0.5) / 1024.0;
        if (0.01..=0.99).contains(&x) {
            let expected = phi.inverse_cdf(x) - x;
            assert!((v - expected).abs() <= 1e-2, "x = {x}: {v} vs {expected}");
        }
    }
}

#[test]
fn missing_input_exits_2_and_names_path() {
    let dir = tempfile::tempdir().unwrap();
    let run = cdtkit(dir.path(), &["transform", "nope.csv", "t.csv"]);
    assert_eq!(run.code, 2);
    assert!(run.stderr.contains("nope.csv"), "{}", run.stderr);
    assert!(!dir.path().join("t.csv").exists());
}

#[test]
fn parse_errors_exit_2_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.csv"), "0,1,2\n1,2,oops\n").unwrap();
    let run = cdtkit(dir.path(), &["transform", "bad.csv", "t.csv"]);
    assert_eq!(run.code, 2);
    assert!(run.stderr.contains("line 2"), "{}", run.stderr);
}

#[test]
fn numeric_failures_exit_3_without_output() {
    let dir = tempfile::tempdir().unwrap();
    write_rows(&dir.path().join("z.csv"), &[(0, vec![1.0; 8]), (1, vec![0.0; 8])]);
    let run = cdtkit(
        dir.path(),
        &["transform", "z.csv", "t.csv", "--epsilon-floor", "0"],
    );
    assert_eq!(run.code, 3, "{}", run.stderr);
    assert!(run.stderr.contains("line 2"), "{}", run.stderr);
    assert!(!dir.path().join("t.csv").exists());
}

#[test]
fn round_trip_recovers_densities() {
    let dir = tempfile::tempdir().unwrap();
    let xs = centers(0.0, 1.0, 1024);
    let rows: Vec<(i64, Vec<f64>)> = [(0.3, 0.1), (0.6, 0.12)]
        .iter()
        .enumerate()
        .map(|(i, &(m, s))| {
            (i as i64, xs.iter().map(|&x| 0.2 + gaussian(x, m, s)).collect())
        })
        .collect();
    write_rows(&dir.path().join("d.csv"), &rows);
    ok(cdtkit(dir.path(), &["transform", "d.csv", "t.csv", "--grid", "1024", "-q"]));
    ok(cdtkit(dir.path(), &["inverse", "t.csv", "back.csv", "-q"]));
    let back = read_rows(&dir.path().join("back.csv"));
    for ((_, orig), (_, rec)) in rows.iter().zip(&back) {
        let total: f64 = orig.iter().sum::<f64>() / 1024.0;
        let l1: f64 = orig
            .iter()
            .zip(rec)
            .map(|(a, b)| (a / total - b).abs() / 1024.0)
            .sum();
        assert!(l1 <= 1e-3, "L1 {l1:e}");
    }
}

#[test]
fn zero_transform_inverts_to_uniform() {
    let dir = tempfile::tempdir().unwrap();
    write_rows(&dir.path().join("u.csv"), &[(0, vec![1.0; 32]), (1, vec![1.0; 32])]);
    ok(cdtkit(dir.path(), &["transform", "u.csv", "t.csv", "--grid", "32", "-q"]));
    write_rows(&dir.path().join("t.csv"), &[(0, vec![0.0; 32]), (1, vec![0.0; 32])]);
    ok(cdtkit(dir.path(), &["inverse", "t.csv", "back.csv", "--grid", "16", "-q"]));
    for (_, row) in read_rows(&dir.path().join("back.csv")) {
        assert_eq!(row.len(), 16);
        assert!(row.iter().all(|v| (v - 1.0).abs() < 1e-9), "{row:?}");
    }
}

#[test]
fn non_monotone_rows_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    write_rows(&dir.path().join("u.csv"), &[(0, vec![1.0; 16]), (1, vec![1.0; 16])]);
    ok(cdtkit(dir.path(), &["transform", "u.csv", "t.csv", "--grid", "16", "-q"]));
    let mut bad = vec![0.0; 16];
    bad[8] = -0.5;
    write_rows(&dir.path().join("t.csv"), &[(0, vec![0.0; 16]), (1, bad)]);
    let run = cdtkit(dir.path(), &["inverse", "t.csv", "back.csv"]);
    assert_eq!(run.code, 3, "{}", run.stderr);
    assert!(run.stderr.contains("decreases"), "{}", run.stderr);
    assert!(run.stderr.contains("line 2"), "{}", run.stderr);
}

#[test]
fn inverse_requires_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    write_rows(&dir.path().join("t.csv"), &[(0, vec![0.0; 4]), (1, vec![0.0; 4])]);
    let run = cdtkit(dir.path(), &["inverse", "t.csv", "back.csv"]);
    assert_eq!(run.code, 2);
    assert!(run.stderr.contains("t.csv.meta.json"), "{}", run.stderr);
}

#[test]
fn reference_file_and_output_dir() {
    let dir = tempfile::tempdir().unwrap();
    let xs = centers(-1.0, 1.0, 40);
    let mut text = String::from("x,density\n");
    for x in &xs {
        text.push_str(&format!("{x},{}\n", 1.0 + 0.5 * x));
    }
    fs::write(dir.path().join("ref.csv"), text).unwrap();
    write_rows(&dir.path().join("d.csv"), &[(0, vec![1.0; 20]), (1, vec![2.0; 20])]);
    ok(cdtkit(
        dir.path(),
        &["transform", "d.csv", "t.csv", "--reference", "ref.csv", "--grid", "50", "--output-dir", "out", "-q"],
    ));
    let rows = read_rows(&dir.path().join("out/t.csv"));
    assert_eq!(rows[0].1.len(), 50);
    let meta = fs::read_to_string(dir.path().join("out/t.csv.meta.json")).unwrap();
    assert!(meta.contains("ref.csv"));
}

#[test]
fn thread_cap_is_honored_and_validated() {
    let dir = tempfile::tempdir().unwrap();
    write_rows(&dir.path().join("u.csv"), &[(0, vec![1.0; 8]), (1, vec![2.0; 8])]);
    let args = ["transform", "u.csv", "t.csv", "-q"];
    ok(cdtkit_env(dir.path(), &args, &[("CDTKIT_THREADS", "1")]));
    let run = cdtkit_env(dir.path(), &args, &[("CDTKIT_THREADS", "zero")]);
    assert_eq!(run.code, 2);
    assert!(run.stderr.contains("CDTKIT_THREADS"));
}
