#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub struct Run {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

pub fn cdtkit_env(dir: &Path, args: &[&str], env: &[(&str, &str)]) -> Run {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_cdtkit"));
    cmd.current_dir(dir).args(args).env_remove("CDTKIT_THREADS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    let Output {
        status,
        stdout,
        stderr,
    } = cmd.output().expect("binary runs");
    Run {
        code: status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&stdout).into_owned(),
        stderr: String::from_utf8_lossy(&stderr).into_owned(),
    }
}

pub fn cdtkit(dir: &Path, args: &[&str]) -> Run {
    cdtkit_env(dir, args, &[])
}

#[track_caller]
pub fn ok(run: Run) -> Run {
    assert_eq!(run.code, 0, "stderr: {}", run.stderr);
    run
}

pub fn write_rows(path: &Path, rows: &[(i64, Vec<f64>)]) {
    let mut text = String::new();
    for (label, values) in rows {
        text.push_str(&label.to_string());
        for v in values {
            text.push_str(&format!(",{v:?}"));
        }
        text.push('\n');
    }
    fs::write(path, text).unwrap();
}

pub fn read_rows(path: &Path) -> Vec<(i64, Vec<f64>)> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|line| {
            let mut cells = line.split(',');
            let label = cells.next().unwrap().parse().unwrap();
            (label, cells.map(|c| c.parse().unwrap()).collect())
        })
        .collect()
}

pub fn gaussian(x: f64, mean: f64, sd: f64) -> f64 {
    (-0.5 * ((x - mean) / sd).powi(2)).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
}

/// Cell centers of `n` equal cells on `[lo, hi]`.
pub fn centers(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let h = (hi - lo) / n as f64;
    (0..n).map(|i| lo + (i as f64 + 0.5) * h).collect()
}

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}
