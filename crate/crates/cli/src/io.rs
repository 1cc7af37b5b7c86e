//! File plumbing: atomic writes, sidecar metadata and reference files.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use cdtkit::classify::LabeledDataset;
use cdtkit::density::DiscreteDensity;
use cdtkit::features::{self, RawSignalSet};
use cdtkit::Reference;
use serde::{Deserialize, Serialize};
use tempfile::NamedTempFile;

use crate::error::{CliError, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Writes through a temporary file in the target directory and renames it
/// into place, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut tmp = NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable value");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::io(path, e))
}

pub fn require_exists(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::io(path, "no such file"))
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = OsString::from(path.as_os_str());
    s.push(".meta.json");
    PathBuf::from(s)
}

/// What the rows of a data file are sampled on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Layout {
    /// Density values at the centers of `bins` equal cells over `domain`.
    Density { domain: [f64; 2], bins: usize },
    /// Transform values against `reference` at `points` grid midpoints; the
    /// source densities lived on `signal_domain` with `signal_bins` cells.
    Cdt {
        reference_source: String,
        reference: DiscreteDensity,
        points: usize,
        epsilon_floor: f64,
        signal_domain: [f64; 2],
        signal_bins: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub schema_version: u32,
    #[serde(flatten)]
    pub layout: Layout,
}

impl Sidecar {
    pub fn new(layout: Layout) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            layout,
        }
    }
}

pub fn read_sidecar(data: &Path) -> Result<Option<Sidecar>> {
    let path = sidecar_path(data);
    if !path.exists() {
        return Ok(None);
    }
    let meta: Sidecar = read_json(&path)?;
    check_schema(&path, meta.schema_version)?;
    Ok(Some(meta))
}

pub fn check_schema(path: &Path, version: u32) -> Result<()> {
    if version == SCHEMA_VERSION {
        Ok(())
    } else {
        Err(CliError::io(
            path,
            format!("unsupported schema_version {version} (expected {SCHEMA_VERSION})"),
        ))
    }
}

pub fn load_dataset(path: &Path) -> Result<LabeledDataset> {
    features::load_dataset_csv(path).map_err(|e| CliError::from(e).context(path.display()))
}

/// Fixed-width rows without the two-class requirement of a dataset.
pub fn load_table(path: &Path) -> Result<RawSignalSet> {
    features::load_table_csv(path).map_err(|e| CliError::from(e).context(path.display()))
}

pub fn dataset_bytes(set: &LabeledDataset) -> Vec<u8> {
    let mut buf = Vec::new();
    features::write_dataset(&mut buf, set).expect("in-memory write");
    buf
}

pub fn table_bytes(set: &RawSignalSet) -> Vec<u8> {
    let mut buf = Vec::new();
    features::write_signals(&mut buf, set).expect("in-memory write");
    buf
}

/// Data file plus its sidecar.
pub fn write_with_sidecar(path: &Path, bytes: &[u8], layout: Layout) -> Result<()> {
    write_atomic(path, bytes)?;
    write_json(&sidecar_path(path), &Sidecar::new(layout))
}

/// `uniform` is the unit interval; anything else names a CSV with header
/// `x,density` whose `x` column holds equally spaced cell centers.
pub fn load_reference(spec: &str, points: usize) -> Result<(Arc<Reference>, DiscreteDensity)> {
    if spec == "uniform" {
        let r = Reference::uniform(points)?;
        let d = r.density().clone();
        return Ok((r, d));
    }
    let path = Path::new(spec);
    let mut rdr = csv::Reader::from_path(path).map_err(|e| CliError::io(path, e))?;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::io(path, e))?;
        let cell = |k: usize| -> Result<f64> {
            rec.get(k)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| CliError::io(path, format!("line {}: expected x,density", i + 2)))
        };
        xs.push(cell(0)?);
        ys.push(cell(1)?);
    }
    if xs.len() < 2 {
        return Err(CliError::io(path, "reference needs at least 2 rows"));
    }
    let h = xs[1] - xs[0];
    let uneven = xs
        .windows(2)
        .any(|w| ((w[1] - w[0]) - h).abs() > 1e-9 * h.abs().max(1.0));
    if h.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) || uneven {
        return Err(CliError::io(path, "x column must be equally spaced and increasing"));
    }
    let density = DiscreteDensity::from_samples(&ys, xs[0], h, 0.0)?;
    Ok((Reference::new(density.clone(), points)?, density))
}

/// Parses `lo,hi` with `lo < hi`.
pub fn parse_interval(s: &str) -> std::result::Result<[f64; 2], String> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| format!("expected LO,HI, got '{s}'"))?;
    let lo: f64 = a.trim().parse().map_err(|_| format!("bad number '{a}'"))?;
    let hi: f64 = b.trim().parse().map_err(|_| format!("bad number '{b}'"))?;
    if lo.is_finite() && hi.is_finite() && lo < hi {
        Ok([lo, hi])
    } else {
        Err(format!("interval [{lo}, {hi}] is empty"))
    }
}
