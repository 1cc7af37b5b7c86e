//! Config-driven runs: synthetic data generation and cross-validated
//! evaluation over several feature spaces and classifiers.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use cdtkit::classify::{cross_validate, CvConfig, CvReport, Folds, Method, ParamGrid, Params};
use cdtkit::datagen::{
    self, cdt_dataset, raw_dataset, sample_class, two_box_spec, ClassId, Confound, ParamRange,
    TextureConfig,
};
use cdtkit::density::DEFAULT_EPSILON_FLOOR;
use cdtkit::features::{self, Histogrammer};
use cdtkit::Reference;
use serde::{Deserialize, Serialize};

use crate::commands::{density_domain, transform_rows, CdtSettings, Context};
use crate::error::{CliError, Result};
use crate::io::{self, Layout, SCHEMA_VERSION};

trait Versioned {
    fn schema_version(&self) -> u32;
}

impl Versioned for GenerateConfig {
    fn schema_version(&self) -> u32 {
        self.schema_version
    }
}

impl Versioned for EvaluateConfig {
    fn schema_version(&self) -> u32 {
        self.schema_version
    }
}

fn load_config<T: for<'de> Deserialize<'de> + Versioned>(path: &Path) -> Result<T> {
    io::require_exists(path)?;
    let config: T = io::read_json(path)?;
    io::check_schema(path, config.schema_version())?;
    Ok(config)
}

fn resolve_seed(path: &Path, config: Option<u64>, ctx: &Context) -> Result<u64> {
    ctx.seed
        .or(config)
        .ok_or_else(|| CliError::io(path, "a seed is required (config \"seed\" or --seed)"))
}

/// Relative paths inside a config are taken from the config's directory.
fn relative_to(config: &Path, p: &Path) -> PathBuf {
    match config.parent() {
        Some(dir) if p.is_relative() => dir.join(p),
        _ => p.to_path_buf(),
    }
}

fn output_dir(ctx: &Context, config_path: &Path, configured: &Option<PathBuf>) -> PathBuf {
    match (&ctx.output_dir, configured) {
        (Some(d), _) => d.clone(),
        (None, Some(d)) => relative_to(config_path, d),
        (None, None) => PathBuf::from("."),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Unimodal and bimodal prototypes under random brightness and contrast.
    Texture,
    /// Box mothers under lattice-valued affine confounds.
    TwoBox,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateConfig {
    pub schema_version: u32,
    pub preset: Preset,
    pub seed: Option<u64>,
    pub samples_per_class: Option<usize>,
    pub cdt_points: Option<usize>,
    pub epsilon_floor: Option<f64>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct Provenance {
    schema_version: u32,
    preset: Preset,
    seed: u64,
    samples_per_class: usize,
    cdt_points: usize,
    epsilon_floor: f64,
    translation_range: [f64; 2],
    scaling_range: [f64; 2],
    translation_levels: Option<usize>,
    scaling_levels: Option<usize>,
    labels: BTreeMap<i64, &'static str>,
    files: Vec<String>,
}

pub fn generate(ctx: &Context, config_path: &Path) -> Result<()> {
    let cfg: GenerateConfig = load_config(config_path)?;
    let seed = resolve_seed(config_path, cfg.seed, ctx)?;
    let points = cfg.cdt_points.unwrap_or(256);
    let floor = cfg.epsilon_floor.unwrap_or(DEFAULT_EPSILON_FLOOR);

    let (raw, cdt, params, raw_domain, mu, a, names, per_class) = match cfg.preset {
        Preset::Texture => {
            let tc = TextureConfig {
                seed,
                samples_per_class: cfg.samples_per_class.unwrap_or(64),
                cdt_points: points,
                epsilon_floor: floor,
                ..TextureConfig::default()
            };
            let data = datagen::texture_simulation(&tc)?;
            let (proto, _) = datagen::texture_prototypes()?;
            let d = proto.domain();
            (
                data.raw,
                data.cdt,
                data.params,
                [d.0, d.1],
                tc.mu,
                tc.a,
                ["unimodal", "bimodal"],
                tc.samples_per_class,
            )
        }
        Preset::TwoBox => {
            let n = cfg.samples_per_class.unwrap_or(20);
            let mut spec = two_box_spec(n, seed)?;
            spec.epsilon_floor = floor;
            let p = sample_class(&spec, ClassId::P)?;
            let q = sample_class(&spec, ClassId::Q)?;
            let reference = Reference::uniform(points)?;
            let params = p
                .iter()
                .chain(&q)
                .map(|s| match s.confound {
                    Confound::Affine { mu, a } => (mu, a),
                    Confound::Map(_) => (f64::NAN, f64::NAN),
                })
                .collect();
            let d = spec.mother_p.domain();
            (
                raw_dataset(&p, &q)?,
                cdt_dataset(&p, &q, &reference)?,
                params,
                [d.0, d.1],
                spec.family.mu,
                spec.family.a,
                ["one box", "two boxes"],
                n,
            )
        }
    };

    let dir = output_dir(ctx, config_path, &cfg.output_dir);
    let reference = Reference::uniform(points)?;
    let raw_path = dir.join("raw.csv");
    let cdt_path = dir.join("cdt.csv");
    let params_path = dir.join("params.csv");
    let raw_layout = Layout::Density {
        domain: raw_domain,
        bins: raw.dim(),
    };
    let cdt_layout = Layout::Cdt {
        reference_source: "uniform".into(),
        reference: reference.density().clone(),
        points,
        epsilon_floor: floor,
        signal_domain: raw_domain,
        signal_bins: raw.dim(),
    };
    let mut params_csv = String::from("index,label,mu,a\n");
    for (i, (m, s)) in params.iter().enumerate() {
        let _ = writeln!(params_csv, "{i},{},{m:?},{s:?}", raw.labels()[i]);
    }
    let range = |r: &ParamRange| [r.lo, r.hi];
    let provenance = Provenance {
        schema_version: SCHEMA_VERSION,
        preset: cfg.preset,
        seed,
        samples_per_class: per_class,
        cdt_points: points,
        epsilon_floor: floor,
        translation_range: range(&mu),
        scaling_range: range(&a),
        translation_levels: mu.levels,
        scaling_levels: a.levels,
        labels: BTreeMap::from([(0, names[0]), (1, names[1])]),
        files: ["raw.csv", "cdt.csv", "params.csv"].map(String::from).to_vec(),
    };

    io::write_with_sidecar(&raw_path, &io::dataset_bytes(&raw), raw_layout)?;
    io::write_with_sidecar(&cdt_path, &io::dataset_bytes(&cdt), cdt_layout)?;
    io::write_atomic(&params_path, params_csv.as_bytes())?;
    io::write_json(&dir.join("provenance.json"), &provenance)?;
    ctx.info(format!(
        "generated {} samples ({:?}, seed {seed}) in {}",
        raw.len(),
        cfg.preset,
        dir.display()
    ));
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputFormat {
    /// Fixed-width `label,f1,...` rows.
    Dataset,
    /// Variable-length scalar signals.
    Signals,
    /// Variable-length `(x, y, z)` signals, reduced to energy.
    TriAxis,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistogramSpec {
    pub bins: usize,
    pub range: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CdtSpec {
    pub grid: usize,
    #[serde(default = "uniform")]
    pub reference: String,
    #[serde(default = "default_floor")]
    pub epsilon_floor: f64,
}

fn uniform() -> String {
    "uniform".into()
}

fn default_floor() -> f64 {
    DEFAULT_EPSILON_FLOOR
}

/// One feature space: an input file and the pipeline turning it into
/// fixed-width rows. Signals are zero-padded unless histogrammed.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceSpec {
    pub name: String,
    pub path: PathBuf,
    #[serde(default = "dataset_format")]
    pub format: InputFormat,
    pub histogram: Option<HistogramSpec>,
    /// Density domain for the transform when the input has no sidecar.
    pub domain: Option<[f64; 2]>,
    pub cdt: Option<CdtSpec>,
}

fn dataset_format() -> InputFormat {
    InputFormat::Dataset
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum FoldsSpec {
    Count(usize),
    Named(String),
}

impl FoldsSpec {
    fn resolve(&self) -> Result<Folds> {
        match self {
            FoldsSpec::Count(k) => Ok(Folds::K(*k)),
            FoldsSpec::Named(s) => Ok(s.parse::<Folds>()?),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateConfig {
    pub schema_version: u32,
    pub seed: Option<u64>,
    pub spaces: Vec<SpaceSpec>,
    pub classifiers: Vec<Method>,
    pub folds: FoldsSpec,
    #[serde(default = "five")]
    pub inner_folds: usize,
    /// Per-classifier parameter grids; missing entries use the defaults.
    #[serde(default)]
    pub grids: BTreeMap<Method, ParamGrid>,
    /// Fixed parameter overrides applied before the sweep.
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    pub output_dir: Option<PathBuf>,
}

fn five() -> usize {
    5
}

#[derive(Debug, Serialize)]
struct Cell {
    space: String,
    classifier: Method,
    report: CvReport,
}

#[derive(Debug, Serialize)]
struct EvaluationReport {
    schema_version: u32,
    seed: u64,
    folds: String,
    results: Vec<Cell>,
}

fn build_space(config_path: &Path, space: &SpaceSpec) -> Result<cdtkit::classify::LabeledDataset> {
    let path = relative_to(config_path, &space.path);
    let ctx_err = |e: CliError| e.context(format!("space '{}'", space.name));
    let wrap = |e: features::FeaturesError| CliError::from(e).context(path.display());

    let signals = match space.format {
        InputFormat::Dataset => None,
        InputFormat::Signals => Some(features::load_signals_csv(&path).map_err(wrap)?),
        InputFormat::TriAxis => Some(features::load_tri_axis_csv(&path).map_err(wrap)?.energy()),
    };
    let (data, domain) = match (signals, &space.histogram) {
        (Some(set), Some(h)) => {
            let range = h
                .range
                .map(|r| features::BinRange::new(r[0], r[1]))
                .transpose()
                .map_err(CliError::from)?;
            let hist = Histogrammer::fit(&set, h.bins, range, DEFAULT_EPSILON_FLOOR)?;
            (hist.table(&set)?, Some([hist.range.lo, hist.range.hi]))
        }
        (Some(set), None) => (features::zero_pad(&set), space.domain),
        (None, Some(_)) => {
            return Err(ctx_err(CliError::input(
                "histograms need format \"signals\" or \"tri-axis\"",
            )))
        }
        (None, None) => (io::load_table(&path)?, None),
    };
    let data = match &space.cdt {
        None => data,
        Some(c) => {
            let domain = match domain {
                Some(d) => d,
                None => density_domain(&path, space.domain, data.max_len())?,
            };
            let reference = if c.reference == "uniform" {
                c.reference.clone()
            } else {
                relative_to(config_path, Path::new(&c.reference))
                    .to_string_lossy()
                    .into_owned()
            };
            let settings = CdtSettings {
                points: c.grid,
                reference: &reference,
                epsilon_floor: c.epsilon_floor,
            };
            transform_rows(&data, domain, &settings).map_err(ctx_err)?.0
        }
    };
    data.to_dataset().map_err(|e| CliError::from(e).context(path.display()))
}

fn summary_table(cells: &[Cell], spaces: &[SpaceSpec], methods: &[Method]) -> String {
    let width = spaces.iter().map(|s| s.name.len()).max().unwrap_or(5).max(5);
    let mut out = format!("{:<width$}", "space");
    for m in methods {
        let _ = write!(out, "  {:>8}", m.name());
    }
    out.push('\n');
    for s in spaces {
        let _ = write!(out, "{:<width$}", s.name);
        for m in methods {
            let err = cells
                .iter()
                .find(|c| c.space == s.name && c.classifier == *m)
                .map_or(f64::NAN, |c| c.report.mean_test_error);
            let _ = write!(out, "  {:>8.4}", err);
        }
        out.push('\n');
    }
    out
}

pub fn evaluate(ctx: &Context, config_path: &Path) -> Result<()> {
    let cfg: EvaluateConfig = load_config(config_path)?;
    let seed = resolve_seed(config_path, cfg.seed, ctx)?;
    if cfg.spaces.is_empty() || cfg.classifiers.is_empty() {
        return Err(CliError::io(config_path, "need at least one space and one classifier"));
    }
    for s in &cfg.spaces {
        io::require_exists(&relative_to(config_path, &s.path))?;
        if let Some(c) = &s.cdt {
            if c.reference != "uniform" {
                io::require_exists(&relative_to(config_path, Path::new(&c.reference)))?;
            }
        }
    }
    let folds = cfg.folds.resolve()?;
    let base = Params::default().apply(&cfg.params)?;

    let mut cells = Vec::new();
    for space in &cfg.spaces {
        let data = build_space(config_path, space)?;
        for &method in &cfg.classifiers {
            let mut cv = CvConfig::new(method, folds, seed);
            cv.inner_folds = cfg.inner_folds;
            cv.base = base;
            if let Some(g) = cfg.grids.get(&method) {
                cv.grid = g.clone();
            }
            let report = cross_validate(&data, &cv)
                .map_err(|e| CliError::from(e).context(format!("{} / {method}", space.name)))?;
            cells.push(Cell {
                space: space.name.clone(),
                classifier: method,
                report,
            });
        }
    }

    let folds_label = match folds {
        Folds::K(k) => k.to_string(),
        Folds::LeaveOneOut => "loo".into(),
    };
    let mut table = format!("mean test error ({folds_label}-fold, seed {seed})\n");
    table += &summary_table(&cells, &cfg.spaces, &cfg.classifiers);
    for c in &cells {
        let _ = write!(table, "\n[{}]\n{}", c.space, c.report.to_table());
    }
    let mut csv = String::from("space,classifier,fold,train_error,test_error,params\n");
    for c in &cells {
        for line in c.report.to_csv().lines().skip(1) {
            let _ = writeln!(csv, "{},{},{line}", c.space, c.classifier);
        }
    }
    let report = EvaluationReport {
        schema_version: SCHEMA_VERSION,
        seed,
        folds: folds_label,
        results: cells,
    };

    let dir = output_dir(ctx, config_path, &cfg.output_dir);
    io::write_atomic(&dir.join("report.txt"), table.as_bytes())?;
    io::write_atomic(&dir.join("report.csv"), csv.as_bytes())?;
    io::write_json(&dir.join("report.json"), &report)?;
    ctx.info(table.trim_end());
    Ok(())
}
