use std::path::{Path, PathBuf};
use std::sync::Arc;

use cdtkit::cdt::{self, CdtSignal, OutputGrid};
use cdtkit::classify::{
    cross_validate, project_2d, CvConfig, Folds, LabeledDataset, Method, Params,
};
use cdtkit::density::DiscreteDensity;
use cdtkit::features::{self, BinRange, Histogrammer, RawSignalSet};
use cdtkit::Reference;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{CliError, Result};
use crate::io::{self, Layout};
use crate::svg;

/// Settings shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct Context {
    pub seed: Option<u64>,
    pub quiet: bool,
    pub output_dir: Option<PathBuf>,
}

impl Context {
    /// Relative output paths land in `--output-dir` when given.
    pub fn out(&self, path: &Path) -> PathBuf {
        match &self.output_dir {
            Some(dir) if path.is_relative() => dir.join(path),
            _ => path.to_path_buf(),
        }
    }

    pub fn info(&self, msg: impl std::fmt::Display) {
        if !self.quiet {
            println!("{msg}");
        }
    }
}

/// Applies `f` to every row in parallel, keeping input order and tagging
/// failures with the 1-based line number.
fn map_rows<F>(data: &RawSignalSet, f: F) -> Result<RawSignalSet>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    let rows = data
        .signals()
        .par_iter()
        .enumerate()
        .map(|(i, row)| f(row).map_err(|e| e.context(format!("line {}", i + 1))))
        .collect::<Result<Vec<_>>>()?;
    Ok(RawSignalSet::new(rows, data.labels().to_vec())?)
}

fn width(data: &RawSignalSet) -> usize {
    data.signals().first().map_or(0, Vec::len)
}

/// Domain of density rows: explicit, else the input's sidecar, else `[0, 1]`.
pub fn density_domain(input: &Path, explicit: Option<[f64; 2]>, width: usize) -> Result<[f64; 2]> {
    if let Some(d) = explicit {
        return Ok(d);
    }
    match io::read_sidecar(input)? {
        None => Ok([0.0, 1.0]),
        Some(meta) => match meta.layout {
            Layout::Density { domain, bins } if bins == width => Ok(domain),
            Layout::Density { bins, .. } => Err(CliError::io(
                input,
                format!("sidecar declares {bins} bins but rows have {width} values"),
            )),
            Layout::Cdt { .. } => Err(CliError::io(input, "rows are transform values, not densities")),
        },
    }
}

pub struct CdtSettings<'a> {
    pub points: usize,
    pub reference: &'a str,
    pub epsilon_floor: f64,
}

/// Forward transform of every density row over `domain`.
pub fn transform_rows(
    data: &RawSignalSet,
    domain: [f64; 2],
    settings: &CdtSettings,
) -> Result<(RawSignalSet, Layout)> {
    if width(data) < 2 {
        return Err(CliError::input("density rows need at least 2 values"));
    }
    let (reference, ref_density) = io::load_reference(settings.reference, settings.points)?;
    let out = map_rows(data, |row| {
        let d = DiscreteDensity::on_interval(row, domain[0], domain[1], settings.epsilon_floor)?;
        Ok(cdt::forward(&d, &reference)?.into_values())
    })?;
    let layout = Layout::Cdt {
        reference_source: settings.reference.to_string(),
        reference: ref_density,
        points: settings.points,
        epsilon_floor: settings.epsilon_floor,
        signal_domain: domain,
        signal_bins: width(data),
    };
    Ok((out, layout))
}

pub struct TransformArgs {
    pub input: PathBuf,
    pub output: PathBuf,
    pub grid: usize,
    pub reference: String,
    pub epsilon_floor: f64,
    pub domain: Option<[f64; 2]>,
}

pub fn transform(ctx: &Context, args: &TransformArgs) -> Result<()> {
    let data = io::load_table(&args.input)?;
    let domain = density_domain(&args.input, args.domain, width(&data))?;
    let settings = CdtSettings {
        points: args.grid,
        reference: &args.reference,
        epsilon_floor: args.epsilon_floor,
    };
    let (out, layout) =
        transform_rows(&data, domain, &settings).map_err(|e| e.context(args.input.display()))?;
    let path = ctx.out(&args.output);
    io::write_with_sidecar(&path, &io::table_bytes(&out), layout)?;
    ctx.info(format!("transformed {} rows -> {}", out.len(), path.display()));
    Ok(())
}

pub struct InverseArgs {
    pub input: PathBuf,
    pub output: PathBuf,
    pub grid: Option<usize>,
    pub domain: Option<[f64; 2]>,
}

pub fn inverse(ctx: &Context, args: &InverseArgs) -> Result<()> {
    io::require_exists(&args.input)?;
    let meta = io::read_sidecar(&args.input)?.ok_or_else(|| {
        CliError::io(
            &io::sidecar_path(&args.input),
            "missing; the inverse needs the reference recorded at transform time",
        )
    })?;
    let Layout::Cdt {
        reference,
        points,
        signal_domain,
        signal_bins,
        ..
    } = meta.layout
    else {
        return Err(CliError::io(&args.input, "rows are densities, not transform values"));
    };
    let data = io::load_table(&args.input)?;
    if width(&data) != points {
        return Err(CliError::io(
            &args.input,
            format!("rows have {} values, sidecar declares {points}", width(&data)),
        ));
    }
    let reference: Arc<Reference> = Reference::new(reference, points)?;
    let domain = args.domain.unwrap_or(signal_domain);
    let bins = args.grid.unwrap_or(signal_bins);
    if bins < 2 {
        return Err(CliError::input("--grid must be at least 2"));
    }
    let grid = OutputGrid::new(domain[0], domain[1], bins);
    let out = map_rows(&data, |row| {
        let t = CdtSignal::new(row.to_vec(), reference.clone())?;
        Ok(cdt::inverse(&t, &grid)?.values().to_vec())
    })
    .map_err(|e| e.context(args.input.display()))?;
    let path = ctx.out(&args.output);
    io::write_with_sidecar(&path, &io::table_bytes(&out), Layout::Density { domain, bins })?;
    ctx.info(format!("inverted {} rows -> {}", out.len(), path.display()));
    Ok(())
}

pub fn extract_energy(ctx: &Context, input: &Path, output: &Path, pad: bool) -> Result<()> {
    let tri = features::load_tri_axis_csv(input).map_err(|e| CliError::from(e).context(input.display()))?;
    let mut set = tri.energy();
    if pad {
        set = features::zero_pad(&set);
    }
    let mut buf = Vec::new();
    features::write_signals(&mut buf, &set).expect("in-memory write");
    let path = ctx.out(output);
    io::write_atomic(&path, &buf)?;
    ctx.info(format!("energy of {} signals -> {}", set.len(), path.display()));
    Ok(())
}

pub struct HistogramArgs {
    pub input: PathBuf,
    pub output: PathBuf,
    pub bins: usize,
    pub range: Option<[f64; 2]>,
    pub range_from: Option<PathBuf>,
    pub tri_axis: bool,
    pub epsilon_floor: f64,
}

pub fn extract_histogram(ctx: &Context, args: &HistogramArgs) -> Result<()> {
    let input = &args.input;
    let set = if args.tri_axis {
        features::load_tri_axis_csv(input).map(|t| t.energy())
    } else {
        features::load_signals_csv(input)
    }
    .map_err(|e| CliError::from(e).context(input.display()))?;

    let range = match (&args.range, &args.range_from) {
        (Some(r), _) => Some(BinRange::new(r[0], r[1])?),
        (None, Some(from)) => Some(persisted_range(from)?),
        (None, None) => None,
    };
    let hist = Histogrammer::fit(&set, args.bins, range, args.epsilon_floor)?;
    let data = hist.table(&set).map_err(|e| CliError::from(e).context(input.display()))?;
    let path = ctx.out(&args.output);
    let layout = Layout::Density {
        domain: [hist.range.lo, hist.range.hi],
        bins: hist.bins,
    };
    io::write_with_sidecar(&path, &io::table_bytes(&data), layout)?;
    ctx.info(format!(
        "{} histograms on [{}, {}] -> {}",
        data.len(),
        hist.range.lo,
        hist.range.hi,
        path.display()
    ));
    Ok(())
}

/// Bin range stored next to an earlier histogram output. Accepts either the
/// data file or its sidecar.
fn persisted_range(from: &Path) -> Result<BinRange> {
    let meta: io::Sidecar = if from.to_string_lossy().ends_with(".meta.json") {
        io::read_json(from)?
    } else {
        io::read_sidecar(from)?
            .ok_or_else(|| CliError::io(&io::sidecar_path(from), "no such file"))?
    };
    match meta.layout {
        Layout::Density { domain, .. } => Ok(BinRange::new(domain[0], domain[1])?),
        Layout::Cdt { .. } => Err(CliError::io(from, "not a histogram sidecar")),
    }
}

pub fn extract_concat(ctx: &Context, inputs: &[PathBuf], output: &Path) -> Result<()> {
    let blocks = inputs
        .iter()
        .map(|p| io::load_dataset(p))
        .collect::<Result<Vec<_>>>()?;
    let dims: Vec<usize> = blocks.iter().map(LabeledDataset::dim).collect();
    if dims.windows(2).any(|w| w[0] != w[1]) {
        return Err(CliError::input(format!(
            "blocks must share a grid size, got widths {dims:?}"
        )));
    }
    let data = features::concat_blocks(&blocks)?;
    let path = ctx.out(output);
    io::write_atomic(&path, &io::dataset_bytes(&data))?;
    ctx.info(format!("{} blocks of {} -> {}", blocks.len(), dims[0], path.display()));
    Ok(())
}

pub struct ProjectArgs {
    pub input: PathBuf,
    pub train_frac: f64,
    pub svg: PathBuf,
    pub csv: PathBuf,
    /// Fixed blend; tuned on the training rows when absent.
    pub alpha: Option<f64>,
    pub ridge: f64,
}

/// Per class, a seeded shuffle whose first `frac` share (at least one row)
/// trains. Returns ascending training indices.
pub fn stratified_split(labels: &[i64], frac: f64, seed: u64) -> Vec<usize> {
    let mut classes = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    for c in classes {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        idx.shuffle(&mut rng);
        let take = ((frac * idx.len() as f64).round() as usize).clamp(1, idx.len());
        train.extend_from_slice(&idx[..take]);
    }
    train.sort_unstable();
    train
}

/// Positive entries of the penalized LDA grid, scored by cross-validated
/// error of the 2-D embedding on the training rows; ties go to the smaller
/// value.
fn tune_alpha(train: &LabeledDataset, ridge: f64, seed: u64) -> Result<f64> {
    let smallest = train
        .classes()
        .iter()
        .map(|&c| train.labels().iter().filter(|&&l| l == c).count())
        .min()
        .unwrap_or(0);
    let candidates: Vec<f64> = CvConfig::default_grid(Method::PenalizedLda)["alpha"]
        .iter()
        .copied()
        .filter(|&a| a > 0.0)
        .collect();
    if smallest < 2 {
        return Ok(candidates[0]);
    }
    let mut best: Option<(f64, f64)> = None;
    for &alpha in &candidates {
        let mut cv = CvConfig::new(Method::PenalizedLda, Folds::K(smallest.min(5)), seed);
        cv.grid.clear();
        cv.base = Params { alpha, ridge, dims: 2, ..Params::default() };
        let Ok(report) = cross_validate(train, &cv) else { continue };
        if best.is_none_or(|(_, e)| report.mean_test_error < e) {
            best = Some((alpha, report.mean_test_error));
        }
    }
    best.map(|(a, _)| a)
        .ok_or_else(|| CliError::Numeric("no penalized LDA blend produced a 2-D embedding".into()))
}

pub fn project(ctx: &Context, args: &ProjectArgs) -> Result<()> {
    if !(args.train_frac > 0.0 && args.train_frac <= 1.0) {
        return Err(CliError::input("--train-frac must lie in (0, 1]"));
    }
    let table = io::load_table(&args.input)?;
    let mut classes = table.labels().to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(CliError::io(
            &args.input,
            format!("projection needs at least 2 classes, found {}", classes.len()),
        ));
    }
    let data = table.to_dataset()?;
    let seed = ctx.seed.unwrap_or(0);
    let train = stratified_split(data.labels(), args.train_frac, seed);
    let alpha = match args.alpha {
        Some(a) => a,
        None => tune_alpha(&data.subset(&train)?, args.ridge, seed)?,
    };
    let coords = project_2d(&data, &train, alpha, args.ridge)?;

    let mut in_train = vec![false; data.len()];
    for &i in &train {
        in_train[i] = true;
    }
    let mut csv = String::from("index,label,split,x,y\n");
    let mut points = Vec::with_capacity(data.len());
    for (i, xy) in coords.iter().enumerate() {
        let split = if in_train[i] { "train" } else { "test" };
        csv.push_str(&format!("{i},{},{split},{:?},{:?}\n", data.labels()[i], xy[0], xy[1]));
        points.push(svg::Point {
            xy: *xy,
            label: data.labels()[i],
            held_out: !in_train[i],
        });
    }
    let title = format!(
        "{} (filled: train, hollow: test)",
        args.input.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned())
    );
    let svg_path = ctx.out(&args.svg);
    let csv_path = ctx.out(&args.csv);
    io::write_atomic(&svg_path, svg::scatter(&points, &title).as_bytes())?;
    io::write_atomic(&csv_path, csv.as_bytes())?;
    ctx.info(format!("projection -> {}, {}", svg_path.display(), csv_path.display()));
    Ok(())
}
