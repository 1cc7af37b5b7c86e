//! Raw signal ingestion and density-ready feature extraction.
//!
//! CSV layouts, one sample per line, no header, `#` starts a comment line:
//! - scalar signals: `label,v1,v2,...` with rows of any length;
//! - tri-axis signals: `label,x1,y1,z1,x2,y2,z2,...`;
//! - feature datasets: `label,f1,...,fD` with every row the same width.

use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::{ClassifyError, LabeledDataset};
use crate::density::{DensityError, DiscreteDensity};

#[derive(Debug, Error)]
pub enum FeaturesError {
    #[error("no values to summarize")]
    EmptyInput,
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("line {line}: missing class label")]
    LabelMissing { line: u64 },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("histogram needs at least 2 bins, got {0}")]
    TooFewBins(usize),
    #[error("binning range [{lo}, {hi}] is empty or not finite")]
    BadRange { lo: f64, hi: f64 },
    #[error("{signals} signals but {labels} labels")]
    LabelCount { signals: usize, labels: usize },
    #[error("signal {0} contains a non-finite value")]
    NonFinite(usize),
    #[error("blocks disagree on {0}")]
    BlockMismatch(&'static str),
    #[error(transparent)]
    Density(#[from] DensityError),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
}

pub type Result<T> = std::result::Result<T, FeaturesError>;

/// Labeled scalar sequences of possibly different lengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawSignalSet {
    signals: Vec<Vec<f64>>,
    labels: Vec<i64>,
}

impl RawSignalSet {
    pub fn new(signals: Vec<Vec<f64>>, labels: Vec<i64>) -> Result<Self> {
        check_labels(signals.len(), labels.len())?;
        if let Some(i) = signals.iter().position(|s| s.iter().any(|v| !v.is_finite())) {
            return Err(FeaturesError::NonFinite(i));
        }
        Ok(Self { signals, labels })
    }

    pub fn signals(&self) -> &[Vec<f64>] {
        &self.signals
    }

    pub fn labels(&self) -> &[i64] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.signals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signals.is_empty()
    }

    pub fn max_len(&self) -> usize {
        self.signals.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Rows as a fixed-width dataset; fails unless all lengths agree.
    pub fn to_dataset(&self) -> Result<LabeledDataset> {
        Ok(LabeledDataset::new(self.signals.clone(), self.labels.clone())?)
    }
}

/// Labeled sequences of `(x, y, z)` measurements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriAxisSet {
    signals: Vec<Vec<[f64; 3]>>,
    labels: Vec<i64>,
}

impl TriAxisSet {
    pub fn new(signals: Vec<Vec<[f64; 3]>>, labels: Vec<i64>) -> Result<Self> {
        check_labels(signals.len(), labels.len())?;
        if let Some(i) = signals
            .iter()
            .position(|s| s.iter().flatten().any(|v| !v.is_finite()))
        {
            return Err(FeaturesError::NonFinite(i));
        }
        Ok(Self { signals, labels })
    }

    pub fn signals(&self) -> &[Vec<[f64; 3]>] {
        &self.signals
    }

    pub fn labels(&self) -> &[i64] {
        &self.labels
    }

    /// Per-sample energy sequences.
    pub fn energy(&self) -> RawSignalSet {
        RawSignalSet {
            signals: self.signals.iter().map(|s| energy(s)).collect(),
            labels: self.labels.clone(),
        }
    }
}

fn check_labels(signals: usize, labels: usize) -> Result<()> {
    if signals == labels {
        Ok(())
    } else {
        Err(FeaturesError::LabelCount { signals, labels })
    }
}

/// `x^2 + y^2 + z^2` at every time step.
pub fn energy(signal: &[[f64; 3]]) -> Vec<f64> {
    signal.iter().map(|[x, y, z]| x * x + y * y + z * z).collect()
}

/// Right-pads every signal with zeros to the longest length.
pub fn zero_pad(set: &RawSignalSet) -> RawSignalSet {
    let n = set.max_len();
    let signals = set
        .signals
        .iter()
        .map(|s| {
            let mut s = s.clone();
            s.resize(n, 0.0);
            s
        })
        .collect();
    RawSignalSet {
        signals,
        labels: set.labels.clone(),
    }
}

/// Closed interval split into equal-width histogram bins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinRange {
    pub lo: f64,
    pub hi: f64,
}

impl BinRange {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_finite() && hi.is_finite() && lo < hi {
            Ok(Self { lo, hi })
        } else {
            Err(FeaturesError::BadRange { lo, hi })
        }
    }

    /// `[min, max]` over all values; a single repeated value gets a unit-wide
    /// range centered on it.
    pub fn pooled<'a, I: IntoIterator<Item = &'a f64>>(values: I) -> Result<Self> {
        let (lo, hi) = values
            .into_iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        if lo > hi {
            return Err(FeaturesError::EmptyInput);
        }
        if lo == hi {
            return Self::new(lo - 0.5, hi + 0.5);
        }
        Self::new(lo, hi)
    }
}

/// Equal-width histogram of `values`, normalized to unit mass. Values outside
/// `range` count toward the nearest end bin.
pub fn histogram(
    values: &[f64],
    bins: usize,
    range: BinRange,
    epsilon_floor: f64,
) -> Result<DiscreteDensity> {
    if bins < 2 {
        return Err(FeaturesError::TooFewBins(bins));
    }
    if values.is_empty() {
        return Err(FeaturesError::EmptyInput);
    }
    let BinRange { lo, hi } = BinRange::new(range.lo, range.hi)?;
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0.0; bins];
    for &v in values {
        if v.is_nan() {
            return Err(DensityError::NonFinite(0).into());
        }
        let k = ((v - lo) / width).floor();
        let k = if k < 0.0 { 0 } else { (k as usize).min(bins - 1) };
        counts[k] += 1.0;
    }
    Ok(DiscreteDensity::from_samples(
        &counts,
        lo + 0.5 * width,
        width,
        epsilon_floor,
    )?)
}

/// Histogram settings whose range is fixed once and reused for every later
/// batch, so training and test samples share bins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Histogrammer {
    pub bins: usize,
    pub range: BinRange,
    pub epsilon_floor: f64,
}

impl Histogrammer {
    /// Uses the pooled range of `train` unless `range` is given.
    pub fn fit(
        train: &RawSignalSet,
        bins: usize,
        range: Option<BinRange>,
        epsilon_floor: f64,
    ) -> Result<Self> {
        let range = match range {
            Some(r) => r,
            None => BinRange::pooled(train.signals.iter().flatten())?,
        };
        Ok(Self {
            bins,
            range,
            epsilon_floor,
        })
    }

    pub fn apply(&self, set: &RawSignalSet) -> Result<Vec<DiscreteDensity>> {
        set.signals
            .iter()
            .map(|s| histogram(s, self.bins, self.range, self.epsilon_floor))
            .collect()
    }

    /// Histogram values as rows, labels kept.
    pub fn table(&self, set: &RawSignalSet) -> Result<RawSignalSet> {
        let rows = self
            .apply(set)?
            .into_iter()
            .map(|d| d.values().to_vec())
            .collect();
        RawSignalSet::new(rows, set.labels.clone())
    }

    pub fn dataset(&self, set: &RawSignalSet) -> Result<LabeledDataset> {
        self.table(set)?.to_dataset()
    }
}

/// Side-by-side concatenation of feature blocks computed for the same samples.
pub fn concat_blocks(blocks: &[LabeledDataset]) -> Result<LabeledDataset> {
    let first = blocks.first().ok_or(FeaturesError::EmptyInput)?;
    if blocks.iter().any(|b| b.labels() != first.labels()) {
        return Err(FeaturesError::BlockMismatch("labels"));
    }
    let rows = (0..first.len())
        .map(|i| blocks.iter().flat_map(|b| b.row(i)).collect())
        .collect();
    Ok(LabeledDataset::new(rows, first.labels().to_vec())?)
}

struct Row {
    line: u64,
    label: i64,
    values: Vec<f64>,
}

fn read_rows<R: Read>(reader: R) -> Result<Vec<Row>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| FeaturesError::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let mut cells = rec.iter();
        let label = match cells.next() {
            None | Some("") => return Err(FeaturesError::LabelMissing { line }),
            Some(s) => s.parse::<i64>().map_err(|_| FeaturesError::Parse {
                line,
                message: format!("label {s:?} is not an integer"),
            })?,
        };
        let values = cells
            .map(|s| match s.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(FeaturesError::Parse {
                    line,
                    message: format!("{s:?} is not a finite number"),
                }),
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(Row {
            line,
            label,
            values,
        });
    }
    Ok(rows)
}

fn write_rows<W: Write, I>(writer: W, rows: I) -> Result<()>
where
    I: IntoIterator<Item = (i64, Vec<f64>)>,
{
    let io = |source| FeaturesError::Io {
        path: PathBuf::from("<output>"),
        source,
    };
    let mut wtr = csv::WriterBuilder::new().flexible(true).from_writer(writer);
    for (label, values) in rows {
        let record =
            std::iter::once(label.to_string()).chain(values.iter().map(|v| format!("{v:?}")));
        wtr.write_record(record)
            .map_err(|e| io(std::io::Error::other(e)))?;
    }
    wtr.flush().map_err(io)
}

pub fn read_signals<R: Read>(reader: R) -> Result<RawSignalSet> {
    let (signals, labels) = read_rows(reader)?
        .into_iter()
        .map(|r| (r.values, r.label))
        .unzip();
    RawSignalSet::new(signals, labels)
}

pub fn read_tri_axis<R: Read>(reader: R) -> Result<TriAxisSet> {
    let mut signals = Vec::new();
    let mut labels = Vec::new();
    for r in read_rows(reader)? {
        if r.values.len() % 3 != 0 {
            return Err(FeaturesError::Parse {
                line: r.line,
                message: format!("{} values do not form (x, y, z) triples", r.values.len()),
            });
        }
        signals.push(r.values.chunks(3).map(|c| [c[0], c[1], c[2]]).collect());
        labels.push(r.label);
    }
    TriAxisSet::new(signals, labels)
}

/// Fixed-width rows with any number of classes.
pub fn read_table<R: Read>(reader: R) -> Result<RawSignalSet> {
    let rows = read_rows(reader)?;
    if let Some(first) = rows.first() {
        let width = first.values.len();
        if let Some(bad) = rows.iter().find(|r| r.values.len() != width) {
            return Err(FeaturesError::Parse {
                line: bad.line,
                message: format!("{} values, expected {width}", bad.values.len()),
            });
        }
    }
    let (signals, labels) = rows.into_iter().map(|r| (r.values, r.label)).unzip();
    RawSignalSet::new(signals, labels)
}

pub fn read_dataset<R: Read>(reader: R) -> Result<LabeledDataset> {
    read_table(reader)?.to_dataset()
}

pub fn write_signals<W: Write>(writer: W, set: &RawSignalSet) -> Result<()> {
    write_rows(
        writer,
        set.labels.iter().copied().zip(set.signals.iter().cloned()),
    )
}

pub fn write_tri_axis<W: Write>(writer: W, set: &TriAxisSet) -> Result<()> {
    write_rows(
        writer,
        set.labels
            .iter()
            .copied()
            .zip(set.signals.iter().map(|s| s.iter().flatten().copied().collect())),
    )
}

pub fn write_dataset<W: Write>(writer: W, set: &LabeledDataset) -> Result<()> {
    write_rows(
        writer,
        (0..set.len()).map(|i| (set.labels()[i], set.row(i))),
    )
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|source| FeaturesError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_signals_csv(path: &Path) -> Result<RawSignalSet> {
    read_signals(open(path)?)
}

pub fn load_tri_axis_csv(path: &Path) -> Result<TriAxisSet> {
    read_tri_axis(open(path)?)
}

pub fn load_table_csv(path: &Path) -> Result<RawSignalSet> {
    read_table(open(path)?)
}

pub fn load_dataset_csv(path: &Path) -> Result<LabeledDataset> {
    read_dataset(open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn energy_examples() {
        assert_eq!(energy(&[[1.0, 0.0, 0.0]]), vec![1.0]);
        assert_eq!(energy(&[[1.0, 2.0, 2.0]]), vec![9.0]);
        assert_eq!(
            energy(&[[0.0, 0.0, 0.0], [3.0, 4.0, 0.0]]),
            vec![0.0, 25.0]
        );
    }

    proptest! {
        #[test]
        fn energy_ignores_axis_order_and_sign(
            x in -10.0..10.0f64, y in -10.0..10.0f64, z in -10.0..10.0f64,
            flip in 0u8..8,
        ) {
            let s = |b: u8| if flip & b != 0 { -1.0 } else { 1.0 };
            let base = energy(&[[x, y, z]])[0];
            for p in [[s(1) * x, s(2) * y, s(4) * z], [z, x, y], [y, s(1) * z, x]] {
                prop_assert!((energy(&[p])[0] - base).abs() <= 1e-12 * base.max(1.0));
            }
        }

        #[test]
        fn zero_pad_keeps_prefixes(lens in proptest::collection::vec(0usize..12, 1..6)) {
            let signals: Vec<Vec<f64>> = lens
                .iter()
                .map(|&n| (0..n).map(|i| i as f64 + 1.0).collect())
                .collect();
            let set = RawSignalSet::new(signals.clone(), vec![0; lens.len()]).unwrap();
            let padded = zero_pad(&set);
            let n = *lens.iter().max().unwrap();
            for (orig, p) in signals.iter().zip(padded.signals()) {
                prop_assert_eq!(p.len(), n);
                prop_assert_eq!(&p[..orig.len()], &orig[..]);
                prop_assert!(p[orig.len()..].iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn zero_pad_lengths() {
        let set = RawSignalSet::new(vec![vec![1.0; 3], vec![2.0; 5]], vec![0, 1]).unwrap();
        let padded = zero_pad(&set);
        assert!(padded.signals().iter().all(|s| s.len() == 5));
        assert_eq!(padded.signals()[0][3..].iter().sum::<f64>(), 0.0);
        let equal = RawSignalSet::new(vec![vec![1.0; 4], vec![2.0; 4]], vec![0, 1]).unwrap();
        assert_eq!(zero_pad(&equal), equal);
    }

    #[test]
    fn uniform_draws_fill_bins_evenly() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let values: Vec<f64> = (0..1000).map(|_| rng.random::<f64>()).collect();
        let h = histogram(&values, 10, BinRange::new(0.0, 1.0).unwrap(), 0.0).unwrap();
        for m in h.masses() {
            assert!((m - 0.1).abs() <= 0.05, "{m}");
        }
    }

    #[test]
    fn constant_values_land_in_one_bin() {
        let h = histogram(&[0.5; 50], 10, BinRange::new(0.0, 1.0).unwrap(), 1e-8).unwrap();
        let masses = h.masses();
        assert!(masses[5] > 1.0 - 1e-6);
        assert!((h.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_values_clip_to_end_bins() {
        let h = histogram(&[-3.0, 0.5, 7.0], 4, BinRange::new(0.0, 1.0).unwrap(), 0.0).unwrap();
        let m = h.masses();
        assert!((m[0] - 1.0 / 3.0).abs() < 1e-12);
        assert!((m[3] - 1.0 / 3.0).abs() < 1e-12);
        let upper = histogram(&[1.0], 4, BinRange::new(0.0, 1.0).unwrap(), 0.0).unwrap();
        assert!((upper.masses()[3] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn histogram_errors() {
        let r = BinRange::new(0.0, 1.0).unwrap();
        assert!(matches!(histogram(&[], 10, r, 0.0), Err(FeaturesError::EmptyInput)));
        assert!(matches!(histogram(&[0.1], 1, r, 0.0), Err(FeaturesError::TooFewBins(1))));
        assert!(BinRange::new(1.0, 1.0).is_err());
    }

    #[test]
    fn fitted_range_is_reused_for_test_data() {
        let train = RawSignalSet::new(vec![vec![0.0, 1.0], vec![2.0, 4.0]], vec![0, 1]).unwrap();
        let h = Histogrammer::fit(&train, 8, None, 0.0).unwrap();
        assert_eq!(h.range, BinRange { lo: 0.0, hi: 4.0 });
        let test = RawSignalSet::new(vec![vec![9.0]], vec![0]).unwrap();
        let d = &h.apply(&test).unwrap()[0];
        assert_eq!(d.domain(), (0.0, 4.0));
        assert!((d.masses()[7] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn many_bin_histograms_from_skewed_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let signals: Vec<Vec<f64>> = (0..6)
            .map(|k| {
                (0..5000)
                    .map(|_| {
                        let u: f64 = rng.random::<f64>().max(1e-12);
                        (-u.ln() * (1.0 + k as f64 * 0.2)).min(20.0)
                    })
                    .collect()
            })
            .collect();
        let set = RawSignalSet::new(signals, vec![0, 0, 0, 1, 1, 1]).unwrap();
        let h = Histogrammer::fit(&set, 1024, None, 1e-8).unwrap();
        let data = h.dataset(&set).unwrap();
        assert_eq!(data.dim(), 1024);
        for d in h.apply(&set).unwrap() {
            assert!((d.total_mass() - 1.0).abs() < 1e-12);
            assert!(d.values().iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn csv_round_trips() {
        let set = RawSignalSet::new(vec![vec![0.1, 2.5e-7], vec![], vec![-3.0, 4.0, 1.0 / 3.0]], vec![1, 2, 1])
            .unwrap();
        let mut buf = Vec::new();
        write_signals(&mut buf, &set).unwrap();
        assert_eq!(read_signals(buf.as_slice()).unwrap(), set);

        let tri = TriAxisSet::new(
            vec![vec![[1.0, 2.0, 3.0]], vec![[0.5, -0.5, 0.25], [7.0, 8.0, 9.0]]],
            vec![0, 1],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_tri_axis(&mut buf, &tri).unwrap();
        assert_eq!(read_tri_axis(buf.as_slice()).unwrap(), tri);

        let data = LabeledDataset::new(vec![vec![0.1, 0.2], vec![0.3, std::f64::consts::PI]], vec![0, 1])
            .unwrap();
        let mut buf = Vec::new();
        write_dataset(&mut buf, &data).unwrap();
        assert_eq!(read_dataset(buf.as_slice()).unwrap(), data);
    }

    #[test]
    fn malformed_rows_name_their_line() {
        let err = read_signals("0,1,2\n1,3,x\n".as_bytes()).unwrap_err();
        assert!(matches!(err, FeaturesError::Parse { line: 2, .. }), "{err}");
        assert!(err.to_string().starts_with("line 2"));
        let err = read_signals("0,1\n,2,3\n".as_bytes()).unwrap_err();
        assert!(matches!(err, FeaturesError::LabelMissing { line: 2 }));
        let err = read_tri_axis("0,1,2,3,4\n".as_bytes()).unwrap_err();
        assert!(matches!(err, FeaturesError::Parse { line: 1, .. }));
    }

    #[test]
    fn ragged_rows_only_allowed_for_signals() {
        let text = "0,1,2,3\n1,4,5\n";
        assert_eq!(read_signals(text.as_bytes()).unwrap().len(), 2);
        let err = read_dataset(text.as_bytes()).unwrap_err();
        assert!(matches!(err, FeaturesError::Parse { line: 2, .. }));
        assert!(read_table(text.as_bytes()).is_err());
        assert_eq!(read_table("5,1\n".as_bytes()).unwrap().len(), 1);
    }

    #[test]
    fn comments_and_blank_lines_are_skipped() {
        let set = read_signals("# header\n0,1\n\n1,2\n".as_bytes()).unwrap();
        assert_eq!(set.labels(), &[0, 1]);
    }

    #[test]
    fn missing_file_names_path() {
        let err = load_dataset_csv(Path::new("/no/such/file.csv")).unwrap_err();
        assert!(err.to_string().contains("/no/such/file.csv"));
    }

    #[test]
    fn blocks_concatenate_per_sample() {
        let a = LabeledDataset::new(vec![vec![1.0], vec![2.0]], vec![0, 1]).unwrap();
        let b = LabeledDataset::new(vec![vec![3.0, 4.0], vec![5.0, 6.0]], vec![0, 1]).unwrap();
        let c = concat_blocks(&[a.clone(), b]).unwrap();
        assert_eq!(c.row(1), vec![2.0, 5.0, 6.0]);
        let other = a.relabeled(vec![1, 0]).unwrap();
        assert!(concat_blocks(&[a, other]).is_err());
    }
}
