//! Synthetic classes `h' * (p0 ∘ h)` under sampled monotone confounds.
//!
//! A sample's CDF is `P0 ∘ h`, so each output bin receives exactly
//! `P0(h(e_{k+1})) - P0(h(e_k))` of mass; no quadrature error is introduced
//! by the regridding.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cdt::{forward, CdtError, MonotoneMap, Reference};
use crate::classify::{ClassifyError, LabeledDataset};
use crate::density::{DensityError, DiscreteDensity, DEFAULT_EPSILON_FLOOR};

/// Minimum L1 distance between the two mothers.
pub const MOTHER_TOLERANCE: f64 = 1e-6;

/// Mass a sample may lose off the grid before it counts as an escape.
pub const DEFAULT_ESCAPE_TOLERANCE: f64 = 1e-6;

/// Knots used when an affine confound is tabulated as a [`MonotoneMap`].
const TABULATION_KNOTS: usize = 257;

const PROTOTYPES: &str = include_str!("../fixtures/texture_prototypes.csv");

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DatagenError {
    #[error(transparent)]
    Density(#[from] DensityError),
    #[error(transparent)]
    Cdt(#[from] CdtError),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error("a confound moved {lost:.3e} of the mass off the working domain")]
    DomainEscape { lost: f64 },
    #[error("grid point {0} lies outside the confound's knot span")]
    OutsideMapDomain(f64),
    #[error("the two mother densities coincide (L1 distance {0:.3e})")]
    IdenticalMothers(f64),
    #[error("mothers and noise must share a grid spacing")]
    GridMismatch,
    #[error("invalid family: {0}")]
    BadFamily(String),
    #[error("fixture parse error: {0}")]
    Fixture(String),
}

pub type Result<T> = std::result::Result<T, DatagenError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyKind {
    Translation,
    Scaling,
    Affine,
    CustomMonotone,
}

/// Closed interval to sample from. With `levels = Some(n)` draws are
/// restricted to `n` equally spaced values including both ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamRange {
    pub lo: f64,
    pub hi: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<usize>,
}

impl ParamRange {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self {
            lo,
            hi,
            levels: None,
        }
    }

    pub fn fixed(v: f64) -> Self {
        Self::new(v, v)
    }

    pub fn with_levels(mut self, levels: usize) -> Self {
        self.levels = Some(levels);
        self
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo <= self.hi) {
            return Err(DatagenError::BadFamily(format!(
                "{name} range [{}, {}] is empty or non-finite",
                self.lo, self.hi
            )));
        }
        if self.levels == Some(0) {
            return Err(DatagenError::BadFamily(format!("{name} needs at least one level")));
        }
        Ok(())
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match self.levels {
            Some(n) if n > 1 => {
                let k = rng.random_range(0..n);
                self.lo + (self.hi - self.lo) * k as f64 / (n - 1) as f64
            }
            Some(_) => self.lo,
            None if self.hi > self.lo => rng.random_range(self.lo..=self.hi),
            None => self.lo,
        }
    }
}

/// A set of monotone coordinate deformations to draw confounds from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfoundFamily {
    pub kind: FamilyKind,
    /// Translation `mu` in `h(x) = a (x - mu)`.
    pub mu: ParamRange,
    /// Scaling `a` in `h(x) = a (x - mu)`.
    pub a: ParamRange,
    /// Maps for [`FamilyKind::CustomMonotone`], drawn uniformly.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub maps: Vec<MonotoneMap>,
    pub rng_seed: u64,
}

impl ConfoundFamily {
    pub fn translation(mu: ParamRange, rng_seed: u64) -> Self {
        Self {
            kind: FamilyKind::Translation,
            mu,
            a: ParamRange::fixed(1.0),
            maps: Vec::new(),
            rng_seed,
        }
    }

    pub fn scaling(a: ParamRange, rng_seed: u64) -> Self {
        Self {
            kind: FamilyKind::Scaling,
            mu: ParamRange::fixed(0.0),
            a,
            maps: Vec::new(),
            rng_seed,
        }
    }

    pub fn affine(mu: ParamRange, a: ParamRange, rng_seed: u64) -> Self {
        Self {
            kind: FamilyKind::Affine,
            mu,
            a,
            maps: Vec::new(),
            rng_seed,
        }
    }

    pub fn custom(maps: Vec<MonotoneMap>, rng_seed: u64) -> Self {
        Self {
            kind: FamilyKind::CustomMonotone,
            mu: ParamRange::fixed(0.0),
            a: ParamRange::fixed(1.0),
            maps,
            rng_seed,
        }
    }

    /// Only the identity map.
    pub fn identity(rng_seed: u64) -> Self {
        Self::affine(ParamRange::fixed(0.0), ParamRange::fixed(1.0), rng_seed)
    }

    pub fn validate(&self) -> Result<()> {
        self.mu.validate("mu")?;
        self.a.validate("a")?;
        if self.a.lo <= 0.0 {
            return Err(DatagenError::BadFamily(format!(
                "scalings must be positive, got lower bound {}",
                self.a.lo
            )));
        }
        match self.kind {
            FamilyKind::Translation if self.a != ParamRange::fixed(1.0) => Err(
                DatagenError::BadFamily("a translation family cannot scale".into()),
            ),
            FamilyKind::Scaling if self.mu != ParamRange::fixed(0.0) => Err(
                DatagenError::BadFamily("a scaling family cannot translate".into()),
            ),
            FamilyKind::CustomMonotone if self.maps.is_empty() => Err(DatagenError::BadFamily(
                "a custom family needs at least one map".into(),
            )),
            _ => Ok(()),
        }
    }

    pub fn draw<R: Rng>(&self, rng: &mut R) -> Confound {
        match self.kind {
            FamilyKind::CustomMonotone => {
                Confound::Map(self.maps[rng.random_range(0..self.maps.len())].clone())
            }
            _ => {
                let mu = self.mu.sample(rng);
                let a = self.a.sample(rng);
                Confound::Affine { mu, a }
            }
        }
    }
}

/// One sampled deformation `h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Confound {
    /// `h(x) = a (x - mu)`.
    Affine { mu: f64, a: f64 },
    Map(MonotoneMap),
}

impl Confound {
    pub fn apply(&self, x: f64) -> Option<f64> {
        match self {
            Confound::Affine { mu, a } => Some(a * (x - mu)),
            Confound::Map(m) => m.apply(x),
        }
    }

    pub fn inverse_apply(&self, y: f64) -> Option<f64> {
        match self {
            Confound::Affine { mu, a } => Some(y / a + mu),
            Confound::Map(m) => m.inverse().apply(y),
        }
    }

    /// Piecewise-linear table of `h` on `[lo, hi]`.
    pub fn to_map(&self, lo: f64, hi: f64) -> Result<MonotoneMap> {
        match self {
            Confound::Affine { mu, a } => {
                Ok(MonotoneMap::from_fn(|x| a * (x - mu), lo, hi, TABULATION_KNOTS)?)
            }
            Confound::Map(m) => Ok(m.clone()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ClassId {
    P,
    Q,
}

impl ClassId {
    pub fn label(self) -> i64 {
        match self {
            ClassId::P => 0,
            ClassId::Q => 1,
        }
    }
}

/// Everything needed to draw the two classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerativeSpec {
    pub mother_p: DiscreteDensity,
    pub mother_q: DiscreteDensity,
    pub family: ConfoundFamily,
    pub samples_per_class: usize,
    /// Convolved into each sample when present; must share the mothers' spacing.
    pub noise: Option<DiscreteDensity>,
    pub epsilon_floor: f64,
    pub escape_tolerance: f64,
}

impl GenerativeSpec {
    pub fn new(
        mother_p: DiscreteDensity,
        mother_q: DiscreteDensity,
        family: ConfoundFamily,
        samples_per_class: usize,
    ) -> Result<Self> {
        let spec = Self {
            mother_p,
            mother_q,
            family,
            samples_per_class,
            noise: None,
            epsilon_floor: DEFAULT_EPSILON_FLOOR,
            escape_tolerance: DEFAULT_ESCAPE_TOLERANCE,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.family.validate()?;
        let dist = self
            .mother_p
            .l1_distance(&self.mother_q)
            .map_err(|_| DatagenError::GridMismatch)?;
        if dist <= MOTHER_TOLERANCE {
            return Err(DatagenError::IdenticalMothers(dist));
        }
        if let Some(noise) = &self.noise {
            let r = self.mother_p.spacing();
            if (noise.spacing() - r).abs() > 1e-12 * r {
                return Err(DatagenError::GridMismatch);
            }
        }
        Ok(())
    }

    pub fn mother(&self, which: ClassId) -> &DiscreteDensity {
        match which {
            ClassId::P => &self.mother_p,
            ClassId::Q => &self.mother_q,
        }
    }
}

/// A generated density with the confound that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub confound: Confound,
    pub density: DiscreteDensity,
}

/// `h' * (mother ∘ h)` regridded onto the mother's grid, before the floor.
/// Returns the raw bin values and the mass that fell off the grid.
pub fn push_forward(mother: &DiscreteDensity, h: &Confound) -> Result<(Vec<f64>, f64)> {
    let cdf = mother.cdf();
    let edges = mother.edges();
    let mapped = edges
        .iter()
        .map(|&e| h.apply(e).ok_or(DatagenError::OutsideMapDomain(e)))
        .collect::<Result<Vec<_>>>()?;
    let levels = cdf.eval_sorted(&mapped);
    let r = mother.spacing();
    let raw: Vec<f64> = levels.windows(2).map(|w| (w[1] - w[0]).max(0.0) / r).collect();
    let kept = levels[levels.len() - 1] - levels[0];
    Ok((raw, (1.0 - kept).max(0.0)))
}

/// Linear convolution with a noise density on the same spacing. The kernel is
/// anchored at the bin containing 0; mass pushed off the grid is dropped.
pub fn convolve(values: &[f64], noise: &DiscreteDensity) -> Vec<f64> {
    let kernel = noise.masses();
    let zero = (-noise.grid_start() / noise.spacing()).round() as isize;
    let n = values.len() as isize;
    let mut out = vec![0.0; values.len()];
    for (i, &v) in values.iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        for (j, &k) in kernel.iter().enumerate() {
            let t = i as isize + j as isize - zero;
            if (0..n).contains(&t) {
                out[t as usize] += v * k;
            }
        }
    }
    out
}

fn sample_rng(seed: u64, which: ClassId, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((which.label() as u64) << 32) | index as u64);
    rng
}

/// Draws `samples_per_class` members of one class. Each sample has its own
/// random stream derived from the family seed, class and index.
pub fn sample_class(spec: &GenerativeSpec, which: ClassId) -> Result<Vec<Sample>> {
    spec.validate()?;
    let confounds: Vec<Confound> = (0..spec.samples_per_class)
        .map(|i| spec.family.draw(&mut sample_rng(spec.family.rng_seed, which, i)))
        .collect();
    sample_with(spec, which, confounds)
}

/// Applies the given confounds to one class's mother.
pub fn sample_with(
    spec: &GenerativeSpec,
    which: ClassId,
    confounds: Vec<Confound>,
) -> Result<Vec<Sample>> {
    let mother = spec.mother(which);
    confounds
        .into_par_iter()
        .map(|confound| {
            let (mut raw, lost) = push_forward(mother, &confound)?;
            if lost > spec.escape_tolerance {
                return Err(DatagenError::DomainEscape { lost });
            }
            if let Some(noise) = &spec.noise {
                raw = convolve(&raw, noise);
            }
            let density = DiscreteDensity::from_samples(
                &raw,
                mother.grid_start(),
                mother.spacing(),
                spec.epsilon_floor,
            )?;
            Ok(Sample { confound, density })
        })
        .collect()
}

/// Both classes as one dataset of raw density values, labels 0 then 1.
pub fn raw_dataset(p: &[Sample], q: &[Sample]) -> Result<LabeledDataset> {
    let rows = p.iter().chain(q).map(|s| s.density.values().to_vec()).collect();
    let labels = labels_for(p.len(), q.len());
    Ok(LabeledDataset::new(rows, labels)?)
}

/// Both classes transformed against `reference`, labels 0 then 1.
pub fn cdt_dataset(p: &[Sample], q: &[Sample], reference: &std::sync::Arc<Reference>) -> Result<LabeledDataset> {
    let rows = p
        .par_iter()
        .chain(q.par_iter())
        .map(|s| Ok(forward(&s.density, reference)?.into_values()))
        .collect::<Result<Vec<_>>>()?;
    Ok(LabeledDataset::new(rows, labels_for(p.len(), q.len()))?)
}

fn labels_for(np: usize, nq: usize) -> Vec<i64> {
    std::iter::repeat_n(0, np)
        .chain(std::iter::repeat_n(1, nq))
        .collect()
}

/// Settings for the two-prototype histogram simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextureConfig {
    pub seed: u64,
    /// Brightness (translation) range.
    pub mu: ParamRange,
    /// Contrast (scaling) range.
    pub a: ParamRange,
    /// Histograms per class, each under an independent `(mu, a)` draw.
    pub samples_per_class: usize,
    /// CDT grid size against the uniform reference.
    pub cdt_points: usize,
    pub epsilon_floor: f64,
}

impl Default for TextureConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            mu: ParamRange::new(0.0, 0.5),
            a: ParamRange::new(0.6, 1.67),
            samples_per_class: 64,
            cdt_points: 256,
            epsilon_floor: DEFAULT_EPSILON_FLOOR,
        }
    }
}

/// Output of [`texture_simulation`].
#[derive(Debug, Clone, PartialEq)]
pub struct TextureData {
    pub raw: LabeledDataset,
    pub cdt: LabeledDataset,
    /// Histogram bin centers of the raw features.
    pub raw_grid: Vec<f64>,
    /// Reference grid of the CDT features.
    pub cdt_grid: Vec<f64>,
    /// `(mu, a)` per row.
    pub params: Vec<(f64, f64)>,
}

/// The bundled unimodal and bimodal prototype histograms.
pub fn texture_prototypes() -> Result<(DiscreteDensity, DiscreteDensity)> {
    let mut reader = csv::Reader::from_reader(PROTOTYPES.as_bytes());
    let mut xs = Vec::new();
    let mut uni = Vec::new();
    let mut bi = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| DatagenError::Fixture(e.to_string()))?;
        let field = |k: usize| -> Result<f64> {
            rec.get(k)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| DatagenError::Fixture(format!("row {}", line + 2)))
        };
        xs.push(field(0)?);
        uni.push(field(1)?);
        bi.push(field(2)?);
    }
    if xs.len() < 2 {
        return Err(DatagenError::Fixture("too few rows".into()));
    }
    let r = xs[1] - xs[0];
    Ok((
        DiscreteDensity::from_samples(&uni, xs[0], r, 0.0)?,
        DiscreteDensity::from_samples(&bi, xs[0], r, 0.0)?,
    ))
}

/// Two classes of histograms: a unimodal prototype and a bimodal one whose
/// modes are shifted copies of it, each sample under an independent random
/// brightness shift and contrast scaling.
pub fn texture_simulation(config: &TextureConfig) -> Result<TextureData> {
    let (p0, q0) = texture_prototypes()?;
    let family = ConfoundFamily::affine(config.mu, config.a, config.seed);
    let mut spec = GenerativeSpec::new(p0, q0, family, config.samples_per_class)?;
    spec.epsilon_floor = config.epsilon_floor;

    let p = sample_class(&spec, ClassId::P)?;
    let q = sample_class(&spec, ClassId::Q)?;

    let reference = Reference::uniform(config.cdt_points)?;
    let params = p
        .iter()
        .chain(&q)
        .map(|s| match s.confound {
            Confound::Affine { mu, a } => (mu, a),
            Confound::Map(_) => unreachable!("texture confounds are affine"),
        })
        .collect();
    Ok(TextureData {
        raw: raw_dataset(&p, &q)?,
        cdt: cdt_dataset(&p, &q, &reference)?,
        raw_grid: spec.mother_p.centers(),
        cdt_grid: reference.grid().to_vec(),
        params,
    })
}

/// Box mothers whose classes share no affine image but whose raw histograms
/// have intersecting convex hulls: `q0 = (box[0, w] + box[2w, 3w]) / 2`
/// against `p0 = box[0, w]` with lattice-valued confounds, so that
/// `q_{mu,a} = (p_{mu,a} + p_{mu + 2w/a, a}) / 2` whenever both `p` terms
/// are drawn.
pub fn two_box_spec(samples_per_class: usize, seed: u64) -> Result<GenerativeSpec> {
    let bins = 120;
    let (lo, hi) = (0.0, 1.2);
    let r = (hi - lo) / bins as f64;
    // w = 16 bins, so 2w / a is a multiple of the 0.1 brightness step
    // for a in {0.8, 1.6}.
    let w = 16;
    let p: Vec<f64> = (0..bins).map(|i| f64::from(u8::from(i < w))).collect();
    let q: Vec<f64> = (0..bins)
        .map(|i| f64::from(u8::from(i < w || (2 * w..3 * w).contains(&i))))
        .collect();
    let family = ConfoundFamily::affine(
        ParamRange::new(0.0, 0.5).with_levels(6),
        ParamRange::new(0.8, 1.6).with_levels(2),
        seed,
    );
    GenerativeSpec::new(
        DiscreteDensity::from_samples(&p, lo + 0.5 * r, r, 0.0)?,
        DiscreteDensity::from_samples(&q, lo + 0.5 * r, r, 0.0)?,
        family,
        samples_per_class,
    )
}

/// Largest closure violations found by [`verify_family_closure`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClosureReport {
    pub trials: usize,
    /// `h^-1` leaves the family or is not increasing.
    pub inversion: f64,
    /// `alpha h1^-1 + (1 - alpha) h2^-1` leaves the family or is not increasing.
    pub convex_inverse: f64,
    /// `h1 ∘ h2` leaves the family or is not increasing.
    pub composition: f64,
    pub tolerance: f64,
}

impl ClosureReport {
    pub fn max_violation(&self) -> f64 {
        self.inversion.max(self.convex_inverse).max(self.composition)
    }

    pub fn passed(&self) -> bool {
        self.max_violation() <= self.tolerance
    }

    /// Names of the failed conditions.
    pub fn violations(&self) -> Vec<&'static str> {
        let mut v = Vec::new();
        if self.inversion > self.tolerance {
            v.push("inversion");
        }
        if self.convex_inverse > self.tolerance {
            v.push("convex combination of inverses");
        }
        if self.composition > self.tolerance {
            v.push("composition");
        }
        v
    }
}

const PROBES: usize = 65;
const CLOSURE_TOLERANCE: f64 = 1e-6;

fn probes(lo: f64, hi: f64) -> Vec<f64> {
    let mut xs: Vec<f64> = (0..PROBES)
        .map(|i| lo + (hi - lo) * i as f64 / (PROBES - 1) as f64)
        .collect();
    xs[PROBES - 1] = hi;
    xs
}

/// How far tabulated values `(x, g(x))` are from the family's functional form,
/// plus any failure of strict monotonicity.
fn membership_gap(family: &ConfoundFamily, xs: &[f64], ys: &[f64]) -> f64 {
    let scale = ys.iter().fold(1.0f64, |m, y| m.max(y.abs()));
    let non_monotone = ys
        .windows(2)
        .map(|w| (w[0] - w[1]).max(0.0))
        .fold(0.0, f64::max)
        + if ys.windows(2).any(|w| w[1] <= w[0]) { scale } else { 0.0 };
    let n = xs.len() as f64;
    let form = match family.kind {
        FamilyKind::Translation => {
            let c = xs.iter().zip(ys).map(|(x, y)| y - x).sum::<f64>() / n;
            xs.iter().zip(ys).map(|(x, y)| (y - x - c).abs()).fold(0.0, f64::max)
        }
        FamilyKind::Scaling => {
            let k = xs.iter().zip(ys).map(|(x, y)| x * y).sum::<f64>()
                / xs.iter().map(|x| x * x).sum::<f64>();
            xs.iter().zip(ys).map(|(x, y)| (y - k * x).abs()).fold(0.0, f64::max)
        }
        FamilyKind::Affine => {
            let mx = xs.iter().sum::<f64>() / n;
            let my = ys.iter().sum::<f64>() / n;
            let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
            let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
            let k = sxy / sxx;
            xs.iter()
                .zip(ys)
                .map(|(x, y)| (y - my - k * (x - mx)).abs())
                .fold(0.0, f64::max)
        }
        FamilyKind::CustomMonotone => family
            .maps
            .iter()
            .map(|m| {
                xs.iter()
                    .zip(ys)
                    .map(|(&x, &y)| m.apply(x).map_or(f64::INFINITY, |v| (v - y).abs()))
                    .fold(0.0, f64::max)
            })
            .fold(f64::INFINITY, f64::min),
    };
    (non_monotone + form) / scale
}

/// Samples `trials` pairs `h1, h2` and a convex weight, then checks that
/// `h1^-1`, `alpha h1^-1 + (1 - alpha) h2^-1` and `h1 ∘ h2` are strictly
/// increasing and of the family's form. Membership means the functional form
/// (translation, scaling, affine, or one of the custom maps), not the
/// parameter ranges.
pub fn verify_family_closure(family: &ConfoundFamily, trials: usize) -> Result<ClosureReport> {
    family.validate()?;
    let trials = trials.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(family.rng_seed);
    let mut report = ClosureReport {
        trials,
        tolerance: CLOSURE_TOLERANCE,
        ..Default::default()
    };
    // Working interval for affine kinds; custom maps use their own spans.
    let (lo, hi) = (-1.0, 1.0);
    for _ in 0..trials {
        let h1 = family.draw(&mut rng).to_map(lo, hi)?;
        let h2 = family.draw(&mut rng).to_map(lo, hi)?;
        let alpha: f64 = rng.random_range(0.05..0.95);
        let (i1, i2) = (h1.inverse(), h2.inverse());

        let (a, b) = i1.domain();
        let xs = probes(a, b);
        let ys: Vec<f64> = xs.iter().map(|&x| i1.apply(x).unwrap()).collect();
        report.inversion = report.inversion.max(membership_gap(family, &xs, &ys));

        let a = i1.domain().0.max(i2.domain().0);
        let b = i1.domain().1.min(i2.domain().1);
        if a < b {
            let xs = probes(a, b);
            let ys: Vec<f64> = xs
                .iter()
                .map(|&x| alpha * i1.apply(x).unwrap() + (1.0 - alpha) * i2.apply(x).unwrap())
                .collect();
            report.convex_inverse = report.convex_inverse.max(membership_gap(family, &xs, &ys));
        }

        // x with h2(x) inside h1's domain
        let ylo = h1.domain().0.max(h2.range().0);
        let yhi = h1.domain().1.min(h2.range().1);
        if ylo < yhi {
            let (a, b) = (i2.apply(ylo).unwrap(), i2.apply(yhi).unwrap());
            let xs = probes(a, b);
            let ys: Vec<f64> = xs
                .iter()
                .map(|&x| h2.apply(x).and_then(|y| h1.apply(y)).unwrap_or(f64::NAN))
                .collect();
            let gap = membership_gap(family, &xs, &ys);
            report.composition = report.composition.max(if gap.is_nan() { f64::INFINITY } else { gap });
        }
    }
    Ok(report)
}
