//! Forward and inverse cumulative distribution transform.
//!
//! For a signal density `I1` and a reference density `I0`, the transport map
//! `f` matches cumulative mass, `J0(x) = J1(f(x))`, and the transform is
//! `(f(x) - x) * sqrt(I0(x))` sampled on the reference grid. Translation,
//! dilation and general monotone deformations of the signal act pointwise on
//! the transform; the oracles below apply those closed forms directly.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::density::{Cdf, DensityError, DiscreteDensity};

/// Slack allowed when checking that a recovered transport map is nondecreasing.
pub const MONOTONE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CdtError {
    #[error(transparent)]
    Density(#[from] DensityError),
    #[error("evaluation grid needs at least 2 points, got {0}")]
    GridTooSmall(usize),
    #[error("reference density must be strictly positive on its domain (bin {0} is not)")]
    NonPositiveReference(usize),
    #[error("recovered transport map decreases at grid index {index} (by {drop:e})")]
    NonMonotone { index: usize, drop: f64 },
    #[error("scale factor must be positive, got {0}")]
    NonPositiveScale(f64),
    #[error("map value {value} falls outside the knot span [{lo}, {hi}]")]
    RangeMismatch { value: f64, lo: f64, hi: f64 },
    #[error("transforms were computed against different references")]
    ReferenceMismatch,
    #[error("expected {expected} transform values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("transform value at index {0} is not finite")]
    NonFinite(usize),
    #[error("map knots must be strictly increasing with at least 2 points")]
    BadKnots,
}

pub type Result<T> = std::result::Result<T, CdtError>;

/// Reference density together with the evaluation grid the transform is
/// sampled on: `m` midpoints of equal cells spanning the reference domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    density: DiscreteDensity,
    cdf: Cdf,
    grid: Vec<f64>,
    sqrt_density: Vec<f64>,
    cell: f64,
}

impl Reference {
    pub fn new(density: DiscreteDensity, m: usize) -> Result<Arc<Self>> {
        if m < 2 {
            return Err(CdtError::GridTooSmall(m));
        }
        if let Some(i) = density.values().iter().position(|&v| v <= 0.0) {
            return Err(CdtError::NonPositiveReference(i));
        }
        let (lo, hi) = density.domain();
        let cell = (hi - lo) / m as f64;
        let grid: Vec<f64> = (0..m).map(|k| lo + (k as f64 + 0.5) * cell).collect();
        let sqrt_density = grid
            .iter()
            .map(|&x| density.evaluate(x).map(f64::sqrt))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let cdf = density.cdf();
        Ok(Arc::new(Self {
            density,
            cdf,
            grid,
            sqrt_density,
            cell,
        }))
    }

    /// Uniform reference on `[0, 1]` sampled at `(k - 1/2) / m`.
    pub fn uniform(m: usize) -> Result<Arc<Self>> {
        Self::new(DiscreteDensity::uniform(0.0, 1.0, 2)?, m)
    }

    pub fn density(&self) -> &DiscreteDensity {
        &self.density
    }

    pub fn cdf(&self) -> &Cdf {
        &self.cdf
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// `sqrt(I0)` at each grid point.
    pub fn sqrt_density(&self) -> &[f64] {
        &self.sqrt_density
    }

    /// Midpoint-rule quadrature weight shared by every grid point.
    pub fn weight(&self) -> f64 {
        self.cell
    }

    fn same_as(self: &Arc<Self>, other: &Arc<Self>) -> bool {
        Arc::ptr_eq(self, other) || **self == **other
    }
}

/// Transform values on a reference grid.
#[derive(Debug, Clone)]
pub struct CdtSignal {
    values: Vec<f64>,
    reference: Arc<Reference>,
}

impl CdtSignal {
    /// Wraps externally supplied transform values. Monotonicity of the
    /// implied map is checked lazily, by [`inverse`].
    pub fn new(values: Vec<f64>, reference: Arc<Reference>) -> Result<Self> {
        if values.len() != reference.len() {
            return Err(CdtError::LengthMismatch {
                expected: reference.len(),
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(CdtError::NonFinite(i));
        }
        Ok(Self { values, reference })
    }

    /// Builds the transform of a known transport map sampled on the grid.
    pub fn from_map(map: &[f64], reference: Arc<Reference>) -> Result<Self> {
        if map.len() != reference.len() {
            return Err(CdtError::LengthMismatch {
                expected: reference.len(),
                got: map.len(),
            });
        }
        let values = map
            .iter()
            .zip(reference.grid())
            .zip(reference.sqrt_density())
            .map(|((f, x), s)| (f - x) * s)
            .collect();
        Self::new(values, reference)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn reference(&self) -> &Arc<Reference> {
        &self.reference
    }

    pub fn grid(&self) -> &[f64] {
        self.reference.grid()
    }

    /// Recovers `f(x_k) = value_k / sqrt(I0(x_k)) + x_k`.
    pub fn transport_map(&self) -> Vec<f64> {
        self.values
            .iter()
            .zip(self.reference.grid())
            .zip(self.reference.sqrt_density())
            .map(|((v, x), s)| v / s + x)
            .collect()
    }

    /// First index where the recovered map drops by more than `tol`.
    pub fn monotonicity_violation(&self, tol: f64) -> Option<(usize, f64)> {
        self.transport_map()
            .windows(2)
            .enumerate()
            .find_map(|(i, w)| {
                let drop = w[0] - w[1];
                (drop > tol * (1.0 + w[0].abs())).then_some((i + 1, drop))
            })
    }

    fn pointwise<F: Fn(f64, f64, f64) -> f64>(&self, op: F) -> Self {
        let values = self
            .values
            .iter()
            .zip(self.reference.grid())
            .zip(self.reference.sqrt_density())
            .map(|((&v, &x), &s)| op(v, x, s))
            .collect();
        Self {
            values,
            reference: Arc::clone(&self.reference),
        }
    }
}

/// Strictly increasing piecewise-linear map, invertible by swapping knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotoneMap {
    knots_x: Vec<f64>,
    knots_y: Vec<f64>,
}

impl MonotoneMap {
    pub fn new(knots_x: Vec<f64>, knots_y: Vec<f64>) -> Result<Self> {
        let increasing = |v: &[f64]| v.windows(2).all(|w| w[1] > w[0]);
        if knots_x.len() < 2
            || knots_x.len() != knots_y.len()
            || knots_x.iter().chain(&knots_y).any(|v| !v.is_finite())
            || !increasing(&knots_x)
            || !increasing(&knots_y)
        {
            return Err(CdtError::BadKnots);
        }
        Ok(Self { knots_x, knots_y })
    }

    /// Tabulates `f` at `n` equally spaced knots on `[lo, hi]`.
    pub fn from_fn<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, n: usize) -> Result<Self> {
        let n = n.max(2);
        let xs: Vec<f64> = (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect();
        let ys = xs.iter().map(|&x| f(x)).collect();
        Self::new(xs, ys)
    }

    pub fn identity(lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo, hi], vec![lo, hi])
    }

    pub fn knots_x(&self) -> &[f64] {
        &self.knots_x
    }

    pub fn knots_y(&self) -> &[f64] {
        &self.knots_y
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.knots_x[0], *self.knots_x.last().unwrap())
    }

    pub fn range(&self) -> (f64, f64) {
        (self.knots_y[0], *self.knots_y.last().unwrap())
    }

    pub fn inverse(&self) -> Self {
        Self {
            knots_x: self.knots_y.clone(),
            knots_y: self.knots_x.clone(),
        }
    }

    /// Segment `i` with `x` in `(x_i, x_{i+1}]`; the first segment also owns
    /// its left end.
    fn segment(&self, x: f64) -> usize {
        let j = self.knots_x.partition_point(|&k| k < x);
        j.clamp(1, self.knots_x.len() - 1) - 1
    }

    /// Map value, or `None` outside the knot span.
    pub fn apply(&self, x: f64) -> Option<f64> {
        let (lo, hi) = self.domain();
        if !(x >= lo && x <= hi) {
            return None;
        }
        let i = self.segment(x);
        let (x0, x1) = (self.knots_x[i], self.knots_x[i + 1]);
        let (y0, y1) = (self.knots_y[i], self.knots_y[i + 1]);
        Some(y0 + (y1 - y0) * (x - x0) / (x1 - x0))
    }

    /// Slope at `x`; at a knot this is the slope of the segment to its left.
    pub fn slope(&self, x: f64) -> Option<f64> {
        let (lo, hi) = self.domain();
        if !(x >= lo && x <= hi) {
            return None;
        }
        let i = self.segment(x);
        Some((self.knots_y[i + 1] - self.knots_y[i]) / (self.knots_x[i + 1] - self.knots_x[i]))
    }
}

/// Forward transform of `signal` on the reference grid.
///
/// The reference CDF is evaluated at the grid points and the signal CDF is
/// inverted at those levels in one merged sweep over both breakpoint lists,
/// so the cost is `O(N + M)`.
pub fn forward(signal: &DiscreteDensity, reference: &Arc<Reference>) -> Result<CdtSignal> {
    let levels = reference.cdf.eval_sorted(&reference.grid);
    let map = signal.cdf().quantiles_sorted(&levels)?;
    CdtSignal::from_map(&map, Arc::clone(reference))
}

/// Forward transform of many signals; results keep input order.
pub fn forward_batch(
    signals: &[DiscreteDensity],
    reference: &Arc<Reference>,
) -> Vec<Result<CdtSignal>> {
    signals.par_iter().map(|s| forward(s, reference)).collect()
}

/// Output grid for [`inverse`]: `bins` equal cells on `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutputGrid {
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
}

impl OutputGrid {
    pub fn new(lo: f64, hi: f64, bins: usize) -> Self {
        Self { lo, hi, bins }
    }

    /// The grid a density already lives on.
    pub fn of(d: &DiscreteDensity) -> Self {
        let (lo, hi) = d.domain();
        Self::new(lo, hi, d.len())
    }

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / self.bins as f64
    }
}

/// Reconstructs the transport map from the grid samples, extended linearly
/// to the ends of the reference domain, with flat runs merged.
fn recovered_map(t: &CdtSignal) -> Result<MonotoneMap> {
    if let Some((index, drop)) = t.monotonicity_violation(MONOTONE_TOLERANCE) {
        return Err(CdtError::NonMonotone { index, drop });
    }
    let grid = t.grid();
    let map = t.transport_map();
    let m = grid.len();
    let (lo, hi) = t.reference.density.domain();

    let lead = (map[1] - map[0]) / (grid[1] - grid[0]);
    let tail = (map[m - 1] - map[m - 2]) / (grid[m - 1] - grid[m - 2]);
    let mut xs = Vec::with_capacity(m + 2);
    let mut ys = Vec::with_capacity(m + 2);
    let mut push = |x: f64, y: f64| {
        if ys.last().is_none_or(|&last| y > last) {
            xs.push(x);
            ys.push(y);
        }
    };
    push(lo, map[0] - lead.max(0.0) * (grid[0] - lo));
    for (&x, &y) in grid.iter().zip(&map) {
        push(x, y);
    }
    push(hi, map[m - 1] + tail.max(0.0) * (hi - grid[m - 1]));
    MonotoneMap::new(xs, ys).map_err(|_| CdtError::NonMonotone { index: 0, drop: 0.0 })
}

/// Inverse transform: `I1(y) = (f^-1)'(y) * I0(f^-1(y))` with `f` the
/// piecewise-linear map through the grid samples. Each output bin receives
/// the exact integral of that expression over the bin, `J0(f^-1(y_hi)) -
/// J0(f^-1(y_lo))`, so the slope discontinuities at the knots need no
/// special treatment. The result is renormalized to unit mass.
pub fn inverse(t: &CdtSignal, out: &OutputGrid) -> Result<DiscreteDensity> {
    let inv = recovered_map(t)?.inverse();
    let (y_lo, y_hi) = inv.domain();
    let cdf = t.reference.density.cdf();
    let spacing = out.spacing();
    let reconstructed = |y: f64| {
        if y <= y_lo {
            0.0
        } else if y >= y_hi {
            1.0
        } else {
            cdf.eval(inv.apply(y).unwrap_or(y_hi))
        }
    };
    let levels: Vec<f64> = (0..=out.bins)
        .map(|j| reconstructed(out.lo + j as f64 * spacing))
        .collect();
    let raw: Vec<f64> = levels
        .windows(2)
        .map(|w| (w[1] - w[0]).max(0.0) / spacing)
        .collect();
    Ok(DiscreteDensity::from_samples(
        &raw,
        out.lo + 0.5 * spacing,
        spacing,
        0.0,
    )?)
}

/// Transform of the signal translated by `mu`: `t + mu * sqrt(I0)`.
pub fn translate_oracle(t: &CdtSignal, mu: f64) -> CdtSignal {
    t.pointwise(|v, _, s| v + mu * s)
}

/// Transform of the dilated signal `a * I1(a x)`:
/// `(t - x (a - 1) sqrt(I0)) / a`.
pub fn scale_oracle(t: &CdtSignal, a: f64) -> Result<CdtSignal> {
    if !(a.is_finite() && a > 0.0) {
        return Err(CdtError::NonPositiveScale(a));
    }
    Ok(t.pointwise(|v, x, s| (v - x * (a - 1.0) * s) / a))
}

/// Transform of the density whose CDF is `J1 ∘ g`, given `g^-1`:
/// `(g^-1(t / sqrt(I0) + x) - x) sqrt(I0)`.
pub fn compose_oracle(t: &CdtSignal, g_inv: &MonotoneMap) -> Result<CdtSignal> {
    let (lo, hi) = g_inv.domain();
    let map = t.transport_map();
    let composed = map
        .iter()
        .map(|&f| g_inv.apply(f).ok_or(CdtError::RangeMismatch { value: f, lo, hi }))
        .collect::<Result<Vec<_>>>()?;
    CdtSignal::from_map(&composed, Arc::clone(&t.reference))
}

/// Weighted L2 norm of the transform: the 2-Wasserstein distance between the
/// reference and the signal.
pub fn transport_norm(t: &CdtSignal) -> f64 {
    let w = t.reference.weight();
    (w * t.values.iter().map(|v| v * v).sum::<f64>()).sqrt()
}

/// Weighted L2 distance between two transforms on the same reference: the
/// 2-Wasserstein distance between the underlying densities.
pub fn transport_distance(t1: &CdtSignal, t2: &CdtSignal) -> Result<f64> {
    if !t1.reference.same_as(&t2.reference) {
        return Err(CdtError::ReferenceMismatch);
    }
    let w = t1.reference.weight();
    let sq: f64 = t1
        .values
        .iter()
        .zip(&t2.values)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok((w * sq).sqrt())
}
