//! Piecewise-constant (degree-zero B-spline) densities on uniform grids.
//!
//! A [`DiscreteDensity`] holds samples `c_1..c_N` at bin centers
//! `x_i = grid_start + (i - 1) * spacing`. The continuous density is
//! `sum_i c_i * box(x - x_i)` on `[x_1 - r/2, x_N + r/2]`, so its CDF is
//! exactly piecewise linear with breakpoints at the bin edges.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Floor added to every bin before normalization unless told otherwise.
pub const DEFAULT_EPSILON_FLOOR: f64 = 1e-8;

/// Tolerance on the unit-mass invariant.
pub const MASS_TOLERANCE: f64 = 1e-12;

/// Half-width, in standard deviations, of the window unbounded densities are
/// truncated to before discretization.
pub const DEFAULT_TRUNCATION_SDS: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DensityError {
    #[error("every sample is zero or negative; nothing to normalize")]
    AllZero,
    #[error("non-finite input at position {0}")]
    NonFinite(usize),
    #[error("a density needs at least 2 samples, got {0}")]
    TooShort(usize),
    #[error("grid spacing must be positive and finite, got {0}")]
    BadSpacing(f64),
    #[error("epsilon floor must be finite and nonnegative, got {0}")]
    BadFloor(f64),
    #[error("probability level {0} is outside [0, 1]")]
    OutOfRange(f64),
    #[error("point {x} is outside the density domain [{lo}, {hi}]")]
    OutOfDomain { x: f64, lo: f64, hi: f64 },
    #[error("densities live on different grids")]
    GridMismatch,
}

pub type Result<T> = std::result::Result<T, DensityError>;

/// Nonnegative density sampled at the centers of a uniform grid, unit total mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDensity {
    values: Vec<f64>,
    grid_start: f64,
    spacing: f64,
}

impl DiscreteDensity {
    /// Builds a density from raw samples: negatives are clipped to zero, the
    /// floor is added to every bin and the result is renormalized to unit mass.
    pub fn from_samples(
        raw: &[f64],
        grid_start: f64,
        spacing: f64,
        epsilon_floor: f64,
    ) -> Result<Self> {
        if let Some(i) = raw.iter().position(|v| !v.is_finite()) {
            return Err(DensityError::NonFinite(i));
        }
        if !grid_start.is_finite() {
            return Err(DensityError::NonFinite(0));
        }
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(DensityError::BadSpacing(spacing));
        }
        if !(epsilon_floor.is_finite() && epsilon_floor >= 0.0) {
            return Err(DensityError::BadFloor(epsilon_floor));
        }
        if raw.len() < 2 {
            return Err(DensityError::TooShort(raw.len()));
        }
        let mut values: Vec<f64> = raw.iter().map(|&v| v.max(0.0) + epsilon_floor).collect();
        let total: f64 = values.iter().sum::<f64>() * spacing;
        if total <= 0.0 {
            return Err(DensityError::AllZero);
        }
        values.iter_mut().for_each(|v| *v /= total);
        Ok(Self {
            values,
            grid_start,
            spacing,
        })
    }

    /// Raw samples covering `[lo, hi]` with `raw.len()` equal bins.
    pub fn on_interval(raw: &[f64], lo: f64, hi: f64, epsilon_floor: f64) -> Result<Self> {
        let n = raw.len().max(1) as f64;
        let spacing = (hi - lo) / n;
        Self::from_samples(raw, lo + 0.5 * spacing, spacing, epsilon_floor)
    }

    /// Samples `pdf` at the `n` bin centers of `[lo, hi]` and normalizes.
    pub fn from_fn<F: Fn(f64) -> f64>(
        pdf: F,
        lo: f64,
        hi: f64,
        n: usize,
        epsilon_floor: f64,
    ) -> Result<Self> {
        let spacing = (hi - lo) / n as f64;
        let raw: Vec<f64> = (0..n)
            .map(|i| pdf(lo + (i as f64 + 0.5) * spacing))
            .collect();
        Self::from_samples(&raw, lo + 0.5 * spacing, spacing, epsilon_floor)
    }

    /// Normal density truncated to `mean ± DEFAULT_TRUNCATION_SDS * sd`,
    /// discretized with `n` bins.
    pub fn gaussian(mean: f64, sd: f64, n: usize) -> Result<Self> {
        if !(sd.is_finite() && sd > 0.0) {
            return Err(DensityError::BadSpacing(sd));
        }
        let half = DEFAULT_TRUNCATION_SDS * sd;
        Self::from_fn(
            |x| (-0.5 * ((x - mean) / sd).powi(2)).exp(),
            mean - half,
            mean + half,
            n,
            0.0,
        )
    }

    /// Uniform density on `[lo, hi]` with `n` bins.
    pub fn uniform(lo: f64, hi: f64, n: usize) -> Result<Self> {
        Self::on_interval(&vec![1.0; n], lo, hi, 0.0)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Center of the first bin.
    pub fn grid_start(&self) -> f64 {
        self.grid_start
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Closed support interval `[x_1 - r/2, x_N + r/2]`.
    pub fn domain(&self) -> (f64, f64) {
        let lo = self.grid_start - 0.5 * self.spacing;
        (lo, lo + self.spacing * self.values.len() as f64)
    }

    pub fn center(&self, i: usize) -> f64 {
        self.grid_start + i as f64 * self.spacing
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.center(i)).collect()
    }

    /// The `N + 1` bin edges.
    pub fn edges(&self) -> Vec<f64> {
        let lo = self.domain().0;
        (0..=self.len())
            .map(|i| lo + i as f64 * self.spacing)
            .collect()
    }

    /// Probability mass of each bin.
    pub fn masses(&self) -> Vec<f64> {
        self.values.iter().map(|v| v * self.spacing).collect()
    }

    pub fn total_mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.spacing
    }

    /// Density value at `x`. Points on an interior bin edge take the right
    /// bin's value; the upper domain end belongs to the last bin.
    pub fn evaluate(&self, x: f64) -> Result<f64> {
        let (lo, hi) = self.domain();
        if !(x >= lo && x <= hi) {
            return Err(DensityError::OutOfDomain { x, lo, hi });
        }
        Ok(self.values[self.bin_index(x)])
    }

    /// Bin containing `x`, clamped to the grid.
    pub(crate) fn bin_index(&self, x: f64) -> usize {
        let lo = self.domain().0;
        let k = ((x - lo) / self.spacing).floor();
        if k <= 0.0 {
            0
        } else {
            (k as usize).min(self.len() - 1)
        }
    }

    /// Exact piecewise-linear CDF.
    pub fn cdf(&self) -> Cdf {
        let edges = self.edges();
        let mut cumulative = Vec::with_capacity(self.len() + 1);
        let mut acc = 0.0;
        cumulative.push(0.0);
        for m in self.masses() {
            acc += m;
            cumulative.push(acc);
        }
        // Pin the end to exactly one so that u = 1 maps to the domain end.
        let total = acc;
        for c in cumulative.iter_mut() {
            *c /= total;
        }
        *cumulative.last_mut().unwrap() = 1.0;
        Cdf { edges, cumulative }
    }

    /// Density of `X + mu`: the same samples on a grid shifted by `mu`.
    pub fn translated(&self, mu: f64) -> Self {
        Self {
            values: self.values.clone(),
            grid_start: self.grid_start + mu,
            spacing: self.spacing,
        }
    }

    /// The density `a * I(a x)` for `a > 0`, i.e. the law of `X / a`.
    pub fn dilated(&self, a: f64) -> Result<Self> {
        if !(a.is_finite() && a > 0.0) {
            return Err(DensityError::BadSpacing(a));
        }
        Ok(Self {
            values: self.values.iter().map(|v| v * a).collect(),
            grid_start: self.grid_start / a,
            spacing: self.spacing / a,
        })
    }

    fn same_grid(&self, other: &Self) -> bool {
        self.len() == other.len()
            && (self.grid_start - other.grid_start).abs() <= 1e-12 * self.spacing.max(1.0)
            && (self.spacing - other.spacing).abs() <= 1e-12 * self.spacing
    }

    /// `(1 - weight) * self + weight * other` on a shared grid.
    pub fn blend(&self, other: &Self, weight: f64) -> Result<Self> {
        if !self.same_grid(other) {
            return Err(DensityError::GridMismatch);
        }
        let raw: Vec<f64> = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (1.0 - weight) * a + weight * b)
            .collect();
        Self::from_samples(&raw, self.grid_start, self.spacing, 0.0)
    }

    /// L1 distance between two densities on the same grid.
    pub fn l1_distance(&self, other: &Self) -> Result<f64> {
        if !self.same_grid(other) {
            return Err(DensityError::GridMismatch);
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            * self.spacing)
    }

    /// Mean of the piecewise-constant density.
    pub fn mean(&self) -> f64 {
        self.masses()
            .iter()
            .enumerate()
            .map(|(i, m)| m * self.center(i))
            .sum()
    }

    /// Variance of the piecewise-constant density, including the in-bin
    /// spread `r^2 / 12`.
    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        let second: f64 = self
            .masses()
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let c = self.center(i);
                m * (c * c + self.spacing * self.spacing / 12.0)
            })
            .sum();
        second - mean * mean
    }
}

/// Piecewise-linear cumulative distribution function.
#[derive(Debug, Clone, PartialEq)]
pub struct Cdf {
    edges: Vec<f64>,
    cumulative: Vec<f64>,
}

impl Cdf {
    pub fn breakpoints(&self) -> &[f64] {
        &self.edges
    }

    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.edges[0], *self.edges.last().unwrap())
    }

    /// CDF value at `x`; 0 left of the domain and 1 right of it.
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.edges.len();
        if x <= self.edges[0] {
            return 0.0;
        }
        if x >= self.edges[n - 1] {
            return 1.0;
        }
        // first edge strictly greater than x
        let j = self.edges.partition_point(|&e| e <= x);
        self.interpolate(j - 1, x)
    }

    /// Evaluates at nondecreasing points with a single forward sweep.
    pub fn eval_sorted(&self, xs: &[f64]) -> Vec<f64> {
        let n = self.edges.len();
        let mut j = 0usize;
        xs.iter()
            .map(|&x| {
                if x <= self.edges[0] {
                    return 0.0;
                }
                if x >= self.edges[n - 1] {
                    return 1.0;
                }
                while self.edges[j + 1] <= x {
                    j += 1;
                }
                self.interpolate(j, x)
            })
            .collect()
    }

    fn interpolate(&self, seg: usize, x: f64) -> f64 {
        let (e0, e1) = (self.edges[seg], self.edges[seg + 1]);
        let (c0, c1) = (self.cumulative[seg], self.cumulative[seg + 1]);
        c0 + (c1 - c0) * (x - e0) / (e1 - e0)
    }

    /// Generalized inverse `inf { x : F(x) >= u }`. On zero-density plateaus
    /// this is the plateau's left endpoint.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&u) {
            return Err(DensityError::OutOfRange(u));
        }
        let j = self.cumulative.partition_point(|&c| c < u);
        Ok(self.invert_segment(j, u))
    }

    /// Quantiles of nondecreasing levels with a single forward sweep, so the
    /// cost is linear in the number of levels plus the number of bins.
    pub fn quantiles_sorted(&self, levels: &[f64]) -> Result<Vec<f64>> {
        let last = self.cumulative.len();
        let mut j = 0usize;
        let mut prev = 0.0;
        let mut out = Vec::with_capacity(levels.len());
        for &u in levels {
            if !(0.0..=1.0).contains(&u) {
                return Err(DensityError::OutOfRange(u));
            }
            if u < prev {
                // unsorted input: restart the sweep
                j = 0;
            }
            prev = u;
            while j < last && self.cumulative[j] < u {
                j += 1;
            }
            out.push(self.invert_segment(j, u));
        }
        Ok(out)
    }

    /// `j` is the first index with `cumulative[j] >= u`.
    fn invert_segment(&self, j: usize, u: f64) -> f64 {
        if j == 0 {
            return self.edges[0];
        }
        if j >= self.cumulative.len() {
            return *self.edges.last().unwrap();
        }
        let (c0, c1) = (self.cumulative[j - 1], self.cumulative[j]);
        let (e0, e1) = (self.edges[j - 1], self.edges[j]);
        // c0 < u <= c1, so the segment carries positive mass
        let t = ((u - c0) / (c1 - c0)).clamp(0.0, 1.0);
        e0 + t * (e1 - e0)
    }
}
