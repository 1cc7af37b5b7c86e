//! Cumulative distribution transform (CDT) toolkit for 1-D densities.
//!
//! - [`density`]: piecewise-constant densities, exact CDFs and quantiles.
//! - [`cdt`]: forward and inverse transforms, property oracles, transport distances.
//! - [`classify`]: linear classifiers, separability certificates, cross-validation.
//! - [`datagen`]: synthetic classes under monotone confounds.
//! - [`features`]: energy signals, histograms and CSV ingestion.

pub mod cdt;
pub mod classify;
pub mod datagen;
pub mod density;
pub mod features;

pub use cdt::{CdtSignal, MonotoneMap, OutputGrid, Reference};
pub use density::{Cdf, DiscreteDensity};
