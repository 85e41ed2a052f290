//! Latent hub-network estimation for matrix-variate flow time series.
//!
//! A directed flow network observed over time (trade volumes, passenger
//! counts, transfer amounts) is a sequence of `n x n` relational matrices.
//! This crate estimates the low-dimensional hub structure driving such a
//! sequence: a loading matrix connecting the `n` observed entities to `r`
//! latent hubs, and an `r x r` factor series carrying the flows among the
//! hubs. Estimation is eigen-analysis of accumulated lagged auto-cross-moment
//! matrices, so it keys on temporal dependence rather than on any
//! distributional assumption.
//!
//! The pieces, in pipeline order:
//!
//! * [`series`]: the flow panel itself, long-CSV ingestion, mirror
//!   imputation, three-month smoothing, windows.
//! * [`moments`]: lagged moment accumulation (fast algebraic path plus a
//!   brute-force oracle path).
//! * [`spectral`]: symmetric eigendecomposition, ratio and scree rank
//!   selection, loading extraction.
//! * [`estimator`]: shared-loading and two-sided model fits with factors,
//!   residuals, and variance explained.
//! * [`rotation`]: varimax, sum-to-one normalization, hub alignment.
//! * [`analysis`]: rolling-window driver, Ward clustering, hub-network
//!   summaries.
//! * [`export`]: plot-ready CSV artifacts and their readers.
//! * [`simgen`]: synthetic generators with known ground truth and the
//!   subspace-distance metric used to score estimates.

pub mod analysis;
pub mod error;
pub mod estimator;
pub mod export;
pub mod moments;
pub mod rotation;
pub mod series;
pub mod simgen;
pub mod spectral;

pub use error::{Error, Result};
