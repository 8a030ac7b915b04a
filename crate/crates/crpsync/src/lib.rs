//! Synchronization prediction for pairs of financial time series.
//!
//! The pipeline turns two daily series into supervised examples: load and
//! align OHLCV-derived channels, z-score and time-delay embed them, threshold
//! pairwise state distances into cross-recurrence plots, slide a window over
//! the common timeline so each window's plot becomes one input image, and
//! label it with the next day's entry on the full-series plot diagonal (1 when
//! the two states are within the threshold, i.e. the pair is synchronized).
//! A small convolutional network trained with class-weighted cross-entropy
//! predicts that label one step ahead; evaluation reports confusion-matrix
//! metrics over a grid of window lengths and thresholds.
//!
//! Modules follow the pipeline order: [`ingestion`] → [`embedding`] →
//! [`recurrence`] → [`dataset`] → [`nn`] → [`eval`]. [`bitmat`] carries the
//! bit-packed matrix type used throughout, [`config`] the CLI settings.

pub mod bitmat;
pub mod config;
pub mod dataset;
pub mod embedding;
pub mod eval;
pub mod ingestion;
pub mod nn;
mod par;
pub mod recurrence;
