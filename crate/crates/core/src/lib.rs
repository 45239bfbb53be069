//! Core library for the mlndash dashboard back end.
//!
//! Three loosely coupled modules exchange only parameters and file handles:
//!
//! * [`ingestion`] acquires, cleans and consolidates the tabular inputs.
//! * [`mln`] builds homogeneous multilayer-network layers over counties and
//!   runs Louvain community detection on them.
//! * [`viz`] turns base data and analysis results into visualization payloads
//!   and fronts them with a persistent, hash-indexed materialization cache.
//!
//! [`demo`] produces a synthetic data set that exercises all of them.

pub mod demo;
pub mod ingestion;
pub mod mln;
pub mod period;
pub mod viz;

pub use period::{DateRange, Period, PeriodError};
