//! Simulation and Monte Carlo verification toolkit for marked renewal processes and
//! renewal cluster point processes.
//!
//! * [`pattern`]: point patterns, shifts, interval counts, cluster flattening.
//! * [`models`]: interarrival and cluster laws, process specs, delayed samplers.
//! * [`stationary`]: size-biased marks and the stationary two-sided construction.
//! * [`coupling`]: the Rademacher coupling of a stationary and a delayed process.
//! * [`estimators`]: Monte Carlo estimators and closed-form limits.
//! * [`harness`]: statistics utilities, config files and the experiment runner.

// `!(x > 0.0)` style checks are deliberate: they reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coupling;
pub mod error;
pub mod estimators;
pub mod exec;
pub mod harness;
pub mod kv;
pub mod models;
pub mod pattern;
pub mod rng;
pub mod stationary;

pub use error::{Error, Result};
pub use exec::Execution;
pub use rng::{derive_stream_id, RngStream, StreamKey};
