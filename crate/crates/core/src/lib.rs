//! Kernel two-sample and independence tests for panels of time series.

pub mod baselines;
pub mod error;
pub mod estimators;
pub mod experiment;
pub mod hypothesis;
pub mod ingest;
pub mod kernels;
pub mod panel;
pub mod plot;
pub mod power;
pub mod rng;
pub mod synth;

pub use error::{Error, ErrorClass, Result};
