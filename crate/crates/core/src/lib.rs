//! Baseline models for nonlinear system identification benchmarks.
//!
//! Every model is fitted on training and validation records only and is
//! scored by free-running simulation on held-out test records.

pub mod ar;
pub mod data;
pub mod error;
pub mod harness;
pub mod kernels;
pub mod lti;
pub mod recurrent;

pub use error::{Error, Result};
