//! Local randomization inference for regression discontinuity designs.
//!
//! Units close to the cutoff are analyzed as if they came from a randomized
//! experiment. The crate covers the whole workflow:
//!
//! - [`data`]: load and window unit-level data, derive the assignment indicator;
//! - [`assignment`]: Bernoulli, complete and block assignment mechanisms,
//!   including sampling, exact enumeration and logistic propensity fits;
//! - [`balance`]: covariate-balance randomization tests and the bandwidth scan;
//! - [`estimation`]: Neyman estimates and intervals for the local complier effect;
//! - [`sensitivity`]: bandwidth × mechanism tables and nested-window decompositions;
//! - [`simulation`]: designs with known potential outcomes and coverage studies;
//! - [`cli`]: configuration and the batch commands behind the `localrd` binary.
//!
//! Runnable walk-throughs live in the crate's `examples/` directory.

pub mod assignment;
pub mod balance;
pub mod cli;
pub mod data;
pub mod error;
pub mod estimation;
pub mod report;
pub mod rng;
pub mod sensitivity;
pub mod simulation;

pub use error::{Error, Result};
