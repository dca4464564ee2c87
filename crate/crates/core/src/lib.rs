//! Sequential sample size determination for binary-outcome clinical
//! prediction models.
//!
//! Recruitment is replayed in increments; at each stage a model is developed
//! under a chosen strategy, its population- and individual-level stability
//! is estimated with an optimism-correcting bootstrap, and stopping rules
//! are checked for confirmation over consecutive increments. An a-priori
//! fixed sample size calculator and a calibrated synthetic cohort generator
//! are included for comparison.

// `!(x >= 0.0)` style checks are deliberate: they reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bootstrap;
pub mod datagen;
pub mod error;
pub mod fixed_size;
pub mod io;
pub mod lasso;
pub mod matrix;
pub mod metrics;
pub mod model;
mod par;
pub mod rng;
pub mod sequential;
pub mod strategies;

pub use error::{Error, ErrorClass, Result};
