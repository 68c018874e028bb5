//! Estimation of the residual dependence index `η` of a bivariate sample.
//!
//! Marginal ranks are turned into Pareto or Fréchet pseudo-observations of
//! the componentwise minimum, whose tail index is `η`. A two-parameter
//! family of power-mean estimators (with Hill as a special case) is applied
//! to their top order statistics, optionally followed by a second-order
//! bias correction. Copula samplers with known `η` and a seeded Monte Carlo
//! harness support simulation studies.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bias;
pub mod copula;
pub mod error;
pub mod estimators;
pub mod ingest;
pub mod normal;
pub mod oracle;
pub mod pseudo;
pub mod rng;
pub mod sim;
pub mod workflow;

pub use error::{Error, Result};
