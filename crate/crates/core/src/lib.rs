//! Backward SDEs with logarithmic-growth generators, solved by
//! mollification, truncation and least-squares Monte Carlo, with
//! applications to stochastic control and zero-sum games.

// `!(x > 0.0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod control;
pub mod diagnostics;
pub mod driver;
pub mod error;
pub mod games;
pub mod linalg;
pub mod paths;
pub mod solver;
pub mod stats;

pub use error::{Error, Result};
