//! Benchmark harness comparing CAPM expected-return forecasts against
//! gradient-boosted trees and feed-forward networks trained on annual
//! panels of lagged company and macroeconomic features.
//!
//! The crate is organised by pipeline stage:
//!
//! - [`dataset`]: raw price / fundamentals / macro panels, CSV I/O and a
//!   seeded synthetic generator with known ground truth.
//! - [`features`]: (asset, year) feature matrices, sequential splits,
//!   standardization and the look-ahead audit.
//! - [`capm`]: value-weighted market index, beta estimation, CAPM
//!   prediction, WACC and DCF valuation.
//! - [`boosting`]: squared-error gradient boosting and a Gaussian
//!   natural-gradient variant.
//! - [`neuralnet`]: multilayer perceptron with optional batch norm,
//!   Adam training and finite-difference gradient checking.
//! - [`hpo`]: grid search and tree-structured Parzen estimator search.
//! - [`evaluate`]: MSE and the end-to-end benchmark report.
//! - [`explain`]: exact Shapley attributions and permutation importance.
//!
//! Data-parallel loops go through [`par`], which uses rayon when the
//! `parallel` feature is enabled (the default) and plain iterators otherwise.
//! Both paths produce identical results.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod boosting;
pub mod capm;
pub mod dataset;
pub mod error;
pub mod evaluate;
pub mod explain;
pub mod features;
pub mod hpo;
pub mod neuralnet;
pub mod par;
pub mod rng;

pub use error::{Error, Result};
