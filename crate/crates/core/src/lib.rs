//! Missing-value imputation for multivariate time series.
//!
//! The pipeline has two models. [`mim`] fits a bank of Gaussian radial basis
//! functions, shared across variables, stage by stage on the observed cells,
//! which yields a continuous function per variable ([`grbf`]). [`mirnn`] is a
//! bidirectional recurrent imputer that consumes that function alongside the
//! mask and time gaps. [`data`] holds loaders, missingness injection and the
//! Lorenz-96 generator; [`eval`] holds metrics, baselines and the ablation
//! harness.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod eval;
pub mod grbf;
pub mod mim;
pub mod mirnn;
pub mod par;
pub mod series;

pub use error::{Error, Result};
pub use grbf::{cf_eval, cf_eval_series, grbf_eval, impute_with_cf, ContinuousFunction, GrbfBank};
pub use series::{
    denormalize, normalize, split_windows, time_gap, MultivariateSeries, NormalizationStats,
    TimeGapMatrix,
};
