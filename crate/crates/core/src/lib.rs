//! Correction of group-wise underrepresentation bias from two batches of data.
//!
//! A small unbiased batch is used to estimate per-group positive rates, a
//! large biased batch (positives dropped at group-dependent rates) is used to
//! estimate the matching biased rates, and the ratio of the two yields
//! inverse retention weights. A classifier is then trained on the biased
//! batch under the self-normalized reweighted risk.
//!
//! Module map:
//!
//! - [`generator`]: synthetic populations with independent group membership
//! - [`bias_filter`]: retention model and the biased-batch filter
//! - [`estimator`]: rate / retention estimates, sample-size bounds, Monte Carlo checks
//! - [`reweight`]: weights and the reweighted empirical risks
//! - [`learner`]: weighted logistic regression and exhaustive finite-class ERM
//! - [`baselines`]: resampling comparators
//! - [`stats`]: correlation and chi-square independence diagnostics
//! - [`harness`]: CSV ingestion, experiment loop and reports

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod bias_filter;
pub mod data;
pub mod error;
pub mod estimator;
pub mod generator;
pub mod harness;
pub mod learner;
pub mod par;
pub mod population;
pub mod reweight;
pub mod rng;
pub mod special;
pub mod stats;

mod fixed_point;

pub use bias_filter::{BetaVector, FilterMode};
pub use data::{Dataset, GroupMask, Row};
pub use error::{Error, Result};
pub use estimator::{BetaEstimates, RateEstimates, SampleSizeSpec, SampleSizes};
pub use generator::PopulationSpec;
pub use learner::{Classifier, LinearModel, TrainConfig};
pub use par::Parallelism;
pub use reweight::Weighting;
