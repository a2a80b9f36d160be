//! Interpretable study populations for observational studies with binary
//! outcomes.
//!
//! The crate covers three stages:
//!
//! - [`maxbox`] finds the largest closed hyperrectangle of units that a
//!   propensity-score exclusion rule ([`propensity`]) marks as having common
//!   support, giving a study population described by covariate ranges.
//! - [`matching`] builds rank-based Mahalanobis distances with a propensity
//!   caliper, solves restricted optimal full matching as a min-cost flow, and
//!   reports standardized differences.
//! - [`inference`] computes the exact worst-case randomization variance of
//!   the stratified ATE estimator over every composite null, and inverts the
//!   resulting tests into a confidence interval.
//!
//! [`pipeline`] runs everything end to end from a TOML configuration, and
//! [`synth`] generates synthetic cohorts with known potential outcomes.

pub mod dataset;
pub mod linalg;
pub mod maxbox;
pub mod matching;
pub mod propensity;
pub mod inference;
pub mod synth;
pub mod pipeline;
pub mod cli;
