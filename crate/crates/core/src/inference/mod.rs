//! Randomization inference for the ATE with binary outcomes.
//!
//! Each stratum is summarized by its size, treated count, and event counts
//! per arm. Filling in the unobserved potential outcomes only matters through
//! four counts, so each stratum contributes a short list of
//! `(delta sum, variance)` options. Combining those lists under a fixed total
//! delta sum is a knapsack-style dynamic program that gives the worst-case
//! variance for every null on the grid in one pass.

mod dp;
mod invert;
mod options;
mod oracle;
mod simulate;

use num_bigint::BigInt;
use num_rational::BigRational;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Dataset;
use crate::matching::{Stratification, Stratum};

pub use dp::{WorstCaseGrid, WorstCaseResult};
pub use invert::{test_and_invert, GridPoint, InferenceReport};
pub use options::{evaluate, stratum_options, OptionCache, StratumOption, StratumOptionSet, Witness};
pub use oracle::{
    enumerate_null_variance_oracle, eq1_variance, oracle_all, ORACLE_MAX_UNITS,
};
pub use simulate::{
    qq_check, simulate_randomization, QqCheck, QqPoint, SimulationMode, SimulationResult,
    StratumCompletion, EXHAUSTIVE_LIMIT,
};

#[derive(Debug, Error, PartialEq)]
pub enum InferenceError {
    #[error("invalid stratum (n={n}, m={m}, t1={t1}, c1={c1})")]
    InvalidStratum { n: usize, m: usize, t1: usize, c1: usize },
    #[error("no strata to analyse")]
    NoStrata,
    #[error("{units} units exceed the enumeration limit of {limit}")]
    OracleLimit { units: usize, limit: usize },
    #[error("{assignments} assignments exceed the exhaustive limit of {limit}")]
    ExhaustiveLimit { assignments: u128, limit: u128 },
    #[error("alpha must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),
    #[error("Monte-Carlo mode needs at least one draw")]
    NoDraws,
}

pub type Result<T> = std::result::Result<T, InferenceError>;

/// Per-stratum sufficient statistics of the observed experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StratumObservation {
    pub n: usize,
    pub m: usize,
    /// Treated units with an event.
    pub t1: usize,
    /// Control units with an event.
    pub c1: usize,
}

impl StratumObservation {
    pub fn new(n: usize, m: usize, t1: usize, c1: usize) -> Result<Self> {
        if m == 0 || m >= n || t1 > m || c1 > n - m {
            return Err(InferenceError::InvalidStratum { n, m, t1, c1 });
        }
        Ok(Self { n, m, t1, c1 })
    }

    pub fn from_stratum(stratum: &Stratum, ds: &Dataset) -> Result<Self> {
        let mut m = 0;
        let mut t1 = 0;
        let mut c1 = 0;
        for &p in &stratum.members {
            let u = &ds.units[p];
            if u.treated {
                m += 1;
                t1 += u.event as usize;
            } else {
                c1 += u.event as usize;
            }
        }
        Self::new(stratum.members.len(), m, t1, c1)
    }

    /// The same stratum with events and non-events swapped.
    pub fn relabeled(&self) -> Self {
        Self {
            n: self.n,
            m: self.m,
            t1: self.m - self.t1,
            c1: self.n - self.m - self.c1,
        }
    }

    /// Stratum estimate scaled by `n`: `n * (t1/m - c1/(n-m))`.
    pub fn scaled_estimate(&self) -> BigRational {
        let n = BigInt::from(self.n);
        let t = BigRational::new(BigInt::from(self.t1), BigInt::from(self.m));
        let c = BigRational::new(BigInt::from(self.c1), BigInt::from(self.n - self.m));
        (t - c) * BigRational::from_integer(n)
    }
}

pub fn observations(strat: &Stratification, ds: &Dataset) -> Result<Vec<StratumObservation>> {
    strat
        .strata
        .iter()
        .map(|s| StratumObservation::from_stratum(s, ds))
        .collect()
}

pub fn total_units(obs: &[StratumObservation]) -> usize {
    obs.iter().map(|o| o.n).sum()
}

/// Stratified difference-in-means estimate, exact.
pub fn estimate_ate(obs: &[StratumObservation]) -> BigRational {
    let n = total_units(obs);
    if n == 0 {
        return BigRational::from_integer(BigInt::from(0));
    }
    let sum: BigRational = obs.iter().map(|o| o.scaled_estimate()).sum();
    sum / BigRational::from_integer(BigInt::from(n))
}

/// [`estimate_ate`] from per-unit outcomes and treatments indexed by
/// dataset position.
pub fn estimate_ate_units(
    strat: &Stratification,
    outcomes: &[bool],
    treatments: &[bool],
) -> Result<BigRational> {
    let obs = strat
        .strata
        .iter()
        .map(|s| {
            let m = s.members.iter().filter(|&&p| treatments[p]).count();
            let t1 = s.members.iter().filter(|&&p| treatments[p] && outcomes[p]).count();
            let c1 = s.members.iter().filter(|&&p| !treatments[p] && outcomes[p]).count();
            StratumObservation::new(s.members.len(), m, t1, c1)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(estimate_ate(&obs))
}

pub fn to_f64(r: &BigRational) -> f64 {
    use num_traits::ToPrimitive;
    r.to_f64().unwrap_or(f64::NAN)
}
