//! Distances, restricted full matching, and covariate balance.

mod balance;
mod distance;
pub mod flow;
mod full_match;

use std::collections::HashMap;
use std::io;

use thiserror::Error;

use crate::dataset::{Dataset, DatasetError};

pub use balance::{standardized_differences, BalanceReport, BalanceRow, TierThresholds};
pub use distance::{apply_caliper, average_ranks, rank_mahalanobis, DistanceMatrix};
pub use full_match::{full_match, FullMatch};

#[derive(Debug, Error)]
pub enum MatchingError {
    #[error("no covariates given for the distance")]
    NoCovariates,
    #[error("covariate `{0}` takes a single value; ranks carry no information")]
    ConstantCovariate(String),
    #[error("rank covariance is singular: `{column}` is collinear with {partners:?}")]
    SingularCovariance {
        column: String,
        partners: Vec<String>,
    },
    #[error("matching needs at least one treated and one control unit")]
    EmptyArm,
    #[error("exact-match level `{level}` has units from one arm only: {units:?}")]
    SingleArmKey { level: String, units: Vec<String> },
    #[error("no full matching with at most {max_treated} treated and {max_controls} controls per stratum; try looser ratios")]
    Infeasible {
        max_treated: usize,
        max_controls: usize,
    },
    #[error("ratio caps must be positive, got {max_treated}:{max_controls}")]
    InvalidRatio {
        max_treated: usize,
        max_controls: usize,
    },
    #[error("covariate `{0}` has zero pooled standard deviation but unequal arm means")]
    ZeroPooledSd(String),
    #[error("invalid stratification: {0}")]
    InvalidStratification(String),
    #[error(transparent)]
    Data(#[from] DatasetError),
}

pub type Result<T> = std::result::Result<T, MatchingError>;

/// One matched set; `members` are dataset positions in ascending order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stratum {
    pub members: Vec<usize>,
    /// Number of treated members.
    pub treated: usize,
    pub size: usize,
    /// Exact-match key shared by all members; empty without exact matching.
    pub key: String,
}

impl Stratum {
    pub fn new(members: Vec<usize>, treated: usize, key: String) -> Self {
        Self {
            size: members.len(),
            members,
            treated,
            key,
        }
    }

    pub fn controls(&self) -> usize {
        self.size - self.treated
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stratification {
    pub strata: Vec<Stratum>,
    pub max_treated: usize,
    pub max_controls: usize,
}

impl Stratification {
    pub fn matched_units(&self) -> usize {
        self.strata.iter().map(|s| s.size).sum()
    }

    /// Check the full-matching shape: disjoint strata, both arms present,
    /// one side a singleton, and ratio caps respected.
    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for (i, s) in self.strata.iter().enumerate() {
            let bad = |why: &str| Err(MatchingError::InvalidStratification(format!("stratum {i}: {why}")));
            if s.size != s.members.len() {
                return bad("size does not match member count");
            }
            if s.treated == 0 || s.controls() == 0 {
                return bad("needs both arms");
            }
            if s.treated.min(s.controls()) != 1 {
                return bad("neither arm is a singleton");
            }
            if s.treated > self.max_treated || s.controls() > self.max_controls {
                return bad("exceeds ratio caps");
            }
            for &m in &s.members {
                if !seen.insert(m) {
                    return bad("unit appears in two strata");
                }
            }
        }
        Ok(())
    }

    /// Sum over strata of distances from each many-side member to the
    /// one-side member (the single pair distance for 1:1 strata).
    pub fn objective(&self, dm: &DistanceMatrix) -> f64 {
        let row: HashMap<usize, usize> = dm.treated.iter().enumerate().map(|(r, &p)| (p, r)).collect();
        let col: HashMap<usize, usize> = dm.control.iter().enumerate().map(|(c, &p)| (p, c)).collect();
        let mut total = 0.0;
        for s in &self.strata {
            let ts: Vec<usize> = s.members.iter().filter_map(|p| row.get(p).copied()).collect();
            let cs: Vec<usize> = s.members.iter().filter_map(|p| col.get(p).copied()).collect();
            let pairs: Vec<(usize, usize)> = if ts.len() == 1 {
                cs.iter().map(|&c| (ts[0], c)).collect()
            } else {
                ts.iter().map(|&t| (t, cs[0])).collect()
            };
            for (t, c) in pairs {
                total += dm.get(t, c).unwrap_or(f64::INFINITY);
            }
        }
        total
    }

    /// Keep only strata whose key equals `key`.
    pub fn filter_key(&self, key: &str) -> Stratification {
        Stratification {
            strata: self.strata.iter().filter(|s| s.key == key).cloned().collect(),
            ..self.clone()
        }
    }

    /// `id,stratum` rows, one per matched unit, in stratum order.
    pub fn write_csv<W: io::Write>(&self, ds: &Dataset, writer: W) -> io::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["id", "stratum"])?;
        for (i, s) in self.strata.iter().enumerate() {
            for &m in &s.members {
                w.write_record([ds.units[m].id.as_str(), &i.to_string()])?;
            }
        }
        w.flush()
    }

    /// Rebuild strata from `id,stratum` rows against `ds`.
    pub fn read_csv<R: io::Read>(
        ds: &Dataset,
        reader: R,
        max_treated: usize,
        max_controls: usize,
    ) -> Result<Stratification> {
        let index: HashMap<&str, usize> =
            ds.units.iter().enumerate().map(|(i, u)| (u.id.as_str(), i)).collect();
        let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        let mut rdr = csv::Reader::from_reader(reader);
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| MatchingError::InvalidStratification(e.to_string()))?;
            let id = rec.get(0).unwrap_or("");
            let pos = *index.get(id).ok_or_else(|| {
                MatchingError::InvalidStratification(format!("row {}: unknown id `{id}`", row + 1))
            })?;
            let stratum: usize = rec.get(1).unwrap_or("").trim().parse().map_err(|_| {
                MatchingError::InvalidStratification(format!("row {}: bad stratum index", row + 1))
            })?;
            groups.entry(stratum).or_default().push(pos);
        }
        let strata = groups
            .into_values()
            .map(|mut members| {
                members.sort_unstable();
                let treated = members.iter().filter(|&&p| ds.units[p].treated).count();
                let key = ds.units[members[0]].exact_key.clone();
                Stratum::new(members, treated, key)
            })
            .collect();
        let s = Stratification {
            strata,
            max_treated,
            max_controls,
        };
        s.validate()?;
        Ok(s)
    }
}
