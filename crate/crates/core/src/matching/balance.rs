//! Standardized differences before and after matching.

use std::io;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Tier};

use super::{MatchingError, Result, Stratification};

/// Balance threshold for each covariate tier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TierThresholds {
    pub tier1: f64,
    pub tier2: f64,
    pub tier3: f64,
}

impl Default for TierThresholds {
    fn default() -> Self {
        Self {
            tier1: 0.05,
            tier2: 0.10,
            tier3: 0.15,
        }
    }
}

impl TierThresholds {
    pub fn for_tier(&self, tier: Tier) -> f64 {
        match tier {
            Tier::One => self.tier1,
            Tier::Two => self.tier2,
            Tier::Three => self.tier3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BalanceRow {
    pub covariate: String,
    pub tier: u8,
    pub threshold: f64,
    pub before: f64,
    /// `None` when no stratification was supplied.
    pub after: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BalanceReport {
    pub rows: Vec<BalanceRow>,
}

impl BalanceReport {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn failures(&self) -> Vec<&str> {
        self.rows
            .iter()
            .filter(|r| !r.pass)
            .map(|r| r.covariate.as_str())
            .collect()
    }

    pub fn write_csv<W: io::Write>(&self, writer: W) -> io::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["covariate", "tier", "threshold", "before", "after", "pass"])?;
        for r in &self.rows {
            w.write_record([
                r.covariate.clone(),
                r.tier.to_string(),
                r.threshold.to_string(),
                r.before.to_string(),
                r.after.map(|a| a.to_string()).unwrap_or_default(),
                r.pass.to_string(),
            ])?;
        }
        w.flush()
    }

    /// Love-plot data: absolute differences with the tier threshold.
    pub fn write_love_plot<W: io::Write>(&self, writer: W) -> io::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["covariate", "abs_before", "abs_after", "tier", "threshold"])?;
        for r in &self.rows {
            w.write_record([
                r.covariate.clone(),
                r.before.abs().to_string(),
                r.after.map(|a| a.abs().to_string()).unwrap_or_default(),
                r.tier.to_string(),
                r.threshold.to_string(),
            ])?;
        }
        w.flush()
    }
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var)
}

/// Standardized differences for every covariate of `ds`.
///
/// The pooled SD is `sqrt((s_T^2 + s_C^2) / 2)` over all of `ds`. After
/// matching, the difference is the stratum-size weighted mean of within-
/// stratum treated-minus-control means, scaled by the same pooled SD.
pub fn standardized_differences(
    ds: &Dataset,
    strat: Option<&Stratification>,
    thresholds: &TierThresholds,
) -> Result<BalanceReport> {
    let treated = ds.treatments();
    if !treated.iter().any(|&t| t) || treated.iter().all(|&t| t) {
        return Err(MatchingError::EmptyArm);
    }
    let mut rows = Vec::with_capacity(ds.schema.covariates.len());
    for spec in &ds.schema.covariates {
        let col = ds.column(&spec.name)?;
        let (xt, xc): (Vec<f64>, Vec<f64>) = {
            let mut t = Vec::new();
            let mut c = Vec::new();
            for (v, &z) in col.iter().zip(&treated) {
                if z { t.push(*v) } else { c.push(*v) }
            }
            (t, c)
        };
        let (mt, vt) = mean_var(&xt);
        let (mc, vc) = mean_var(&xc);
        let pooled = ((vt + vc) / 2.0).sqrt();

        let after_num = strat.map(|s| {
            let n: usize = s.matched_units();
            s.strata
                .iter()
                .map(|st| {
                    let (mut st_t, mut st_c) = (0.0, 0.0);
                    for &p in &st.members {
                        if treated[p] {
                            st_t += col[p];
                        } else {
                            st_c += col[p];
                        }
                    }
                    let diff = st_t / st.treated as f64 - st_c / st.controls() as f64;
                    st.size as f64 / n as f64 * diff
                })
                .sum::<f64>()
        });

        let scale = |num: f64| -> Result<f64> {
            if pooled > 0.0 {
                Ok(num / pooled)
            } else if num.abs() <= 1e-12 * (1.0 + mt.abs().max(mc.abs())) {
                Ok(0.0)
            } else {
                Err(MatchingError::ZeroPooledSd(spec.name.clone()))
            }
        };
        let before = scale(mt - mc)?;
        let after = after_num.map(scale).transpose()?;
        let threshold = spec.threshold.unwrap_or_else(|| thresholds.for_tier(spec.tier));
        rows.push(BalanceRow {
            covariate: spec.name.clone(),
            tier: spec.tier.number(),
            threshold,
            before,
            after,
            pass: after.unwrap_or(before).abs() < threshold,
        });
    }
    Ok(BalanceReport { rows })
}
