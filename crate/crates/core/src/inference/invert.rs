//! Normal-approximation tests of every null on the grid, inverted into a
//! confidence interval.

use std::io;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};
use serde::Serialize;
use statrs::function::erf::erfc;

use super::dp::WorstCaseGrid;
use super::{to_f64, InferenceError, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct GridPoint {
    pub d: i64,
    pub delta0: f64,
    pub feasible: bool,
    pub max_variance: Option<f64>,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct InferenceReport {
    pub ate_hat: f64,
    /// Exact estimate as `numerator/denominator`.
    pub ate_hat_exact: String,
    /// Worst-case SE at the feasible grid point nearest the estimate.
    pub se: Option<f64>,
    pub se_d: Option<i64>,
    pub ci: Option<[f64; 2]>,
    pub ci_d: Option<[i64; 2]>,
    pub contiguous: bool,
    pub alpha: f64,
    pub n_units: usize,
    pub n_strata: usize,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub grid: Vec<GridPoint>,
}

impl InferenceReport {
    pub fn write_grid_csv<W: io::Write>(&self, writer: W) -> io::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["d", "delta0", "feasible", "max_variance", "p"])?;
        for g in &self.grid {
            w.write_record([
                g.d.to_string(),
                g.delta0.to_string(),
                g.feasible.to_string(),
                g.max_variance.map(|v| v.to_string()).unwrap_or_default(),
                g.p.to_string(),
            ])?;
        }
        w.flush()
    }
}

fn p_value(n_ate: &BigRational, big_n: usize, d: i64, var: &BigRational) -> f64 {
    let d_rat = BigRational::from_integer(BigInt::from(d));
    if var.is_zero() {
        return if *n_ate == d_rat { 1.0 } else { 0.0 };
    }
    let diff = (n_ate - d_rat) / BigRational::from_integer(BigInt::from(big_n));
    let z = to_f64(&diff) / to_f64(var).sqrt();
    erfc(z.abs() / std::f64::consts::SQRT_2)
}

/// Test every `d/N` for `d` in `[-N, N]` against `ate_hat` and collect the
/// accepted set. Infeasible nulls get `p = 0`.
pub fn test_and_invert(
    ate_hat: &BigRational,
    grid: &WorstCaseGrid,
    alpha: f64,
) -> Result<InferenceReport> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(InferenceError::InvalidAlpha(alpha));
    }
    let big_n = grid.n_total();
    let n_ate = ate_hat * BigRational::from_integer(BigInt::from(big_n));
    let mut points = Vec::with_capacity(2 * big_n + 1);
    for d in -(big_n as i64)..=(big_n as i64) {
        let var = grid.max_variance(d);
        let p = var.as_ref().map_or(0.0, |v| p_value(&n_ate, big_n, d, v));
        points.push(GridPoint {
            d,
            delta0: d as f64 / big_n as f64,
            feasible: var.is_some(),
            max_variance: var.as_ref().map(to_f64),
            p,
        });
    }

    let accepted: Vec<i64> = points.iter().filter(|g| g.p >= alpha).map(|g| g.d).collect();
    let mut warnings = Vec::new();
    let (ci, ci_d, contiguous) = match (accepted.first(), accepted.last()) {
        (Some(&lo), Some(&hi)) => {
            let contiguous = (hi - lo + 1) as usize == accepted.len();
            if !contiguous {
                warnings.push(format!(
                    "accepted nulls do not form an interval; reporting the hull [{lo}, {hi}]/N"
                ));
            }
            (
                Some([lo as f64 / big_n as f64, hi as f64 / big_n as f64]),
                Some([lo, hi]),
                contiguous,
            )
        }
        _ => {
            warnings.push(format!("every null on the grid is rejected at alpha = {alpha}"));
            (None, None, true)
        }
    };

    // Nearest feasible grid point to N * ate_hat; ties go to the smaller d.
    let (flo, fhi) = grid.feasible_range();
    let se_d = (flo..=fhi).filter(|&d| grid.is_feasible(d)).min_by(|&a, &b| {
        let da = (&n_ate - BigRational::from_integer(BigInt::from(a))).abs();
        let db = (&n_ate - BigRational::from_integer(BigInt::from(b))).abs();
        da.cmp(&db).then(a.cmp(&b))
    });
    let se = se_d.and_then(|d| grid.max_variance(d)).map(|v| to_f64(&v).sqrt());

    Ok(InferenceReport {
        ate_hat: to_f64(ate_hat),
        ate_hat_exact: ate_hat.to_string(),
        se,
        se_d,
        ci,
        ci_d,
        contiguous,
        alpha,
        n_units: big_n,
        n_strata: grid.option_sets().len(),
        warnings,
        grid: points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::{estimate_ate, StratumObservation};

    #[test]
    fn single_pair_report() {
        let obs = [StratumObservation::new(2, 1, 1, 0).unwrap()];
        let grid = WorstCaseGrid::compute(&obs).unwrap();
        let ate = estimate_ate(&obs);
        let r = test_and_invert(&ate, &grid, 0.05).unwrap();
        let p = |d: i64| r.grid.iter().find(|g| g.d == d).unwrap().p;
        assert_eq!(p(2), 1.0);
        assert_eq!(p(-2), 0.0);
        assert!(!r.grid[0].feasible);
        assert_eq!(r.se_d, Some(2));
        assert_eq!(r.se, Some(0.0));
    }

    #[test]
    fn estimate_on_grid_with_positive_variance_has_p_one() {
        // Two pairs, one event each on the treated side of the first pair:
        // N = 4, ate_hat = 1/2, so N * ate_hat = 2 sits on the grid.
        let obs = [
            StratumObservation::new(2, 1, 1, 0).unwrap(),
            StratumObservation::new(2, 1, 0, 0).unwrap(),
        ];
        let grid = WorstCaseGrid::compute(&obs).unwrap();
        let ate = estimate_ate(&obs);
        let r = test_and_invert(&ate, &grid, 0.05).unwrap();
        let g = r.grid.iter().find(|g| g.d == 2).unwrap();
        assert!(g.max_variance.unwrap() > 0.0);
        assert_eq!(g.p, 1.0);
        let [lo, hi] = r.ci.unwrap();
        assert!(lo <= 0.5 && 0.5 <= hi);
    }

    #[test]
    fn rejects_bad_alpha() {
        let obs = [StratumObservation::new(2, 1, 1, 0).unwrap()];
        let grid = WorstCaseGrid::compute(&obs).unwrap();
        let ate = estimate_ate(&obs);
        assert!(test_and_invert(&ate, &grid, 0.0).is_err());
        assert!(test_and_invert(&ate, &grid, 1.5).is_err());
    }
}
