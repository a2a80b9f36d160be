//! Rank-based Mahalanobis distances and the propensity score caliper.

use crate::dataset::Dataset;
use crate::linalg::{collinear_partners, Cholesky};

use super::{MatchingError, Result};

/// Treated-by-control distances. `None` marks a forbidden pairing.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    /// Positions (in the source dataset) of the treated units, one per row.
    pub treated: Vec<usize>,
    /// Positions of the control units, one per column.
    pub control: Vec<usize>,
    pub treated_ids: Vec<String>,
    pub control_ids: Vec<String>,
    entries: Vec<Option<f64>>,
}

impl DistanceMatrix {
    /// Build from explicit entries, row-major over `treated x control`.
    pub fn from_entries(
        treated: Vec<usize>,
        control: Vec<usize>,
        entries: Vec<Option<f64>>,
    ) -> Self {
        assert_eq!(entries.len(), treated.len() * control.len());
        debug_assert!(entries.iter().flatten().all(|d| *d >= 0.0));
        Self {
            treated_ids: treated.iter().map(|i| format!("t{i}")).collect(),
            control_ids: control.iter().map(|i| format!("c{i}")).collect(),
            treated,
            control,
            entries,
        }
    }

    pub fn with_ids(mut self, treated_ids: Vec<String>, control_ids: Vec<String>) -> Self {
        assert_eq!(treated_ids.len(), self.treated.len());
        assert_eq!(control_ids.len(), self.control.len());
        self.treated_ids = treated_ids;
        self.control_ids = control_ids;
        self
    }

    pub fn n_treated(&self) -> usize {
        self.treated.len()
    }

    pub fn n_control(&self) -> usize {
        self.control.len()
    }

    /// Distance between treated row `t` and control column `c`.
    pub fn get(&self, t: usize, c: usize) -> Option<f64> {
        self.entries[t * self.control.len() + c]
    }

    pub fn set(&mut self, t: usize, c: usize, value: Option<f64>) {
        let nc = self.control.len();
        self.entries[t * nc + c] = value;
    }

    pub fn mean_finite(&self) -> f64 {
        let (sum, count) = self
            .entries
            .iter()
            .flatten()
            .fold((0.0, 0usize), |(s, n), d| (s + d, n + 1));
        if count == 0 {
            0.0
        } else {
            sum / count as f64
        }
    }

    /// Forbid every pairing whose units carry different keys.
    /// `keys` is indexed by dataset position.
    pub fn forbid_across<K: PartialEq>(&mut self, keys: &[K]) {
        for t in 0..self.treated.len() {
            for c in 0..self.control.len() {
                if keys[self.treated[t]] != keys[self.control[c]] {
                    self.set(t, c, None);
                }
            }
        }
    }
}

/// Average ranks (1-based); tied values share the mean of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn sample_cov(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - ma) * (y - mb))
        .sum::<f64>()
        / (n - 1.0)
}

/// Rank-based Mahalanobis distance between every treated and control unit.
///
/// Each covariate is replaced by its average ranks over all units. The rank
/// covariance matrix is rescaled so that every diagonal entry equals the
/// variance of untied ranks `1..N`, which keeps heavily tied covariates from
/// being up-weighted. Distances are the (non-squared) Mahalanobis norms of
/// rank differences under that matrix.
pub fn rank_mahalanobis(ds: &Dataset, covariates: &[String]) -> Result<DistanceMatrix> {
    let n = ds.len();
    let k = covariates.len();
    if k == 0 {
        return Err(MatchingError::NoCovariates);
    }
    let mut ranks = Vec::with_capacity(k);
    for name in covariates {
        let col = ds.column(name)?;
        let first = col.first().copied();
        if col.iter().all(|v| Some(*v) == first) {
            return Err(MatchingError::ConstantCovariate(name.clone()));
        }
        ranks.push(average_ranks(&col));
    }

    let untied = (n as f64) * (n as f64 + 1.0) / 12.0;
    let mut cov = vec![0.0; k * k];
    for a in 0..k {
        for b in a..k {
            let v = sample_cov(&ranks[a], &ranks[b]);
            cov[a * k + b] = v;
            cov[b * k + a] = v;
        }
    }
    let ratio: Vec<f64> = (0..k).map(|a| (untied / cov[a * k + a]).sqrt()).collect();
    for a in 0..k {
        for b in 0..k {
            cov[a * k + b] *= ratio[a] * ratio[b];
        }
    }
    let chol = Cholesky::factor(&cov, k, 1e-10).map_err(|e| MatchingError::SingularCovariance {
        column: covariates[e.column].clone(),
        partners: collinear_partners(&cov, k, e.column)
            .into_iter()
            .map(|i| covariates[i].clone())
            .collect(),
    })?;

    // Whitened rank vectors: |w_t - w_c| is the Mahalanobis distance.
    let whitened: Vec<Vec<f64>> = (0..n)
        .map(|i| chol.forward(&(0..k).map(|a| ranks[a][i]).collect::<Vec<_>>()))
        .collect();

    let treated: Vec<usize> = (0..n).filter(|&i| ds.units[i].treated).collect();
    let control: Vec<usize> = (0..n).filter(|&i| !ds.units[i].treated).collect();
    let mut entries = Vec::with_capacity(treated.len() * control.len());
    for &t in &treated {
        for &c in &control {
            let d2: f64 = whitened[t]
                .iter()
                .zip(&whitened[c])
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            entries.push(Some(d2.sqrt()));
        }
    }
    let ids = |v: &[usize]| v.iter().map(|&i| ds.units[i].id.clone()).collect();
    let (tids, cids) = (ids(&treated), ids(&control));
    Ok(DistanceMatrix::from_entries(treated, control, entries).with_ids(tids, cids))
}

/// Soft caliper: add `penalty` to pairs whose scores differ by more than
/// `width` standard deviations of `scores`. `scores` is indexed by dataset
/// position. A zero standard deviation leaves the matrix unchanged. The
/// default penalty is 1000 times the mean finite distance.
pub fn apply_caliper(
    dm: &DistanceMatrix,
    scores: &[f64],
    width: f64,
    penalty: Option<f64>,
) -> DistanceMatrix {
    let sd = if scores.len() > 1 {
        sample_cov(scores, scores).sqrt()
    } else {
        0.0
    };
    let mut out = dm.clone();
    if !(sd > 0.0) {
        return out;
    }
    let penalty = penalty.unwrap_or_else(|| 1000.0 * dm.mean_finite());
    let limit = width * sd;
    for t in 0..dm.n_treated() {
        for c in 0..dm.n_control() {
            if let Some(d) = dm.get(t, c) {
                if (scores[dm.treated[t]] - scores[dm.control[c]]).abs() > limit {
                    out.set(t, c, Some(d + penalty));
                }
            }
        }
    }
    out
}
