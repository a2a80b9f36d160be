//! Synthetic cohorts and stratified experiments with known potential outcomes.

use std::io;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dataset::{CovariateSpec, Dataset, Schema, SchemaSpec, Tier, Unit};
use crate::inference::StratumCompletion;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid generator parameters: {0}")]
    Invalid(String),
}

/// Seed for the generator stream `name`, derived from the run seed.
pub fn substream_seed(seed: u64, name: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(name.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn round_to(x: f64, places: i32) -> f64 {
    let f = 10f64.powi(places);
    (x * f).round() / f
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CohortParams {
    pub n: usize,
    /// Number of covariates; the first two are the box covariates.
    pub covariates: usize,
    /// Shift of the treated arm along both box covariates, in SD units.
    pub overlap_gap: f64,
    /// Additive shift of the event probability under treatment.
    pub true_effect: f64,
    pub base_rate: f64,
    pub treated_fraction: f64,
    /// Log-odds slope of treatment on the box covariates.
    pub confounding: f64,
    /// Chance that a cell of a non-box covariate is blank.
    pub missing_rate: f64,
    /// Units with `x1` at or above this get exact-match key `1`.
    pub key_threshold: Option<f64>,
}

impl Default for CohortParams {
    fn default() -> Self {
        Self {
            n: 1500,
            covariates: 6,
            overlap_gap: 0.0,
            true_effect: 0.0,
            base_rate: 0.3,
            treated_fraction: 0.35,
            confounding: 0.3,
            missing_rate: 0.05,
            key_threshold: Some(1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    pub id: String,
    pub r_t: u8,
    pub r_c: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TruthSummary {
    pub seed: u64,
    pub n: usize,
    pub treated: usize,
    pub true_effect_parameter: f64,
    /// Mean of `r_t - r_c` over all generated units.
    pub sample_ate: f64,
}

#[derive(Debug, Clone)]
pub struct SyntheticCohort {
    pub dataset: Dataset,
    pub spec: SchemaSpec,
    pub truth: Vec<TruthRow>,
    pub summary: TruthSummary,
}

pub const KEY_COLUMN: &str = "key";

impl SyntheticCohort {
    pub fn write_csv<W: io::Write>(&self, writer: W) -> io::Result<()> {
        let key = self.spec.exact_key.as_deref();
        self.dataset.write_csv(writer, key)
    }

    pub fn write_truth_csv<W: io::Write>(&self, writer: W) -> io::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for row in &self.truth {
            w.serialize(row)?;
        }
        w.flush()
    }

    /// Mean effect over the units with the given ids.
    pub fn true_effect_over<'a>(&self, ids: impl IntoIterator<Item = &'a str>) -> f64 {
        let index: std::collections::HashMap<&str, &TruthRow> =
            self.truth.iter().map(|t| (t.id.as_str(), t)).collect();
        let (sum, n) = ids.into_iter().fold((0i64, 0usize), |(s, n), id| {
            let t = index[id];
            (s + t.r_t as i64 - t.r_c as i64, n + 1)
        });
        sum as f64 / n as f64
    }
}

/// Draw an observational cohort.
///
/// Covariates are standard normal; treatment follows a logistic model in
/// the first two, after which treated units are shifted by `overlap_gap`
/// along both, leaving a treated-only region when the gap is large. Event
/// probabilities depend on the observed covariates, and the two potential
/// outcomes share one uniform draw so that treatment moves the event
/// probability by `true_effect`.
pub fn generate_cohort(params: &CohortParams, seed: u64) -> Result<SyntheticCohort, SynthError> {
    let p = params;
    if p.n < 4 {
        return Err(SynthError::Invalid(format!("n must be at least 4, got {}", p.n)));
    }
    if p.covariates < 2 {
        return Err(SynthError::Invalid("need at least two covariates".into()));
    }
    for (name, v) in [("base_rate", p.base_rate), ("treated_fraction", p.treated_fraction)] {
        if !(v > 0.0 && v < 1.0) {
            return Err(SynthError::Invalid(format!("{name} must lie in (0, 1), got {v}")));
        }
    }
    if !(0.0..1.0).contains(&p.missing_rate) {
        return Err(SynthError::Invalid(format!("missing_rate must lie in [0, 1), got {}", p.missing_rate)));
    }
    if !(-1.0..=1.0).contains(&p.true_effect) || !p.overlap_gap.is_finite() {
        return Err(SynthError::Invalid("true_effect must lie in [-1, 1] and overlap_gap be finite".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(substream_seed(seed, "generator"));
    let names: Vec<String> = (1..=p.covariates).map(|k| format!("x{k}")).collect();
    let tier = |k: usize| match k {
        0 | 1 => Tier::One,
        k if k % 2 == 0 => Tier::Two,
        _ => Tier::Three,
    };
    let covariates: Vec<CovariateSpec> = names
        .iter()
        .enumerate()
        .map(|(k, name)| CovariateSpec {
            name: name.clone(),
            tier: tier(k),
            threshold: None,
        })
        .collect();

    let mut units = Vec::with_capacity(p.n);
    let mut truth = Vec::with_capacity(p.n);
    let mut effect_sum = 0i64;
    for i in 0..p.n {
        let mut x: Vec<f64> = (0..p.covariates).map(|_| rng.sample(StandardNormal)).collect();
        let e = logistic(logit(p.treated_fraction) + p.confounding * (x[0] + x[1]) / 2f64.sqrt());
        let treated = rng.gen::<f64>() < e;
        if treated {
            x[0] += p.overlap_gap;
            x[1] += p.overlap_gap;
        }
        for v in x.iter_mut() {
            *v = round_to(*v, 3);
        }
        let eta = logit(p.base_rate)
            + 0.4 * x[0]
            + 0.3 * x[1]
            + x.iter().skip(2).map(|v| 0.15 * v).sum::<f64>();
        let p_c = logistic(eta);
        let p_t = (p_c + p.true_effect).clamp(0.0, 1.0);
        let u: f64 = rng.gen();
        let (r_t, r_c) = (u < p_t, u < p_c);
        effect_sum += r_t as i64 - r_c as i64;

        let cells: Vec<Option<f64>> = x
            .iter()
            .enumerate()
            .map(|(k, &v)| {
                let blank = k >= 2 && rng.gen::<f64>() < p.missing_rate;
                (!blank).then_some(v)
            })
            .collect();
        let id = format!("u{:05}", i + 1);
        let exact_key = match p.key_threshold {
            Some(t) => if x[0] >= t { "1" } else { "0" }.to_string(),
            None => String::new(),
        };
        truth.push(TruthRow {
            id: id.clone(),
            r_t: r_t as u8,
            r_c: r_c as u8,
        });
        units.push(Unit {
            id,
            treated,
            event: if treated { r_t } else { r_c },
            covariates: cells,
            exact_key,
        });
    }

    let schema = Schema {
        covariates,
        box_covariates: names[..2].to_vec(),
        indicator_tier: Tier::Three,
        indicator_threshold: None,
    };
    let dataset = Dataset {
        schema,
        units,
        imputed: false,
        missingness_indicators: Vec::new(),
    };
    let key = p.key_threshold.map(|_| KEY_COLUMN);
    let spec = dataset.to_schema_spec(key);
    let treated = dataset.treated_count();
    if treated == 0 || treated == p.n {
        return Err(SynthError::Invalid("generated cohort has a single arm; adjust treated_fraction or n".into()));
    }
    Ok(SyntheticCohort {
        dataset,
        spec,
        truth,
        summary: TruthSummary {
            seed,
            n: p.n,
            treated,
            true_effect_parameter: p.true_effect,
            sample_ate: effect_sum as f64 / p.n as f64,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentParams {
    /// Total number of units.
    pub n: usize,
    /// Largest stratum; sizes are uniform on `2..=max_stratum`.
    pub max_stratum: usize,
    pub base_rate: f64,
    pub effect: f64,
}

impl Default for ExperimentParams {
    fn default() -> Self {
        Self {
            n: 60,
            max_stratum: 5,
            base_rate: 0.4,
            effect: 0.1,
        }
    }
}

/// Draw a stratified experiment shaped like a full match: every stratum
/// has one treated unit or one control, chosen at random. Within each
/// stratum, the first `m` units of the returned completion are the treated
/// ones, and unit order is random so that this is a uniform assignment.
pub fn generate_experiment(
    params: &ExperimentParams,
    seed: u64,
) -> Result<Vec<StratumCompletion>, SynthError> {
    let p = params;
    if p.n < 2 || p.max_stratum < 2 {
        return Err(SynthError::Invalid("need n >= 2 and max_stratum >= 2".into()));
    }
    if !(0.0..=1.0).contains(&p.base_rate) {
        return Err(SynthError::Invalid(format!("base_rate must lie in [0, 1], got {}", p.base_rate)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(substream_seed(seed, "experiment"));
    let mut sizes = Vec::new();
    let mut left = p.n;
    while left > 0 {
        let size = rng.gen_range(2..=p.max_stratum).min(left);
        if size < 2 {
            *sizes.last_mut().expect("n >= 2") += left;
            break;
        }
        sizes.push(size);
        left -= size;
    }
    let p_t = (p.base_rate + p.effect).clamp(0.0, 1.0);
    Ok(sizes
        .into_iter()
        .map(|n| {
            let m = if rng.gen::<bool>() { 1 } else { n - 1 };
            let mut pairs: Vec<(bool, bool)> = (0..n)
                .map(|_| {
                    let u: f64 = rng.gen();
                    (u < p_t, u < p.base_rate)
                })
                .collect();
            pairs.shuffle(&mut rng);
            StratumCompletion {
                r_t: pairs.iter().map(|x| x.0).collect(),
                r_c: pairs.iter().map(|x| x.1).collect(),
                m,
            }
        })
        .collect())
}
