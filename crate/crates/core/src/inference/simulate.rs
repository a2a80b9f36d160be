//! Randomization distribution of the estimator for known potential outcomes.

use std::io;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use super::options::Witness;
use super::{InferenceError, Result, StratumObservation};

/// Most assignments enumerated in exhaustive mode.
pub const EXHAUSTIVE_LIMIT: u128 = 1_000_000;

/// Strata with at most this many assignments get a precomputed table in
/// Monte-Carlo mode.
const TABLE_LIMIT: u128 = 1 << 14;

/// Both potential outcomes of every unit in a stratum, with the number of
/// units assigned to treatment. In the observed experiment the first `m`
/// units are the treated ones.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StratumCompletion {
    pub r_t: Vec<bool>,
    pub r_c: Vec<bool>,
    pub m: usize,
}

impl StratumCompletion {
    pub fn len(&self) -> usize {
        self.r_t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r_t.is_empty()
    }

    pub fn effect_sum(&self) -> i64 {
        self.r_t
            .iter()
            .zip(&self.r_c)
            .map(|(&t, &c)| t as i64 - c as i64)
            .sum()
    }

    /// Expand witness counts into unit outcomes. Units are laid out as
    /// treated with events, treated without, controls with events, controls
    /// without; within each group the imputed ones come first.
    pub fn from_witness(obs: &StratumObservation, w: &Witness) -> Self {
        let StratumObservation { n, m, t1, c1 } = *obs;
        let mut r_t = Vec::with_capacity(n);
        let mut r_c = Vec::with_capacity(n);
        for j in 0..t1 {
            r_t.push(true);
            r_c.push(j < w.a);
        }
        for j in 0..m - t1 {
            r_t.push(false);
            r_c.push(j < w.b);
        }
        for j in 0..c1 {
            r_t.push(j < w.g);
            r_c.push(true);
        }
        for j in 0..n - m - c1 {
            r_t.push(j < w.h);
            r_c.push(false);
        }
        Self { r_t, r_c, m }
    }

    /// Observed counts when the first `m` units are treated.
    pub fn observed(&self) -> StratumObservation {
        let t1 = self.r_t[..self.m].iter().filter(|&&v| v).count();
        let c1 = self.r_c[self.m..].iter().filter(|&&v| v).count();
        StratumObservation {
            n: self.len(),
            m: self.m,
            t1,
            c1,
        }
    }

    fn assignments(&self) -> u128 {
        binomial(self.len() as u128, self.m as u128)
    }
}

fn binomial(n: u128, k: u128) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul(n - i) / (i + 1);
    }
    acc
}

/// Visit every `m`-subset of `0..n` in lexicographic order.
fn for_each_subset(n: usize, m: usize, mut f: impl FnMut(&[usize])) {
    let mut idx: Vec<usize> = (0..m).collect();
    loop {
        f(&idx);
        let mut i = m;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] < n - m + i {
                break;
            }
            if i == 0 {
                return;
            }
        }
        idx[i] += 1;
        for j in i + 1..m {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimulationMode {
    Exhaustive,
    MonteCarlo { draws: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QqPoint {
    pub p: f64,
    pub sample: f64,
    pub normal: f64,
}

#[derive(Debug, Clone)]
pub struct SimulationResult {
    pub samples: Vec<f64>,
    pub mean: f64,
    /// Population variance over Omega in exhaustive mode, sample variance
    /// in Monte-Carlo mode.
    pub variance: f64,
    /// Exact mean and variance over Omega; exhaustive mode only.
    pub exact_mean: Option<BigRational>,
    pub exact_variance: Option<BigRational>,
    pub true_effect: BigRational,
    pub qq: Vec<QqPoint>,
}

impl SimulationResult {
    pub fn write_qq_csv<W: io::Write>(&self, writer: W) -> io::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["p", "sample_quantile", "normal_quantile"])?;
        for q in &self.qq {
            w.write_record([q.p.to_string(), q.sample.to_string(), q.normal.to_string()])?;
        }
        w.flush()
    }
}

/// Scaled stratum estimate for the treated set `treated`: the estimator is
/// the sum of these over strata divided by `N * K`.
fn scaled_value(s: &StratumCompletion, treated: &[usize], factor: &BigInt) -> BigInt {
    let (n, m) = (s.len() as i64, s.m as i64);
    let mut is_t = vec![false; s.len()];
    for &t in treated {
        is_t[t] = true;
    }
    let mut st = 0i64;
    let mut sc = 0i64;
    for j in 0..s.len() {
        if is_t[j] {
            st += s.r_t[j] as i64;
        } else {
            sc += s.r_c[j] as i64;
        }
    }
    BigInt::from(n * ((n - m) * st - m * sc)) * factor
}

/// Sample the estimator over the randomization distribution of `completion`.
pub fn simulate_randomization(
    completion: &[StratumCompletion],
    mode: SimulationMode,
) -> Result<SimulationResult> {
    if completion.is_empty() {
        return Err(InferenceError::NoStrata);
    }
    let big_n: usize = completion.iter().map(|s| s.len()).sum();
    let k = completion.iter().fold(BigInt::from(1), |acc, s| {
        acc.lcm(&BigInt::from(s.m * (s.len() - s.m)))
    });
    let factors: Vec<BigInt> = completion
        .iter()
        .map(|s| &k / BigInt::from(s.m * (s.len() - s.m)))
        .collect();
    let scale = &k * BigInt::from(big_n);
    let scale_f = scale.to_f64().unwrap_or(f64::INFINITY);
    let effect: i64 = completion.iter().map(|s| s.effect_sum()).sum();
    let true_effect = BigRational::new(BigInt::from(effect), BigInt::from(big_n));

    let mut result = match mode {
        SimulationMode::Exhaustive => {
            let total = completion
                .iter()
                .fold(1u128, |acc, s| acc.saturating_mul(s.assignments()));
            if total > EXHAUSTIVE_LIMIT {
                return Err(InferenceError::ExhaustiveLimit {
                    assignments: total,
                    limit: EXHAUSTIVE_LIMIT,
                });
            }
            let tables: Vec<Vec<BigInt>> = completion
                .iter()
                .zip(&factors)
                .map(|(s, f)| {
                    let mut v = Vec::new();
                    for_each_subset(s.len(), s.m, |t| v.push(scaled_value(s, t, f)));
                    v
                })
                .collect();
            exhaustive(&tables, &scale, scale_f, total as usize)
        }
        SimulationMode::MonteCarlo { draws, seed } => {
            if draws == 0 {
                return Err(InferenceError::NoDraws);
            }
            monte_carlo(completion, &factors, scale_f, draws, seed)
        }
    };
    result.true_effect = true_effect;
    result.qq = qq_points(&result.samples, result.mean, result.variance.sqrt());
    Ok(result)
}

fn exhaustive(tables: &[Vec<BigInt>], scale: &BigInt, scale_f: f64, total: usize) -> SimulationResult {
    let mut digits = vec![0usize; tables.len()];
    let mut current: BigInt = tables.iter().map(|t| t[0].clone()).sum();
    let mut sum = BigInt::zero();
    let mut sum_sq = BigInt::zero();
    let mut samples = Vec::with_capacity(total);
    loop {
        sum += &current;
        sum_sq += &current * &current;
        samples.push(current.to_f64().unwrap_or(f64::NAN) / scale_f);
        // Odometer step.
        let mut i = 0;
        loop {
            if i == tables.len() {
                let count = BigInt::from(samples.len());
                let mean = BigRational::new(sum.clone(), &count * scale);
                let second = BigRational::new(sum_sq, &count * scale * scale);
                let var = second - &mean * &mean;
                return SimulationResult {
                    mean: super::to_f64(&mean),
                    variance: super::to_f64(&var),
                    samples,
                    exact_mean: Some(mean),
                    exact_variance: Some(var),
                    true_effect: BigRational::zero(),
                    qq: Vec::new(),
                };
            }
            let t = &tables[i];
            current -= &t[digits[i]];
            digits[i] += 1;
            if digits[i] == t.len() {
                digits[i] = 0;
                current += &t[0];
                i += 1;
            } else {
                current += &t[digits[i]];
                break;
            }
        }
    }
}

fn monte_carlo(
    completion: &[StratumCompletion],
    factors: &[BigInt],
    scale_f: f64,
    draws: usize,
    seed: u64,
) -> SimulationResult {
    enum Sampler {
        Table(Vec<f64>),
        Direct,
    }
    let samplers: Vec<Sampler> = completion
        .iter()
        .zip(factors)
        .map(|(s, f)| {
            if s.assignments() <= TABLE_LIMIT {
                let mut v = Vec::new();
                for_each_subset(s.len(), s.m, |t| {
                    v.push(scaled_value(s, t, f).to_f64().unwrap_or(f64::NAN) / scale_f)
                });
                Sampler::Table(v)
            } else {
                Sampler::Direct
            }
        })
        .collect();
    let mut rngs: Vec<ChaCha8Rng> = (0..completion.len())
        .map(|i| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(i as u64);
            r
        })
        .collect();
    let mut samples = Vec::with_capacity(draws);
    for _ in 0..draws {
        let mut x = 0.0;
        for (i, s) in completion.iter().enumerate() {
            x += match &samplers[i] {
                Sampler::Table(v) => v[rngs[i].gen_range(0..v.len())],
                Sampler::Direct => {
                    let t = index::sample(&mut rngs[i], s.len(), s.m).into_vec();
                    scaled_value(s, &t, &factors[i]).to_f64().unwrap_or(f64::NAN) / scale_f
                }
            };
        }
        samples.push(x);
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let variance = if samples.len() > 1 {
        samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    SimulationResult {
        samples,
        mean,
        variance,
        exact_mean: None,
        exact_variance: None,
        true_effect: BigRational::zero(),
        qq: Vec::new(),
    }
}

const QQ_POINTS: usize = 1000;

fn qq_points(samples: &[f64], mean: f64, sd: f64) -> Vec<QqPoint> {
    if samples.is_empty() || !(sd > 0.0) {
        return Vec::new();
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let normal = Normal::new(mean, sd).expect("positive sd");
    let count = sorted.len().min(QQ_POINTS);
    (0..count)
        .map(|j| {
            let p = (j as f64 + 0.5) / count as f64;
            let pos = ((p * sorted.len() as f64) as usize).min(sorted.len() - 1);
            QqPoint {
                p,
                sample: sorted[pos],
                normal: normal.inverse_cdf(p),
            }
        })
        .collect()
}

/// Agreement of sample and normal quantiles over `p` in `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QqCheck {
    /// Least-squares slope of sample on normal quantiles.
    pub slope: f64,
    /// Largest `|sample - normal|` in units of the fitted SD.
    pub max_deviation: f64,
    pub points: usize,
}

pub fn qq_check(result: &SimulationResult, lo: f64, hi: f64) -> QqCheck {
    let sd = result.variance.sqrt();
    let pts: Vec<&QqPoint> = result.qq.iter().filter(|q| q.p >= lo && q.p <= hi).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|q| q.normal).sum::<f64>() / n;
    let my = pts.iter().map(|q| q.sample).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|q| (q.normal - mx) * (q.sample - my)).sum();
    let sxx: f64 = pts.iter().map(|q| (q.normal - mx).powi(2)).sum();
    QqCheck {
        slope: sxy / sxx,
        max_deviation: pts
            .iter()
            .map(|q| (q.sample - q.normal).abs() / sd)
            .fold(0.0, f64::max),
        points: pts.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::eq1_variance;

    fn completion() -> Vec<StratumCompletion> {
        vec![
            StratumCompletion {
                r_t: vec![true, false],
                r_c: vec![false, false],
                m: 1,
            },
            StratumCompletion {
                r_t: vec![true, true, false, true],
                r_c: vec![false, true, false, false],
                m: 3,
            },
        ]
    }

    #[test]
    fn subsets_in_order() {
        let mut seen = Vec::new();
        for_each_subset(4, 2, |s| seen.push(s.to_vec()));
        assert_eq!(seen.len(), 6);
        assert_eq!(seen[0], vec![0, 1]);
        assert_eq!(seen[5], vec![2, 3]);
        let mut one = 0;
        for_each_subset(3, 3, |_| one += 1);
        assert_eq!(one, 1);
    }

    #[test]
    fn exhaustive_is_unbiased_and_matches_variance_formula() {
        let c = completion();
        let r = simulate_randomization(&c, SimulationMode::Exhaustive).unwrap();
        assert_eq!(r.samples.len(), 2 * 4);
        assert_eq!(r.exact_mean.as_ref(), Some(&r.true_effect));
        assert_eq!(r.exact_variance.unwrap(), eq1_variance(&c));
    }

    #[test]
    fn monte_carlo_is_reproducible() {
        let c = completion();
        let mode = SimulationMode::MonteCarlo { draws: 500, seed: 7 };
        let a = simulate_randomization(&c, mode).unwrap();
        let b = simulate_randomization(&c, mode).unwrap();
        assert_eq!(a.samples, b.samples);
        let other = simulate_randomization(&c, SimulationMode::MonteCarlo { draws: 500, seed: 8 }).unwrap();
        assert_ne!(a.samples, other.samples);
    }

    #[test]
    fn exhaustive_limit_enforced() {
        let big = StratumCompletion {
            r_t: vec![false; 40],
            r_c: vec![false; 40],
            m: 20,
        };
        assert!(matches!(
            simulate_randomization(&[big], SimulationMode::Exhaustive),
            Err(InferenceError::ExhaustiveLimit { .. })
        ));
    }

    #[test]
    fn witness_expansion_keeps_observed_outcomes() {
        let obs = StratumObservation::new(5, 2, 1, 2).unwrap();
        let w = Witness { a: 1, b: 0, g: 1, h: 1 };
        let s = StratumCompletion::from_witness(&obs, &w);
        assert_eq!(s.observed(), obs);
        // Effects: (1-1), (0-0), (1-1), (0-1), (1-0) => 0.
        assert_eq!(s.effect_sum(), 0);
    }
}
