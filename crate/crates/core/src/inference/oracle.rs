//! Brute-force worst-case variance over every completion of the unobserved
//! potential outcomes. Exponential in the number of units; for tests.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;

use super::simulate::StratumCompletion;
use super::{InferenceError, Result, StratumObservation};

pub const ORACLE_MAX_UNITS: usize = 16;

fn sample_variance(xs: &[i64]) -> BigRational {
    let n = xs.len() as i64;
    let mean = BigRational::new(BigInt::from(xs.iter().sum::<i64>()), BigInt::from(n));
    let ss: BigRational = xs
        .iter()
        .map(|&x| {
            let d = BigRational::from_integer(BigInt::from(x)) - &mean;
            &d * &d
        })
        .sum();
    ss / BigRational::from_integer(BigInt::from(n - 1))
}

/// Randomization variance of the stratified estimator for a fully known
/// set of potential outcomes, from the per-stratum sample variances of the
/// treated outcomes, control outcomes, and unit effects.
pub fn eq1_variance(completion: &[StratumCompletion]) -> BigRational {
    let big_n: usize = completion.iter().map(|s| s.len()).sum();
    let mut total = BigRational::from_integer(BigInt::from(0));
    for s in completion {
        let n = s.len() as i64;
        let m = s.m as i64;
        let rt: Vec<i64> = s.r_t.iter().map(|&v| v as i64).collect();
        let rc: Vec<i64> = s.r_c.iter().map(|&v| v as i64).collect();
        let delta: Vec<i64> = rt.iter().zip(&rc).map(|(t, c)| t - c).collect();
        let inner = sample_variance(&rt) / BigRational::from_integer(BigInt::from(m))
            + sample_variance(&rc) / BigRational::from_integer(BigInt::from(n - m))
            - sample_variance(&delta) / BigRational::from_integer(BigInt::from(n));
        total += inner * BigRational::new(BigInt::from(n * n), BigInt::from(1));
    }
    total / BigRational::from_integer(BigInt::from(big_n * big_n))
}

/// Maximum variance per total effect sum `d`, over all `2^N` completions.
pub fn oracle_all(obs: &[StratumObservation]) -> Result<BTreeMap<i64, BigRational>> {
    let big_n: usize = obs.iter().map(|o| o.n).sum();
    if big_n > ORACLE_MAX_UNITS {
        return Err(InferenceError::OracleLimit {
            units: big_n,
            limit: ORACLE_MAX_UNITS,
        });
    }
    if obs.is_empty() {
        return Err(InferenceError::NoStrata);
    }
    // Integer form: sigma2_i * (n-1) m (n-m), summed over L = lcm of those.
    let dens: Vec<i128> = obs
        .iter()
        .map(|o| ((o.n - 1) * o.m * (o.n - o.m)) as i128)
        .collect();
    let lcm = dens.iter().fold(1i128, |acc, &d| acc.lcm(&d));

    // Observed outcome of each unit; the first m of a stratum are treated.
    let observed: Vec<Vec<bool>> = obs
        .iter()
        .map(|o| {
            (0..o.n)
                .map(|j| if j < o.m { j < o.t1 } else { j - o.m < o.c1 })
                .collect()
        })
        .collect();

    let mut best: BTreeMap<i64, i128> = BTreeMap::new();
    for mask in 0u32..(1u32 << big_n) {
        let mut bit = 0;
        let mut total = 0i128;
        let mut d = 0i64;
        for (i, o) in obs.iter().enumerate() {
            let (mut st, mut sc, mut sd, mut sd2) = (0i128, 0i128, 0i128, 0i128);
            for j in 0..o.n {
                let unknown = (mask >> bit) & 1 == 1;
                bit += 1;
                let (t, c) = if j < o.m {
                    (observed[i][j], unknown)
                } else {
                    (unknown, observed[i][j])
                };
                let (t, c) = (t as i128, c as i128);
                st += t;
                sc += c;
                sd += t - c;
                sd2 += (t - c) * (t - c);
            }
            let (n, m) = (o.n as i128, o.m as i128);
            // n * (n-1) * sample variance, for binary vectors.
            let a = n * st - st * st;
            let b = n * sc - sc * sc;
            let e = n * sd2 - sd * sd;
            let num = n * (n - m) * a + n * m * b - m * (n - m) * e;
            total += num * (lcm / dens[i]);
            d += sd as i64;
        }
        let slot = best.entry(d).or_insert(i128::MIN);
        if total > *slot {
            *slot = total;
        }
    }
    let scale = BigInt::from(lcm) * BigInt::from(big_n * big_n);
    Ok(best
        .into_iter()
        .map(|(d, v)| (d, BigRational::new(BigInt::from(v), scale.clone())))
        .collect())
}

/// Maximum of the variance over completions with total effect `d`;
/// `None` when no completion attains `d`.
pub fn enumerate_null_variance_oracle(
    obs: &[StratumObservation],
    d: i64,
) -> Result<Option<BigRational>> {
    Ok(oracle_all(obs)?.remove(&d))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_pair() {
        let obs = [StratumObservation::new(2, 1, 1, 0).unwrap()];
        let all = oracle_all(&obs).unwrap();
        assert_eq!(all.keys().copied().collect::<Vec<_>>(), vec![0, 1, 2]);
        assert_eq!(all[&1], BigRational::new(1.into(), 4.into()));
        assert_eq!(enumerate_null_variance_oracle(&obs, -2).unwrap(), None);
        assert_eq!(enumerate_null_variance_oracle(&obs, 5).unwrap(), None);
    }

    #[test]
    fn refuses_large_instances() {
        let obs = vec![StratumObservation::new(9, 1, 0, 0).unwrap(); 2];
        assert!(matches!(oracle_all(&obs), Err(InferenceError::OracleLimit { .. })));
    }

    #[test]
    fn eq1_on_constant_effect() {
        let s = StratumCompletion {
            r_t: vec![true, true, false],
            r_c: vec![true, true, false],
            m: 1,
        };
        // r_T = r_C: S_T^2 = S_C^2 = 1/3, S_delta^2 = 0, n = N = 3:
        // var = (1/3)/1 + (1/3)/2 = 1/2.
        assert_eq!(eq1_variance(&[s]), BigRational::new(1.into(), 2.into()));
    }
}
