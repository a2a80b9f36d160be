//! Per-stratum options: the largest variance contribution for each possible
//! delta sum, over all completions compatible with the observed counts.

use std::collections::HashMap;
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use serde::Serialize;

use super::StratumObservation;

/// Counts of unobserved outcomes set to one.
///
/// `a`: treated with an event whose control outcome is one; `b`: treated
/// without an event whose control outcome is one; `g`: controls with an event
/// whose treated outcome is one; `h`: controls without an event whose treated
/// outcome is one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Witness {
    pub a: usize,
    pub b: usize,
    pub g: usize,
    pub h: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StratumOption {
    /// Sum of unit effects in the stratum.
    pub s: i64,
    /// Variance contribution `sigma2 = numerator / denominator`, where
    /// contributions add up to `var(N * ate_hat)`.
    pub numerator: i128,
    pub witness: Witness,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StratumOptionSet {
    pub obs: StratumObservation,
    /// `(n - 1) m (n - m)`, shared by every option of the stratum.
    pub denominator: i128,
    /// One option per attainable `s`, in increasing `s`.
    pub options: Vec<StratumOption>,
}

impl StratumOptionSet {
    pub fn sigma2(&self, option: &StratumOption) -> BigRational {
        BigRational::new(BigInt::from(option.numerator), BigInt::from(self.denominator))
    }

    pub fn s_min(&self) -> i64 {
        self.options[0].s
    }

    pub fn s_max(&self) -> i64 {
        self.options[self.options.len() - 1].s
    }

    pub fn get(&self, s: i64) -> Option<&StratumOption> {
        self.options
            .binary_search_by_key(&s, |o| o.s)
            .ok()
            .map(|i| &self.options[i])
    }
}

/// Enumerate every completion of `obs` by counts and keep the maximum
/// variance contribution per delta sum. Ties keep the first witness in
/// `(a, b, g, h)` lexicographic order.
pub fn stratum_options(obs: &StratumObservation) -> StratumOptionSet {
    let StratumObservation { n, m, t1, c1 } = *obs;
    let mut best: Vec<Option<StratumOption>> = vec![None; 2 * n + 1];
    for a in 0..=t1 {
        for b in 0..=(m - t1) {
            for g in 0..=c1 {
                for h in 0..=(n - m - c1) {
                    let option = evaluate(obs, Witness { a, b, g, h });
                    let slot = &mut best[(option.s + n as i64) as usize];
                    if slot.as_ref().is_none_or(|o| option.numerator > o.numerator) {
                        *slot = Some(option);
                    }
                }
            }
        }
    }
    StratumOptionSet {
        obs: *obs,
        denominator: ((n - 1) * m * (n - m)) as i128,
        options: best.into_iter().flatten().collect(),
    }
}

/// Delta sum and variance numerator of a single completion.
pub fn evaluate(obs: &StratumObservation, witness: Witness) -> StratumOption {
    let StratumObservation { n, m, t1, c1 } = *obs;
    let Witness { a, b, g, h } = witness;
    let (ni, mi) = (n as i128, m as i128);
    let ci = ni - mi;
    let big_t = (t1 + g + h) as i128;
    let big_c = (c1 + a + b) as i128;
    let s = big_t - big_c;
    let plus = (t1 - a + h) as i128;
    let minus = (b + c1 - g) as i128;
    let numerator = ni * big_t * (ni - big_t) * ci + ni * big_c * (ni - big_c) * mi
        - (ni * (plus + minus) - s * s) * mi * ci;
    StratumOption {
        s: s as i64,
        numerator,
        witness,
    }
}

/// Memoizes option sets on the observation, which fully determines them.
#[derive(Debug, Default)]
pub struct OptionCache {
    sets: HashMap<StratumObservation, Arc<StratumOptionSet>>,
}

impl OptionCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&mut self, obs: &StratumObservation) -> Arc<StratumOptionSet> {
        self.sets
            .entry(*obs)
            .or_insert_with(|| Arc::new(stratum_options(obs)))
            .clone()
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(n: usize, m: usize, t1: usize, c1: usize) -> StratumObservation {
        StratumObservation::new(n, m, t1, c1).unwrap()
    }

    fn sigma(set: &StratumOptionSet, s: i64) -> Option<BigRational> {
        set.get(s).map(|o| set.sigma2(o))
    }

    fn int(v: i64) -> BigRational {
        BigRational::from_integer(BigInt::from(v))
    }

    #[test]
    fn pair_with_treated_event() {
        let set = stratum_options(&obs(2, 1, 1, 0));
        assert_eq!(set.options.iter().map(|o| o.s).collect::<Vec<_>>(), vec![0, 1, 2]);
        // S = 0 is reached by r_T = (1, 0), r_C = (1, 0): the two
        // assignments give N * ate_hat = 1 and -1.
        assert_eq!(sigma(&set, 0), Some(int(4)));
        assert_eq!(sigma(&set, 1), Some(int(1)));
        assert_eq!(sigma(&set, 2), Some(int(0)));
    }

    #[test]
    fn pair_without_events() {
        // Treated r_T = 0, control r_C = 0: effects in {-1, 0} and {0, 1}.
        let set = stratum_options(&obs(2, 1, 0, 0));
        assert_eq!(set.options.iter().map(|o| o.s).collect::<Vec<_>>(), vec![-1, 0, 1]);
        assert_eq!(sigma(&set, -1), Some(int(1)));
        assert_eq!(sigma(&set, 1), Some(int(1)));
        // S = 0: either both effects zero (variance 0) or effects -1 and +1,
        // r_T = (0,1), r_C = (1,0), giving 4 * (1/2 + 1/2 - 2/2) = 0 as well.
        assert_eq!(sigma(&set, 0), Some(int(0)));
    }

    #[test]
    fn constant_outcomes_have_zero_variance() {
        let opt = evaluate(&obs(4, 1, 1, 3), Witness { a: 1, b: 0, g: 3, h: 0 });
        assert_eq!(opt.s, 0);
        assert_eq!(opt.numerator, 0);
    }

    #[test]
    fn relabeling_mirrors_options() {
        for o in [obs(3, 1, 1, 1), obs(5, 4, 2, 0), obs(4, 2, 1, 2)] {
            let a = stratum_options(&o);
            let b = stratum_options(&o.relabeled());
            for opt in &a.options {
                assert_eq!(b.get(-opt.s).map(|x| x.numerator), Some(opt.numerator));
            }
            assert_eq!(a.options.len(), b.options.len());
        }
    }

    #[test]
    fn cache_reuses_sets() {
        let mut cache = OptionCache::new();
        let x = cache.get(&obs(3, 1, 0, 1));
        let y = cache.get(&obs(3, 1, 0, 1));
        assert!(Arc::ptr_eq(&x, &y));
        assert_eq!(cache.len(), 1);
    }
}
