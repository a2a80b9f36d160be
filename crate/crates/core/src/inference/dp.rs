//! Worst-case variance for every null on the grid.
//!
//! Options of stratum `i` carry variance numerators over the stratum
//! denominator. Scaling every numerator by `L / denominator_i`, with `L` the
//! lcm of all denominators, puts the whole problem on integers: a plain
//! max-plus convolution over the running delta sum, exact by construction.
//! The common case fits in `i128`; otherwise the same recursion runs on
//! big integers.

use std::ops::Add;
use std::sync::Arc;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};

use super::options::{OptionCache, StratumOptionSet, Witness};
use super::{to_f64, InferenceError, Result, StratumObservation};

const UNREACHABLE: u32 = u32::MAX;

/// Worst-case variance at one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct WorstCaseResult {
    pub d: i64,
    pub delta0: f64,
    pub feasible: bool,
    /// Exact `var(ate_hat)` at the maximizing allocation.
    pub max_variance: Option<BigRational>,
    /// One witness per stratum, in stratum order.
    pub allocation: Vec<Witness>,
}

impl WorstCaseResult {
    pub fn max_variance_f64(&self) -> Option<f64> {
        self.max_variance.as_ref().map(to_f64)
    }
}

#[derive(Debug, Clone)]
pub struct WorstCaseGrid {
    n_total: usize,
    sets: Vec<Arc<StratumOptionSet>>,
    lcm: BigInt,
    /// Smallest attainable total delta sum.
    lo: i64,
    /// Scaled optimum per total delta sum, from `lo` upwards.
    values: Vec<Option<BigInt>>,
    /// `choices[i][b - lo_i]`: option index chosen for stratum `i` when the
    /// running sum after it is `b`.
    choices: Vec<Vec<u32>>,
    layer_lo: Vec<i64>,
}

trait DpValue: Clone + Ord + Zero + for<'a> Add<&'a Self, Output = Self> {}
impl DpValue for i128 {}
impl DpValue for BigInt {}

struct Layers<V> {
    values: Vec<Option<V>>,
    choices: Vec<Vec<u32>>,
    layer_lo: Vec<i64>,
}

fn convolve<V: DpValue>(sets: &[Arc<StratumOptionSet>], scaled: &[Vec<V>]) -> Layers<V> {
    let mut lo = 0i64;
    let mut prev: Vec<Option<V>> = vec![Some(V::zero())];
    let mut choices = Vec::with_capacity(sets.len());
    let mut layer_lo = Vec::with_capacity(sets.len());
    for (set, vals) in sets.iter().zip(scaled) {
        let new_lo = lo + set.s_min();
        let width = prev.len() + (set.s_max() - set.s_min()) as usize;
        let mut next: Vec<Option<V>> = vec![None; width];
        let mut choice = vec![UNREACHABLE; width];
        for (offset, cur) in prev.iter().enumerate() {
            let Some(cur) = cur else { continue };
            for (j, opt) in set.options.iter().enumerate() {
                let idx = offset + (opt.s - set.s_min()) as usize;
                let cand = cur.clone() + &vals[j];
                if next[idx].as_ref().is_none_or(|v| cand > *v) {
                    next[idx] = Some(cand);
                    choice[idx] = j as u32;
                }
            }
        }
        prev = next;
        lo = new_lo;
        choices.push(choice);
        layer_lo.push(new_lo);
    }
    Layers {
        values: prev,
        choices,
        layer_lo,
    }
}

impl WorstCaseGrid {
    pub fn compute(obs: &[StratumObservation]) -> Result<Self> {
        let mut cache = OptionCache::new();
        Self::compute_with(obs, &mut cache)
    }

    pub fn compute_with(obs: &[StratumObservation], cache: &mut OptionCache) -> Result<Self> {
        if obs.is_empty() {
            return Err(InferenceError::NoStrata);
        }
        let sets: Vec<Arc<StratumOptionSet>> = obs.iter().map(|o| cache.get(o)).collect();
        let lcm = sets
            .iter()
            .fold(BigInt::from(1), |acc, s| acc.lcm(&BigInt::from(s.denominator)));
        let big: Vec<Vec<BigInt>> = sets
            .iter()
            .map(|s| {
                let factor = &lcm / BigInt::from(s.denominator);
                s.options
                    .iter()
                    .map(|o| BigInt::from(o.numerator) * &factor)
                    .collect()
            })
            .collect();
        let ceiling: BigInt = big
            .iter()
            .map(|v| v.iter().max().cloned().unwrap_or_default())
            .sum();

        let n_total = obs.iter().map(|o| o.n).sum();
        let lo = sets.iter().map(|s| s.s_min()).sum();
        let (values, choices, layer_lo) = if ceiling <= BigInt::from(i128::MAX) {
            let small: Vec<Vec<i128>> = big
                .iter()
                .map(|v| v.iter().map(|x| x.to_i128().expect("bounded by ceiling")).collect())
                .collect();
            let l = convolve(&sets, &small);
            (
                l.values.into_iter().map(|v| v.map(BigInt::from)).collect(),
                l.choices,
                l.layer_lo,
            )
        } else {
            let l = convolve(&sets, &big);
            (l.values, l.choices, l.layer_lo)
        };
        Ok(Self {
            n_total,
            sets,
            lcm,
            lo,
            values,
            choices,
            layer_lo,
        })
    }

    pub fn n_total(&self) -> usize {
        self.n_total
    }

    pub fn option_sets(&self) -> &[Arc<StratumOptionSet>] {
        &self.sets
    }

    /// Attainable total delta sums, inclusive.
    pub fn feasible_range(&self) -> (i64, i64) {
        (self.lo, self.lo + self.values.len() as i64 - 1)
    }

    fn slot(&self, d: i64) -> Option<&BigInt> {
        let off = d.checked_sub(self.lo)?;
        if off < 0 {
            return None;
        }
        self.values.get(off as usize)?.as_ref()
    }

    pub fn is_feasible(&self, d: i64) -> bool {
        self.slot(d).is_some()
    }

    pub fn max_variance(&self, d: i64) -> Option<BigRational> {
        let v = self.slot(d)?;
        let n2 = BigInt::from(self.n_total) * BigInt::from(self.n_total);
        Some(BigRational::new(v.clone(), &self.lcm * n2))
    }

    /// Worst-case variance at `d` with the maximizing witnesses.
    pub fn result(&self, d: i64) -> WorstCaseResult {
        let delta0 = d as f64 / self.n_total as f64;
        let Some(max_variance) = self.max_variance(d) else {
            return WorstCaseResult {
                d,
                delta0,
                feasible: false,
                max_variance: None,
                allocation: Vec::new(),
            };
        };
        let mut allocation = vec![
            Witness {
                a: 0,
                b: 0,
                g: 0,
                h: 0
            };
            self.sets.len()
        ];
        let mut b = d;
        for i in (0..self.sets.len()).rev() {
            let j = self.choices[i][(b - self.layer_lo[i]) as usize];
            debug_assert_ne!(j, UNREACHABLE);
            let opt = &self.sets[i].options[j as usize];
            allocation[i] = opt.witness;
            b -= opt.s;
        }
        debug_assert_eq!(b, 0);
        WorstCaseResult {
            d,
            delta0,
            feasible: true,
            max_variance: Some(max_variance),
            allocation,
        }
    }
}
