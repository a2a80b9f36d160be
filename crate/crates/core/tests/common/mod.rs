//! Independent reference implementations and fixtures shared by the
//! integration suites.

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use studypop::cli::write_cohort;
use studypop::matching::DistanceMatrix;
use studypop::pipeline::{Emitter, PipelineConfig};
use studypop::synth::{generate_cohort, CohortParams, SyntheticCohort};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random matrix with small integer distances, so sums are exact, and
/// roughly `forbid` of the entries forbidden.
pub fn random_matrix(rng: &mut ChaCha8Rng, nt: usize, nc: usize, forbid: f64) -> DistanceMatrix {
    let entries = (0..nt * nc)
        .map(|_| (!rng.gen_bool(forbid)).then(|| rng.gen_range(0..20) as f64))
        .collect();
    DistanceMatrix::from_entries((0..nt).collect(), (nt..nt + nc).collect(), entries)
}

/// Minimum full-matching objective by enumerating every set partition of
/// the units; `None` when no partition is admissible.
pub fn brute_force_full_match(dm: &DistanceMatrix, max_treated: usize, max_controls: usize) -> Option<f64> {
    let nt = dm.n_treated();
    let n = nt + dm.n_control();
    // Each block is a list of unit indices: < nt treated, >= nt control.
    fn block_cost(dm: &DistanceMatrix, nt: usize, block: &[usize], kt: usize, kc: usize) -> Option<f64> {
        let ts: Vec<usize> = block.iter().copied().filter(|&u| u < nt).collect();
        let cs: Vec<usize> = block.iter().copied().filter(|&u| u >= nt).map(|u| u - nt).collect();
        if ts.is_empty() || cs.is_empty() || ts.len().min(cs.len()) != 1 || ts.len() > kt || cs.len() > kc {
            return None;
        }
        let mut total = 0.0;
        if ts.len() == 1 {
            for &c in &cs {
                total += dm.get(ts[0], c)?;
            }
        } else {
            for &t in &ts {
                total += dm.get(t, cs[0])?;
            }
        }
        Some(total)
    }
    fn go(
        dm: &DistanceMatrix,
        nt: usize,
        n: usize,
        next: usize,
        blocks: &mut Vec<Vec<usize>>,
        kt: usize,
        kc: usize,
        best: &mut Option<f64>,
    ) {
        if next == n {
            let mut total = 0.0;
            for b in blocks.iter() {
                match block_cost(dm, nt, b, kt, kc) {
                    Some(c) => total += c,
                    None => return,
                }
            }
            if best.is_none_or(|b| total < b) {
                *best = Some(total);
            }
            return;
        }
        for i in 0..blocks.len() {
            blocks[i].push(next);
            go(dm, nt, n, next + 1, blocks, kt, kc, best);
            blocks[i].pop();
        }
        blocks.push(vec![next]);
        go(dm, nt, n, next + 1, blocks, kt, kc, best);
        blocks.pop();
    }
    let mut best = None;
    go(dm, nt, n, 0, &mut Vec::new(), max_treated, max_controls, &mut best);
    best
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    // f decreasing, f(lo) > 0 > f(hi).
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// One-covariate logistic MLE by nested bisection on the score equations:
/// the intercept solves its equation for each slope, and the profiled
/// slope equation is monotone.
pub fn logistic_oracle(x: &[f64], y: &[bool]) -> (f64, f64) {
    let intercept_for = |b: f64| {
        bisect(-50.0, 50.0, |a| {
            x.iter().zip(y).map(|(&xi, &yi)| f64::from(u8::from(yi)) - sigmoid(a + b * xi)).sum()
        })
    };
    let slope = bisect(-50.0, 50.0, |b| {
        let a = intercept_for(b);
        x.iter()
            .zip(y)
            .map(|(&xi, &yi)| xi * (f64::from(u8::from(yi)) - sigmoid(a + b * xi)))
            .sum()
    });
    (intercept_for(slope), slope)
}

/// Write a generated cohort into `dir/data` and return it with a config
/// that sends outputs to `dir/out`.
pub fn cohort_config(dir: &Path, params: &CohortParams, seed: u64) -> (SyntheticCohort, PipelineConfig) {
    let cohort = generate_cohort(params, seed).expect("valid parameters");
    let data = dir.join("data");
    let mut out = Emitter::new(&data).unwrap();
    write_cohort(&mut out, &cohort).unwrap();
    out.finish().unwrap();
    let cfg = PipelineConfig::new(data.join("cohort.csv"), data.join("cohort.schema.toml"), dir.join("out"));
    (cohort, cfg)
}

pub fn read(path: impl AsRef<Path>) -> Vec<u8> {
    std::fs::read(path.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", path.as_ref().display()))
}

pub fn ids_in(path: &PathBuf) -> Vec<String> {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    rdr.records().map(|r| r.unwrap()[0].to_string()).collect()
}
