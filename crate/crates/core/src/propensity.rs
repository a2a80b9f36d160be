//! Logistic propensity scores and common-support exclusion rules.

use std::io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, DatasetError};
use crate::linalg::{collinear_partners, Cholesky};

#[derive(Debug, Error)]
pub enum PropensityError {
    #[error("logistic fit needs both treated and control units ({treated} treated, {control} control)")]
    NoContrast { treated: usize, control: usize },
    #[error("design matrix is rank deficient: `{column}` is collinear with {partners:?}")]
    RankDeficient {
        column: String,
        partners: Vec<String>,
    },
    #[error("logistic fit diverges (standardized coefficient norm {norm:.1} > {bound}); the arms are (quasi-)separated, consider dropping covariates")]
    Separation { norm: f64, bound: f64 },
    #[error("expected {expected} covariate values, got {found}")]
    Dimension { expected: usize, found: usize },
    #[error(transparent)]
    Data(#[from] DatasetError),
}

pub type Result<T> = std::result::Result<T, PropensityError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Convergence when the max-norm of the mean log-likelihood gradient
    /// (standardized scale) falls below this.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Standardized coefficient max-norm beyond which the fit is declared separated.
    pub separation_bound: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 100,
            separation_bound: 30.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropensityModel {
    pub covariates_used: Vec<String>,
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub converged: bool,
    pub iterations: usize,
}

fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(eta))` without overflow.
fn softplus(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

impl PropensityModel {
    pub fn linear_predictor(&self, x: &[f64]) -> f64 {
        self.intercept
            + self
                .coefficients
                .iter()
                .zip(x)
                .map(|(b, v)| b * v)
                .sum::<f64>()
    }

    /// Estimated propensity score, kept strictly inside (0, 1).
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.coefficients.len() {
            return Err(PropensityError::Dimension {
                expected: self.coefficients.len(),
                found: x.len(),
            });
        }
        let p = sigmoid(self.linear_predictor(x));
        Ok(p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0))
    }

    /// Scores for every unit of `ds`, using the model's covariates by name.
    pub fn scores(&self, ds: &Dataset) -> Result<Vec<f64>> {
        let x = ds.matrix(&self.covariates_used)?;
        x.iter().map(|row| self.predict(row)).collect()
    }
}

/// Maximum-likelihood logistic regression of treatment on `covariates`.
pub fn fit_logistic(ds: &Dataset, covariates: &[String], opts: &FitOptions) -> Result<PropensityModel> {
    let x = ds.matrix(covariates)?;
    fit_logistic_matrix(&x, &ds.treatments(), covariates, opts)
}

/// Newton iterations with step halving on standardized covariates.
pub fn fit_logistic_matrix(
    x: &[Vec<f64>],
    y: &[bool],
    names: &[String],
    opts: &FitOptions,
) -> Result<PropensityModel> {
    let n = y.len();
    let treated = y.iter().filter(|&&t| t).count();
    if treated == 0 || treated == n {
        return Err(PropensityError::NoContrast {
            treated,
            control: n - treated,
        });
    }
    let k = names.len();
    if let Some(row) = x.iter().find(|r| r.len() != k) {
        return Err(PropensityError::Dimension {
            expected: k,
            found: row.len(),
        });
    }

    let means: Vec<f64> = (0..k)
        .map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n as f64)
        .collect();
    let sds: Vec<f64> = (0..k)
        .map(|j| {
            let ss: f64 = x.iter().map(|r| (r[j] - means[j]).powi(2)).sum();
            (ss / (n.max(2) - 1) as f64).sqrt()
        })
        .collect();
    if let Some(j) = (0..k).find(|&j| !(sds[j] > 0.0)) {
        return Err(PropensityError::RankDeficient {
            column: names[j].clone(),
            partners: vec!["(intercept)".into()],
        });
    }
    let p = k + 1;
    let design: Vec<Vec<f64>> = x
        .iter()
        .map(|r| {
            std::iter::once(1.0)
                .chain((0..k).map(|j| (r[j] - means[j]) / sds[j]))
                .collect()
        })
        .collect();

    let gram = weighted_gram(&design, |_| 1.0, p);
    if let Err(e) = Cholesky::factor(&gram, p, 1e-10) {
        let label = |c: usize| {
            if c == 0 {
                "(intercept)".to_string()
            } else {
                names[c - 1].clone()
            }
        };
        return Err(PropensityError::RankDeficient {
            column: label(e.column),
            partners: collinear_partners(&gram, p, e.column)
                .into_iter()
                .map(label)
                .collect(),
        });
    }

    let loglik = |beta: &[f64]| -> f64 {
        design
            .iter()
            .zip(y)
            .map(|(z, &t)| {
                let eta = dot(z, beta);
                (if t { eta } else { 0.0 }) - softplus(eta)
            })
            .sum::<f64>()
            / n as f64
    };

    let mut beta = vec![0.0; p];
    let mut ll = loglik(&beta);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iterations {
        let probs: Vec<f64> = design.iter().map(|z| sigmoid(dot(z, &beta))).collect();
        let mut grad = vec![0.0; p];
        for ((z, &t), &pr) in design.iter().zip(y).zip(&probs) {
            let r = f64::from(u8::from(t)) - pr;
            for j in 0..p {
                grad[j] += z[j] * r;
            }
        }
        grad.iter_mut().for_each(|g| *g /= n as f64);
        if grad.iter().all(|g| g.abs() < opts.tolerance) {
            converged = true;
            break;
        }
        iterations += 1;

        let hess = weighted_gram(&design, |i| probs[i] * (1.0 - probs[i]), p);
        let step = match Cholesky::factor(&hess, p, 1e-14) {
            Ok(ch) => ch.solve(&grad),
            Err(_) => {
                return Err(PropensityError::Separation {
                    norm: max_norm(&beta),
                    bound: opts.separation_bound,
                })
            }
        };
        let mut t = 1.0;
        loop {
            let cand: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + t * s).collect();
            let cand_ll = loglik(&cand);
            if cand_ll >= ll - 1e-15 * ll.abs() || t < 1e-10 {
                beta = cand;
                ll = cand_ll;
                break;
            }
            t *= 0.5;
        }
        let norm = max_norm(&beta);
        if norm > opts.separation_bound {
            return Err(PropensityError::Separation {
                norm,
                bound: opts.separation_bound,
            });
        }
    }

    let coefficients: Vec<f64> = (0..k).map(|j| beta[j + 1] / sds[j]).collect();
    let intercept = beta[0] - (0..k).map(|j| coefficients[j] * means[j]).sum::<f64>();
    Ok(PropensityModel {
        covariates_used: names.to_vec(),
        coefficients,
        intercept,
        converged,
        iterations,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn weighted_gram(design: &[Vec<f64>], w: impl Fn(usize) -> f64, p: usize) -> Vec<f64> {
    let mut g = vec![0.0; p * p];
    for (i, z) in design.iter().enumerate() {
        let wi = w(i);
        for a in 0..p {
            for b in a..p {
                g[a * p + b] += wi * z[a] * z[b];
            }
        }
    }
    let n = design.len() as f64;
    for a in 0..p {
        for b in a..p {
            g[a * p + b] /= n;
            g[b * p + a] = g[a * p + b];
        }
    }
    g
}

/// Exclusion rule deciding which units lie in the region of viable support.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum SupportRule {
    /// Retain units with score in the closed interval `[lo, hi]`.
    Crump { lo: f64, hi: f64 },
    /// Retain treated units scoring at most the largest control score and
    /// controls scoring at least the smallest treated score.
    DehejiaWahba,
}

impl SupportRule {
    pub const CRUMP_DEFAULT: SupportRule = SupportRule::Crump { lo: 0.1, hi: 0.9 };

    pub fn name(&self) -> &'static str {
        match self {
            SupportRule::Crump { .. } => "crump",
            SupportRule::DehejiaWahba => "dehejia_wahba",
        }
    }

    /// Apply the rule to precomputed scores.
    pub fn flags(&self, scores: &[f64], treated: &[bool]) -> Vec<bool> {
        match *self {
            SupportRule::Crump { lo, hi } => scores.iter().map(|&e| lo <= e && e <= hi).collect(),
            SupportRule::DehejiaWahba => {
                let arm = |t: bool| {
                    scores
                        .iter()
                        .zip(treated)
                        .filter(move |(_, &z)| z == t)
                        .map(|(&e, _)| e)
                };
                let max_control = arm(false).fold(f64::NEG_INFINITY, f64::max);
                let min_treated = arm(true).fold(f64::INFINITY, f64::min);
                scores
                    .iter()
                    .zip(treated)
                    .map(|(&e, &z)| if z { e <= max_control } else { e >= min_treated })
                    .collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupportFlags {
    /// `true` keeps the unit (a positive point for the maximal box).
    pub per_unit: Vec<bool>,
    pub rule_name: String,
    pub scores: Vec<f64>,
    pub model: PropensityModel,
}

impl SupportFlags {
    pub fn retained(&self) -> usize {
        self.per_unit.iter().filter(|&&f| f).count()
    }

    /// Audit table `id,score,flag`.
    pub fn write_csv<W: io::Write>(&self, ds: &Dataset, writer: W) -> io::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["id", "score", "flag"])?;
        for ((u, s), f) in ds.units.iter().zip(&self.scores).zip(&self.per_unit) {
            w.write_record([u.id.clone(), s.to_string(), u8::from(*f).to_string()])?;
        }
        w.flush()
    }
}

/// Fit a fresh score model on `score_covariates` and apply `rule`.
pub fn mark_support(
    ds: &Dataset,
    rule: SupportRule,
    score_covariates: &[String],
    opts: &FitOptions,
) -> Result<SupportFlags> {
    let model = fit_logistic(ds, score_covariates, opts)?;
    mark_support_with_model(ds, rule, model)
}

/// Apply `rule` with an already fitted model, without refitting.
pub fn mark_support_with_model(
    ds: &Dataset,
    rule: SupportRule,
    model: PropensityModel,
) -> Result<SupportFlags> {
    let scores = model.scores(ds)?;
    Ok(SupportFlags {
        per_unit: rule.flags(&scores, &ds.treatments()),
        rule_name: rule.name().to_string(),
        scores,
        model,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn symmetric_data_gives_zero_fit() {
        let x = vec![vec![-1.0], vec![1.0], vec![-1.0], vec![1.0]];
        let y = vec![true, true, false, false];
        let m = fit_logistic_matrix(&x, &y, &names(&["x"]), &FitOptions::default()).unwrap();
        assert!(m.converged);
        assert!(m.coefficients[0].abs() < 1e-8);
        assert!(m.intercept.abs() < 1e-8);
    }

    #[test]
    fn all_treated_has_no_contrast() {
        let x = vec![vec![0.0], vec![1.0]];
        let err = fit_logistic_matrix(&x, &[true, true], &names(&["x"]), &FitOptions::default())
            .unwrap_err();
        assert!(matches!(err, PropensityError::NoContrast { treated: 2, control: 0 }));
    }

    #[test]
    fn collinear_columns_are_named() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 2.0 * i as f64 + 1.0]).collect();
        let y: Vec<bool> = (0..10).map(|i| i % 3 == 0).collect();
        let err = fit_logistic_matrix(&x, &y, &names(&["a", "b"]), &FitOptions::default())
            .unwrap_err();
        match err {
            PropensityError::RankDeficient { column, partners } => {
                assert_eq!(column, "b");
                assert!(partners.contains(&"a".to_string()));
            }
            other => panic!("{other:?}"),
        }
        let constant: Vec<Vec<f64>> = (0..4).map(|_| vec![1.0]).collect();
        assert!(matches!(
            fit_logistic_matrix(&constant, &[true, false, true, false], &names(&["c"]), &FitOptions::default()),
            Err(PropensityError::RankDeficient { .. })
        ));
    }

    #[test]
    fn separated_arms_are_detected() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let y: Vec<bool> = (0..10).map(|i| i >= 5).collect();
        let err = fit_logistic_matrix(&x, &y, &names(&["x"]), &FitOptions::default()).unwrap_err();
        assert!(matches!(err, PropensityError::Separation { .. }), "{err:?}");
    }

    fn model(intercept: f64, coefficients: Vec<f64>) -> PropensityModel {
        PropensityModel {
            covariates_used: (0..coefficients.len()).map(|i| format!("x{i}")).collect(),
            coefficients,
            intercept,
            converged: true,
            iterations: 0,
        }
    }

    #[test]
    fn predict_closed_forms() {
        assert_eq!(model(0.0, vec![0.0]).predict(&[5.0]).unwrap(), 0.5);
        assert!(model(20.0, vec![]).predict(&[]).unwrap() > 0.999999);
        assert!((model(3f64.ln(), vec![]).predict(&[]).unwrap() - 0.75).abs() < 1e-15);
        assert!(model(800.0, vec![]).predict(&[]).unwrap() < 1.0);
        assert!(model(-800.0, vec![]).predict(&[]).unwrap() > 0.0);
        assert!(model(0.0, vec![1.0]).predict(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn crump_bounds_are_closed() {
        let rule = SupportRule::CRUMP_DEFAULT;
        let flags = rule.flags(&[0.95, 0.9, 0.1, 0.05, 0.5], &[true; 5]);
        assert_eq!(flags, vec![false, true, true, false, true]);
    }

    #[test]
    fn dehejia_wahba_reading() {
        let scores = [0.05, 0.2, 0.3, 0.8, 0.1, 0.4];
        let treated = [true, true, true, true, false, false];
        let flags = SupportRule::DehejiaWahba.flags(&scores, &treated);
        // Low-scoring treated units stay; the treated unit above every control goes.
        assert_eq!(flags, vec![true, true, true, false, true, true]);
        let equal = SupportRule::DehejiaWahba.flags(&[0.3; 4], &[true, false, true, false]);
        assert!(equal.iter().all(|&f| f));
    }

    proptest! {
        #[test]
        fn predict_increases_with_intercept(b in -10.0f64..10.0, x in -3.0f64..3.0, a in -5.0f64..5.0, da in 0.01f64..2.0) {
            let lo = model(a, vec![b]).predict(&[x]).unwrap();
            let hi = model(a + da, vec![b]).predict(&[x]).unwrap();
            prop_assert!(hi > lo);
        }

        #[test]
        fn dehejia_wahba_depends_only_on_ranks(scores in proptest::collection::vec(0.01f64..0.99, 4..20), seed in 0u64..1000) {
            let treated: Vec<bool> = (0..scores.len()).map(|i| (seed >> (i % 10)) & 1 == 1 || i == 0).collect();
            let mut treated = treated;
            treated[1] = false;
            let transformed: Vec<f64> = scores.iter().map(|s| (s / (1.0 - s)).ln() * 3.0 + 1.0).collect();
            prop_assert_eq!(
                SupportRule::DehejiaWahba.flags(&scores, &treated),
                SupportRule::DehejiaWahba.flags(&transformed, &treated)
            );
        }

        #[test]
        fn crump_ignores_order(scores in proptest::collection::vec(0.0f64..1.0, 1..20)) {
            let t = vec![true; scores.len()];
            let rule = SupportRule::CRUMP_DEFAULT;
            let mut rev = scores.clone();
            rev.reverse();
            let mut f = rule.flags(&rev, &t);
            f.reverse();
            prop_assert_eq!(rule.flags(&scores, &t), f);
        }
    }
}
