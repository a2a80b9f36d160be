//! Restricted full matching on rank-based Mahalanobis distances with a
//! propensity caliper, followed by a balance report.
//!
//! ```bash
//! cargo run --example full_matching
//! ```

use studypop::dataset::impute_with_indicators;
use studypop::matching::{apply_caliper, full_match, rank_mahalanobis, standardized_differences, TierThresholds};
use studypop::propensity::{fit_logistic, FitOptions};
use studypop::synth::{generate_cohort, CohortParams};

fn main() {
    let params = CohortParams {
        n: 300,
        ..CohortParams::default()
    };
    let cohort = generate_cohort(&params, 5).expect("valid parameters");
    let ds = impute_with_indicators(&cohort.dataset).expect("raw data");
    let covs: Vec<String> = ds.schema.covariate_names().map(str::to_string).collect();

    let model = fit_logistic(&ds, &covs, &FitOptions::default()).expect("fit");
    let scores = model.scores(&ds).expect("scores");
    let dm = apply_caliper(&rank_mahalanobis(&ds, &covs).expect("distances"), &scores, 0.2, None);
    let keys: Vec<String> = ds.units.iter().map(|u| u.exact_key.clone()).collect();

    for (kt, kc) in [(2, 2), (4, 4), (7, 7)] {
        match full_match(&dm, Some(&keys), kt, kc) {
            Ok(fm) => {
                let strat = fm.stratification;
                let report = standardized_differences(&ds, Some(&strat), &TierThresholds::default()).expect("balance");
                println!(
                    "{kt}:{kc}: {} strata, objective {:.2}, failing {:?}",
                    strat.strata.len(),
                    strat.objective(&dm),
                    report.failures()
                );
                if kt == 7 {
                    for row in &report.rows {
                        println!(
                            "  {:<12} tier {} before {:+.3} after {:+.3}",
                            row.covariate,
                            row.tier,
                            row.before,
                            row.after.unwrap_or(f64::NAN)
                        );
                    }
                }
            }
            Err(e) => println!("{kt}:{kc}: {e}"),
        }
    }
}
