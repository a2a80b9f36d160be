//! Propensity fit on a synthetic cohort and the two exclusion rules.
//!
//! ```bash
//! cargo run --example common_support
//! ```

use studypop::dataset::impute_with_indicators;
use studypop::propensity::{mark_support, FitOptions, SupportRule};
use studypop::synth::{generate_cohort, CohortParams};

fn main() {
    let params = CohortParams {
        n: 800,
        overlap_gap: 1.5,
        ..CohortParams::default()
    };
    let cohort = generate_cohort(&params, 11).expect("valid parameters");
    let ds = impute_with_indicators(&cohort.dataset).expect("raw data");
    let covs = ds.schema.box_covariates.clone();

    for rule in [SupportRule::CRUMP_DEFAULT, SupportRule::DehejiaWahba] {
        let flags = mark_support(&ds, rule, &covs, &FitOptions::default()).expect("fit");
        println!(
            "{:>14}: {} of {} units retained; coefficients {:?}",
            flags.rule_name,
            flags.retained(),
            ds.len(),
            flags.model.coefficients
        );
    }
}
