//! Worst-case randomization variance over every composite null and the
//! confidence interval obtained by inverting the tests.
//!
//! ```bash
//! cargo run --example worst_case_interval
//! ```

use studypop::inference::{estimate_ate, test_and_invert, StratumObservation, WorstCaseGrid};

fn main() {
    // (stratum size, treated, treated events, control events)
    let strata = [(2, 1, 1, 0), (3, 1, 0, 1), (4, 1, 1, 1), (3, 2, 1, 0), (2, 1, 0, 0), (5, 1, 1, 2)];
    let obs: Vec<StratumObservation> = strata
        .iter()
        .map(|&(n, m, t1, c1)| StratumObservation::new(n, m, t1, c1).expect("valid stratum"))
        .collect();

    let grid = WorstCaseGrid::compute(&obs).expect("nonempty");
    let ate = estimate_ate(&obs);
    let report = test_and_invert(&ate, &grid, 0.05).expect("alpha in range");
    println!("ATE {} = {:.4}", report.ate_hat_exact, report.ate_hat);
    println!("worst-case SE {:?} at d = {:?}", report.se, report.se_d);
    println!("95% CI {:?} (contiguous: {})", report.ci, report.contiguous);

    println!("\n   d  delta0  max variance        p");
    for g in report.grid.iter().filter(|g| g.feasible) {
        println!("{:>4} {:>7.3} {:>13.6} {:>8.4}", g.d, g.delta0, g.max_variance.unwrap_or(0.0), g.p);
    }
    let (lo, hi) = grid.feasible_range();
    println!("feasible d in [{lo}, {hi}]");
}
