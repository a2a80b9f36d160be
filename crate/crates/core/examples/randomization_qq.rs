//! Randomization distribution of the estimate for a full-match-shaped
//! experiment: exact moments by enumeration on a small one, and a QQ check
//! against the normal on a large one.
//!
//! ```bash
//! cargo run --release --example randomization_qq
//! ```

use studypop::inference::{eq1_variance, qq_check, simulate_randomization, SimulationMode};
use studypop::synth::{generate_experiment, ExperimentParams};

fn main() {
    let small = ExperimentParams {
        n: 24,
        max_stratum: 4,
        ..ExperimentParams::default()
    };
    let completion = generate_experiment(&small, 3).expect("valid parameters");
    let exact = simulate_randomization(&completion, SimulationMode::Exhaustive).expect("small");
    println!("exhaustive over {} assignments", exact.samples.len());
    println!("  mean {:?}, true effect {}", exact.exact_mean, exact.true_effect);
    println!("  variance {:?}, closed form {}", exact.exact_variance, eq1_variance(&completion));

    let large = ExperimentParams {
        n: 900,
        ..ExperimentParams::default()
    };
    let completion = generate_experiment(&large, 4).expect("valid parameters");
    let mc = simulate_randomization(&completion, SimulationMode::MonteCarlo { draws: 50_000, seed: 9 }).expect("draws");
    let check = qq_check(&mc, 0.025, 0.975);
    println!(
        "Monte Carlo: mean {:.5} variance {:.3e}; QQ slope {:.4}, max deviation {:.4} SD",
        mc.mean, mc.variance, check.slope, check.max_deviation
    );
}
