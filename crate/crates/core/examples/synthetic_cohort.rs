//! Generate a cohort with known potential outcomes and write it, with its
//! schema and truth table, to a directory.
//!
//! ```bash
//! cargo run --example synthetic_cohort -- /tmp/cohort
//! ```

use std::fs::{self, File};
use std::path::PathBuf;

use studypop::synth::{generate_cohort, CohortParams};

fn main() -> std::io::Result<()> {
    let dir = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("studypop-cohort"));
    fs::create_dir_all(&dir)?;
    let params = CohortParams {
        overlap_gap: 1.0,
        true_effect: 0.05,
        ..CohortParams::default()
    };
    let cohort = generate_cohort(&params, 2024).expect("valid parameters");
    cohort.write_csv(File::create(dir.join("cohort.csv"))?)?;
    cohort.write_truth_csv(File::create(dir.join("truth.csv"))?)?;
    fs::write(dir.join("cohort.schema.toml"), cohort.spec.to_toml_string())?;
    println!("{}", serde_json::to_string_pretty(&cohort.summary).expect("serializable"));
    println!("written to {}", dir.display());
    Ok(())
}
