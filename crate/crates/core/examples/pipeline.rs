//! Full run driven by `examples/pipeline.toml`: a synthetic cohort with a
//! region of treated-only units goes through support, the maximal box,
//! matching, and inference.
//!
//! ```bash
//! cargo run --release --example pipeline
//! ```

use std::fs;
use std::path::Path;

use studypop::cli::write_cohort;
use studypop::pipeline::{run_pipeline, Emitter, PipelineConfig, RunStatus};
use studypop::synth::{generate_cohort, CohortParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let work = std::env::temp_dir().join("studypop-pipeline-example");
    let cohort = generate_cohort(
        &CohortParams {
            overlap_gap: 0.5,
            ..CohortParams::default()
        },
        1,
    )?;
    let mut out = Emitter::new(work.join("data"))?;
    write_cohort(&mut out, &cohort)?;
    out.finish()?;

    let text = fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/pipeline.toml"))?;
    let config = PipelineConfig::from_toml_str(&text, &work)?;
    let report = run_pipeline(&config)?;

    let b = &report.box_;
    println!("box {:?}: {:?} to {:?}", b.record.dimension_names, b.record.lower, b.record.upper);
    println!("retained {} of {} units", b.retained.units, report.loaded.units);
    for a in &report.attempts {
        println!("attempt {}:{} failing {:?} {}", a.max_treated, a.max_controls, a.failing, a.error.as_deref().unwrap_or(""));
    }
    if report.status == RunStatus::Success {
        let inf = report.inference.as_ref().expect("inference on success");
        let ids: Vec<String> = fs::read_to_string(config.output_dir.join("study.csv"))?
            .lines()
            .skip(1)
            .filter_map(|l| l.split(',').next().map(str::to_string))
            .collect();
        println!(
            "ATE {:.4}, SE {:?}, CI {:?}; true effect in the box {:.4}",
            inf.overall.ate_hat,
            inf.overall.se,
            inf.overall.ci,
            cohort.true_effect_over(ids.iter().map(String::as_str))
        );
        for s in &inf.subgroups {
            println!("  key {}: {:?}", s.level, s.report.as_ref().map(|r| (r.ate_hat, r.ci)));
        }
    }
    println!("outputs in {}", config.output_dir.display());
    Ok(())
}
