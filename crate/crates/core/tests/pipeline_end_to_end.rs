mod common;

use std::collections::HashSet;
use std::fs;
use std::process::Command;

use common::{cohort_config, ids_in, read};
use studypop::dataset::{filter_to_box, load_csv, SchemaSpec};
use studypop::maxbox::BoxRecord;
use studypop::pipeline::{run_pipeline, Manifest, PipelineError, RunStatus};
use studypop::propensity::{mark_support, FitOptions, SupportRule};
use studypop::synth::{generate_cohort, CohortParams};

const BIN: &str = env!("CARGO_BIN_EXE_studypop");

fn gap(g: f64) -> CohortParams {
    CohortParams {
        overlap_gap: g,
        ..CohortParams::default()
    }
}

#[test]
fn strong_overlap_balances_first_try_and_covers_truth() {
    let dir = tempfile::tempdir().unwrap();
    let (cohort, cfg) = cohort_config(dir.path(), &gap(0.0), 1);
    let report = run_pipeline(&cfg).unwrap();
    assert_eq!(report.status, RunStatus::Success);
    assert_eq!(report.attempts.len(), 1);
    assert!(report.attempts[0].balance_pass);
    let ids = ids_in(&cfg.output_dir.join("study.csv"));
    let truth = cohort.true_effect_over(ids.iter().map(String::as_str));
    let [lo, hi] = report.inference.unwrap().overall.ci.unwrap();
    assert!(lo <= truth && truth <= hi, "{truth} outside [{lo}, {hi}]");
}

#[test]
fn zero_effect_estimate_within_three_se() {
    for seed in [2, 3, 4] {
        let dir = tempfile::tempdir().unwrap();
        let (_, cfg) = cohort_config(dir.path(), &gap(0.0), seed);
        let report = run_pipeline(&cfg).unwrap();
        let o = report.inference.unwrap().overall;
        assert!(o.ate_hat.abs() <= 3.0 * o.se.unwrap(), "seed {seed}: {} vs se {:?}", o.ate_hat, o.se);
    }
}

#[test]
fn shifted_treated_arm_keeps_a_strict_subset() {
    let dir = tempfile::tempdir().unwrap();
    let (_, cfg) = cohort_config(dir.path(), &gap(0.5), 1);
    let report = run_pipeline(&cfg).unwrap();
    let retained = report.box_.retained.units;
    assert!(retained < report.loaded.units && retained > report.loaded.units / 2, "{retained}");

    let spec = SchemaSpec::from_file(cfg.output_dir.join("imputed.schema.toml")).unwrap();
    let imputed = load_csv(cfg.output_dir.join("imputed.csv"), &spec).unwrap();
    let record: BoxRecord = serde_json::from_slice(&read(cfg.output_dir.join("box.json"))).unwrap();
    let filtered = filter_to_box(&imputed, &record.to_box().unwrap()).unwrap();
    assert_eq!(filtered.dataset.len(), retained);
    assert_eq!(filtered.dataset.treated_count(), report.box_.retained.treated);
    assert_eq!(ids_in(&cfg.output_dir.join("study.csv")).len(), retained);

    // Every plotted point's flag agrees with the box.
    let bx = record.to_box().unwrap();
    let mut rdr = csv::Reader::from_path(cfg.output_dir.join("box_plot.csv")).unwrap();
    assert_eq!(
        rdr.headers().unwrap().iter().collect::<Vec<_>>(),
        ["id", "x1", "x2", "arm", "support_flag", "inside_box"]
    );
    let mut inside = 0;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let x = [rec[1].parse::<f64>().unwrap(), rec[2].parse().unwrap()];
        assert_eq!(&rec[5] == "1", bx.contains(&x));
        inside += usize::from(&rec[5] == "1");
    }
    assert_eq!(inside, retained);

    let mut rdr = csv::Reader::from_path(cfg.output_dir.join("love_plot.csv")).unwrap();
    let thresholds: HashSet<String> = rdr.records().map(|r| r.unwrap()[4].to_string()).collect();
    assert!(thresholds.iter().all(|t| ["0.05", "0.1", "0.15"].contains(&t.as_str())), "{thresholds:?}");
}

#[test]
fn missing_column_is_a_config_error_with_no_output() {
    let dir = tempfile::tempdir().unwrap();
    let (_, mut cfg) = cohort_config(dir.path(), &gap(0.0), 1);
    cfg.support.score_covariates = Some(vec!["lactate".into()]);
    assert!(matches!(run_pipeline(&cfg), Err(PipelineError::Config(_))));
    assert!(!cfg.output_dir.exists());

    let (_, mut cfg) = cohort_config(dir.path(), &gap(0.0), 1);
    cfg.box_.covariates = Some(vec!["x1".into(), "apache".into()]);
    assert!(matches!(run_pipeline(&cfg), Err(PipelineError::Config(_))));
    assert!(!cfg.output_dir.exists());
}

#[test]
fn unattainable_balance_stops_before_inference_with_status_two() {
    let dir = tempfile::tempdir().unwrap();
    let (_, mut cfg) = cohort_config(dir.path(), &gap(0.0), 1);
    cfg.thresholds.tier1 = 1e-6;
    cfg.matching.attempts = vec![[3, 3], [7, 7]];
    let report = run_pipeline(&cfg).unwrap();
    assert_eq!(report.status, RunStatus::BalanceNotAttained);
    assert!(report.inference.is_none());
    assert!(cfg.output_dir.join("love_plot.csv").exists());
    assert!(cfg.output_dir.join("balance_3_3.csv").exists());
    assert!(!cfg.output_dir.join("inference.json").exists());

    let status = Command::new(BIN)
        .args(["pipeline", "-i"])
        .arg(&cfg.input)
        .arg("-s")
        .arg(&cfg.schema)
        .arg("-o")
        .arg(dir.path().join("cli"))
        .args(["--ratio", "7:7"])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(0), "{}", String::from_utf8_lossy(&status.stderr));

    fs::write(dir.path().join("strict.toml"), format!(
        "input = {:?}\nschema = {:?}\noutput_dir = \"strict\"\n[thresholds]\ntier1 = 1e-6\n",
        cfg.input, cfg.schema
    ))
    .unwrap();
    let status = Command::new(BIN).args(["pipeline", "-c"]).arg(dir.path().join("strict.toml")).output().unwrap();
    assert_eq!(status.status.code(), Some(2));

    let status = Command::new(BIN)
        .args(["pipeline", "-i", "/nonexistent.csv", "-s"])
        .arg(&cfg.schema)
        .args(["-o", "/tmp/never"])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(1));
}

#[test]
fn empty_subgroup_is_noted_in_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let (_, cfg) = cohort_config(dir.path(), &gap(0.5), 1);
    run_pipeline(&cfg).unwrap();
    let inside: HashSet<String> = ids_in(&cfg.output_dir.join("study.csv")).into_iter().collect();

    // Relabel the key so that level 1 holds exactly the units outside the
    // box. Support and the box do not depend on the key.
    let text = fs::read_to_string(&cfg.input).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    let key_col = header.split(',').position(|h| h == "key").unwrap();
    let mut out = vec![header.to_string()];
    for line in lines {
        let mut cells: Vec<String> = line.split(',').map(str::to_string).collect();
        cells[key_col] = if inside.contains(&cells[0]) { "0" } else { "1" }.into();
        out.push(cells.join(","));
    }
    fs::write(&cfg.input, out.join("\n") + "\n").unwrap();

    let mut cfg2 = cfg.clone();
    cfg2.output_dir = dir.path().join("out2");
    let report = run_pipeline(&cfg2).unwrap();
    let subs = report.inference.unwrap().subgroups;
    let empty = subs.iter().find(|s| s.level == "1").unwrap();
    assert!(empty.report.is_none() && empty.strata == 0);
    assert!(!cfg2.output_dir.join("grid_key_1.csv").exists());
    assert!(cfg2.output_dir.join("grid_key_0.csv").exists());
    let manifest: Manifest = serde_json::from_slice(&read(cfg2.output_dir.join("manifest.json"))).unwrap();
    assert!(manifest.notes.iter().any(|n| n.contains("`1`")));
}

#[test]
fn manifest_lists_every_output_with_its_checksum() {
    let dir = tempfile::tempdir().unwrap();
    let (_, mut cfg) = cohort_config(dir.path(), &gap(0.5), 7);
    cfg.simulation = Some(studypop::pipeline::SimulationConfig { draws: 2000 });
    run_pipeline(&cfg).unwrap();
    let manifest: Manifest = serde_json::from_slice(&read(cfg.output_dir.join("manifest.json"))).unwrap();
    let mut on_disk: Vec<String> = fs::read_dir(&cfg.output_dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n != "manifest.json")
        .collect();
    on_disk.sort();
    let listed: Vec<String> = manifest.files.iter().map(|f| f.path.clone()).collect();
    assert_eq!(listed, on_disk);
    for f in &manifest.files {
        let bytes = read(cfg.output_dir.join(&f.path));
        assert_eq!(bytes.len(), f.bytes);
        use sha2::Digest;
        assert_eq!(hex::encode(sha2::Sha256::digest(&bytes)), f.sha256);
    }
    assert!(listed.contains(&"qq.csv".to_string()));
}

#[test]
fn staged_rerun_from_intermediates_reproduces_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let (_, cfg) = cohort_config(dir.path(), &gap(0.5), 2);
    run_pipeline(&cfg).unwrap();
    let full = &cfg.output_dir;
    let st = dir.path().join("staged");
    let run = |args: &[&str]| {
        let out = Command::new(BIN).args(args).output().unwrap();
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    };
    let p = |s: &str| st.join(s).to_str().unwrap().to_string();
    let f = |s: &str| full.join(s).to_str().unwrap().to_string();

    run(&["impute", "-i", cfg.input.to_str().unwrap(), "-s", cfg.schema.to_str().unwrap(), "-o", &p("1")]);
    run(&["support", "-i", &p("1/imputed.csv"), "-s", &p("1/imputed.schema.toml"), "-o", &p("2")]);
    run(&["box", "-i", &p("1/imputed.csv"), "-s", &p("1/imputed.schema.toml"), "--support", &p("2/support.csv"), "-o", &p("3")]);
    run(&["match", "-i", &p("3/study.csv"), "-s", &p("3/study.schema.toml"), "-o", &p("4")]);
    // Resume inference from the full run's persisted intermediates too.
    run(&["infer", "-i", &f("study.csv"), "-s", &f("study.schema.toml"), "--strata", &f("strata.csv"), "-o", &p("5")]);

    for (staged, name) in [
        ("1/imputed.csv", "imputed.csv"),
        ("2/support.csv", "support.csv"),
        ("3/box.json", "box.json"),
        ("3/study.csv", "study.csv"),
        ("4/propensity.json", "propensity.json"),
        ("4/strata.csv", "strata.csv"),
        ("4/love_plot.csv", "love_plot.csv"),
        ("5/inference.json", "inference.json"),
        ("5/grid.csv", "grid.csv"),
        ("5/allocation.csv", "allocation.csv"),
    ] {
        assert!(read(st.join(staged)) == read(full.join(name)), "{staged} differs");
    }
}

#[test]
fn overlap_without_gap_trims_only_extremes_under_dehejia_wahba() {
    let cohort = generate_cohort(&gap(0.0), 6).unwrap();
    let ds = studypop::dataset::impute_with_indicators(&cohort.dataset).unwrap();
    let covs = ds.schema.box_covariates.clone();
    let flags = mark_support(&ds, SupportRule::DehejiaWahba, &covs, &FitOptions::default()).unwrap();
    let z = ds.treatments();
    let max_c = flags.scores.iter().zip(&z).filter(|(_, &t)| !t).map(|(s, _)| *s).fold(f64::MIN, f64::max);
    let min_t = flags.scores.iter().zip(&z).filter(|(_, &t)| t).map(|(s, _)| *s).fold(f64::MAX, f64::min);
    let mut excluded = 0;
    for ((&s, &t), &keep) in flags.scores.iter().zip(&z).zip(&flags.per_unit) {
        assert_eq!(keep, if t { s <= max_c } else { s >= min_t });
        excluded += usize::from(!keep);
    }
    // Only units beyond the other arm's extreme order statistic go, and
    // with full overlap there are few of them.
    assert!(excluded <= ds.len() / 50, "{excluded}");
}
