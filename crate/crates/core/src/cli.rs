//! Command-line front end. Every subcommand reads the same TOML config as
//! `pipeline`; flags override the matching config keys.

use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::inference::{qq_check, InferenceReport, simulate_randomization, OptionCache, SimulationMode};
use crate::matching::{standardized_differences, Stratification};
use crate::maxbox::{maximal_box_with, read_points_csv, BoxRecord, MaxBoxOptions};
use crate::pipeline::{
    self, infer, load_and_resolve, read_support_flags, stage_box, stage_impute,
    stage_infer, stage_match, stage_propensity, stage_support, witness_completion, Emitter,
    PipelineConfig, PipelineError, RuleName, RunStatus, SimulationConfig,
};
use crate::synth::{generate_cohort, substream_seed, CohortParams, SyntheticCohort};

#[derive(Debug, Parser)]
#[command(name = "studypop", version, about = "Interpretable study populations, full matching, and worst-case randomization inference")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Pipeline config (TOML); its keys are the defaults for every flag.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Input CSV.
    #[arg(long, short)]
    pub input: Option<PathBuf>,
    /// Schema TOML describing the input columns.
    #[arg(long, short)]
    pub schema: Option<PathBuf>,
    /// Directory for outputs and the manifest.
    #[arg(long, short)]
    pub output_dir: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum RuleArg {
    Crump,
    DehejiaWahba,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Mean-impute missing covariates and add missingness indicators.
    Impute {
        #[command(flatten)]
        common: Common,
    },
    /// Fit the propensity model on the matching covariates.
    Propensity {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        covariates: Option<Vec<String>>,
    },
    /// Mark units with common support.
    Support {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        rule: Option<RuleArg>,
        #[arg(long)]
        lo: Option<f64>,
        #[arg(long)]
        hi: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        score_covariates: Option<Vec<String>>,
    },
    /// Maximal box over support flags, and the study population inside it.
    Box {
        #[command(flatten)]
        common: Common,
        /// `support.csv` from the support stage.
        #[arg(long, conflicts_with = "points")]
        support: Option<PathBuf>,
        /// Standalone labeled points (`label` column plus dimensions).
        #[arg(long)]
        points: Option<PathBuf>,
        #[arg(long)]
        budget: Option<i64>,
        #[arg(long)]
        node_limit: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        covariates: Option<Vec<String>>,
    },
    /// Refit, build distances, and run the matching attempts.
    Match {
        #[command(flatten)]
        common: Common,
        /// Ratio caps as `treated:controls`; repeat to try several in order.
        #[arg(long = "ratio", value_parser = parse_ratio)]
        ratios: Vec<[usize; 2]>,
        #[arg(long)]
        caliper_width: Option<f64>,
        /// Ignore the exact-match key.
        #[arg(long)]
        no_exact: bool,
    },
    /// Standardized differences before, and after if strata are given.
    Balance {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        strata: Option<PathBuf>,
    },
    /// Worst-case variance grid, test inversion, and subgroups.
    Infer {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        strata: PathBuf,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        no_subgroups: bool,
        #[arg(long)]
        no_exact: bool,
    },
    /// Randomization distribution of the estimate at a worst-case allocation.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        strata: PathBuf,
        /// Grid point `d = N * delta0`; defaults to the one used for the SE.
        #[arg(long, allow_hyphen_values = true)]
        d: Option<i64>,
        #[arg(long, default_value_t = 100_000)]
        draws: usize,
        /// Enumerate every assignment instead of sampling.
        #[arg(long)]
        exhaustive: bool,
    },
    /// Synthetic cohort with known potential outcomes.
    Generate {
        #[arg(long, short)]
        output_dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// TOML file of generator parameters; flags below override it.
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        covariates: Option<usize>,
        #[arg(long)]
        overlap_gap: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        true_effect: Option<f64>,
    },
    /// Every stage end to end.
    Pipeline {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        budget: Option<i64>,
        #[arg(long = "ratio", value_parser = parse_ratio)]
        ratios: Vec<[usize; 2]>,
        /// Monte-Carlo draws for the QQ diagnostic.
        #[arg(long)]
        draws: Option<usize>,
    },
}

fn parse_ratio(s: &str) -> Result<[usize; 2], String> {
    let (a, b) = s.split_once(':').ok_or_else(|| format!("expected `kt:kc`, got `{s}`"))?;
    let a = a.trim().parse().map_err(|e| format!("{e}"))?;
    let b = b.trim().parse().map_err(|e| format!("{e}"))?;
    Ok([a, b])
}

type CliResult<T> = std::result::Result<T, PipelineError>;

fn missing(what: &str) -> PipelineError {
    PipelineError::Config(format!("`--{what}` is required without a config that sets it"))
}

/// Config from `--config`, with the path flags applied on top.
pub fn resolve_config(common: &Common) -> CliResult<PipelineConfig> {
    let mut cfg = match &common.config {
        Some(p) => PipelineConfig::from_file(p)?,
        None => PipelineConfig::new(
            common.input.clone().ok_or_else(|| missing("input"))?,
            common.schema.clone().ok_or_else(|| missing("schema"))?,
            common.output_dir.clone().ok_or_else(|| missing("output-dir"))?,
        ),
    };
    if let Some(p) = &common.input {
        cfg.input = p.clone();
    }
    if let Some(p) = &common.schema {
        cfg.schema = p.clone();
    }
    if let Some(p) = &common.output_dir {
        cfg.output_dir = p.clone();
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn open(path: &Path) -> CliResult<File> {
    File::open(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
}

fn read_strata(path: &Path, ds: &crate::dataset::Dataset, cfg: &PipelineConfig) -> CliResult<Stratification> {
    let (kt, kc) = cfg
        .matching
        .attempts
        .iter()
        .fold((1, 1), |(a, b), r| (a.max(r[0]), b.max(r[1])));
    let strat = Stratification::read_csv(ds, open(path)?, kt, kc).map_err(|e| PipelineError::Stage {
        stage: "strata",
        source: e.into(),
    })?;
    // Caps come from the strata themselves when read back.
    let kt = strat.strata.iter().map(|s| s.treated).max().unwrap_or(1);
    let kc = strat.strata.iter().map(|s| s.controls()).max().unwrap_or(1);
    Ok(Stratification {
        max_treated: kt,
        max_controls: kc,
        ..strat
    })
}

#[derive(Serialize)]
struct SimulationSummary {
    d: i64,
    mode: &'static str,
    draws: usize,
    mean: f64,
    variance: f64,
    worst_case_variance: Option<f64>,
    true_effect: f64,
    qq_slope: f64,
    qq_max_deviation: f64,
}

/// Run one parsed command; returns the process exit status.
pub fn execute(cli: Cli) -> CliResult<ExitCode> {
    match cli.command {
        Command::Impute { common } => {
            let cfg = resolve_config(&common)?;
            let (raw, res) = load_and_resolve(&cfg)?;
            let mut out = Emitter::new(&cfg.output_dir)?;
            stage_impute(raw, res.exact_key.as_deref(), &mut out)?;
            out.finish()?;
        }
        Command::Propensity { common, covariates } => {
            let mut cfg = resolve_config(&common)?;
            if covariates.is_some() {
                cfg.matching.covariates = covariates;
            }
            let (ds, _) = load_and_resolve(&cfg)?;
            let mut out = Emitter::new(&cfg.output_dir)?;
            let mut warnings = Vec::new();
            stage_propensity(&ds, &cfg, &mut out, &mut warnings)?;
            warn_all(&warnings);
            out.finish()?;
        }
        Command::Support {
            common,
            rule,
            lo,
            hi,
            score_covariates,
        } => {
            let mut cfg = resolve_config(&common)?;
            if let Some(r) = rule {
                cfg.support.rule = match r {
                    RuleArg::Crump => RuleName::Crump,
                    RuleArg::DehejiaWahba => RuleName::DehejiaWahba,
                };
            }
            if let Some(v) = lo {
                cfg.support.crump_bounds[0] = v;
            }
            if let Some(v) = hi {
                cfg.support.crump_bounds[1] = v;
            }
            if score_covariates.is_some() {
                cfg.support.score_covariates = score_covariates;
            }
            let (ds, res) = load_and_resolve(&cfg)?;
            let mut out = Emitter::new(&cfg.output_dir)?;
            let flags = stage_support(&ds, &cfg, &res.score_covariates, &mut out)?;
            eprintln!("{} of {} units have support", flags.retained(), ds.len());
            out.finish()?;
        }
        Command::Box {
            common,
            support,
            points,
            budget,
            node_limit,
            covariates,
        } => {
            if let Some(p) = points {
                let out_dir = common.output_dir.clone().ok_or_else(|| missing("output-dir"))?;
                let pts = read_points_csv(open(&p)?).map_err(|e| PipelineError::Config(e.to_string()))?;
                let budget = crate::maxbox::budget_from_i64(budget.unwrap_or(0))
                    .map_err(|e| PipelineError::Config(e.to_string()))?;
                let opts = MaxBoxOptions {
                    dimension_names: Some(pts.dimension_names.clone()),
                    node_limit,
                };
                let solved = maximal_box_with(&pts.positives, &pts.negatives, budget, &opts).map_err(|e| {
                    PipelineError::Stage {
                        stage: "box",
                        source: e.into(),
                    }
                })?;
                let mut out = Emitter::new(out_dir)?;
                out.json("box.json", &BoxRecord::from(&solved))?;
                out.finish()?;
                return Ok(ExitCode::SUCCESS);
            }
            let mut cfg = resolve_config(&common)?;
            if let Some(b) = budget {
                cfg.box_.budget = b;
            }
            if node_limit.is_some() {
                cfg.box_.node_limit = node_limit;
            }
            if covariates.is_some() {
                cfg.box_.covariates = covariates;
            }
            let (ds, res) = load_and_resolve(&cfg)?;
            let support = support.ok_or_else(|| missing("support"))?;
            let flags = read_support_flags(&ds, open(&support)?)?;
            let mut out = Emitter::new(&cfg.output_dir)?;
            let mut warnings = Vec::new();
            let (summary, _) = stage_box(
                &ds,
                &flags,
                &cfg,
                res.budget,
                res.exact_key.as_deref(),
                &mut out,
                &mut warnings,
            )?;
            warn_all(&warnings);
            eprintln!("box retains {} of {} units", summary.retained.units, ds.len());
            out.finish()?;
        }
        Command::Match {
            common,
            ratios,
            caliper_width,
            no_exact,
        } => {
            let mut cfg = resolve_config(&common)?;
            if !ratios.is_empty() {
                cfg.matching.attempts = ratios;
            }
            if let Some(w) = caliper_width {
                cfg.caliper.width = w;
            }
            if no_exact {
                cfg.matching.exact = false;
            }
            let (study, res) = load_and_resolve(&cfg)?;
            let key = res.exact_key.as_deref().filter(|_| cfg.matching.exact);
            let mut out = Emitter::new(&cfg.output_dir)?;
            let mut warnings = Vec::new();
            let inputs = stage_propensity(&study, &cfg, &mut out, &mut warnings)?;
            warn_all(&warnings);
            let (attempts, chosen) = stage_match(&study, &cfg, key, &inputs.distances, &mut out)?;
            out.json("match.json", &attempts)?;
            out.finish()?;
            if chosen.is_none() {
                eprintln!("no attempt met the balance thresholds");
                return Ok(ExitCode::from(2));
            }
        }
        Command::Balance { common, strata } => {
            let cfg = resolve_config(&common)?;
            let (ds, _) = load_and_resolve(&cfg)?;
            let strat = strata.map(|p| read_strata(&p, &ds, &cfg)).transpose()?;
            let report = standardized_differences(&ds, strat.as_ref(), &cfg.thresholds).map_err(|e| {
                PipelineError::Stage {
                    stage: "balance",
                    source: e.into(),
                }
            })?;
            let mut out = Emitter::new(&cfg.output_dir)?;
            out.with("balance.csv", |w| report.write_csv(w))?;
            out.with("love_plot.csv", |w| report.write_love_plot(w))?;
            out.finish()?;
            if strat.is_some() && !report.all_pass() {
                eprintln!("failing covariates: {:?}", report.failures());
                return Ok(ExitCode::from(2));
            }
        }
        Command::Infer {
            common,
            strata,
            alpha,
            no_subgroups,
            no_exact,
        } => {
            let mut cfg = resolve_config(&common)?;
            if let Some(a) = alpha {
                cfg.alpha = a;
            }
            if no_subgroups {
                cfg.subgroups = false;
            }
            if no_exact {
                cfg.matching.exact = false;
            }
            let (study, res) = load_and_resolve(&cfg)?;
            let key = res.exact_key.as_deref().filter(|_| cfg.matching.exact);
            let strat = read_strata(&strata, &study, &cfg)?;
            let mut out = Emitter::new(&cfg.output_dir)?;
            let levels = if key.is_some() { study.exact_key_levels() } else { Vec::new() };
            let summary = stage_infer(&strat, &study, &cfg, &levels, &mut out)?;
            let o = &summary.overall;
            eprintln!("{}", headline(o));
            out.finish()?;
        }
        Command::Simulate {
            common,
            strata,
            d,
            draws,
            exhaustive,
        } => {
            let mut cfg = resolve_config(&common)?;
            cfg.simulation = Some(SimulationConfig { draws });
            let (study, _) = load_and_resolve(&cfg)?;
            let strat = read_strata(&strata, &study, &cfg)?;
            let mut cache = OptionCache::new();
            let (report, grid) = infer(&strat, &study, cfg.alpha, &mut cache).map_err(|e| PipelineError::Stage {
                stage: "inference",
                source: e.into(),
            })?;
            let d = d
                .or(report.se_d)
                .ok_or_else(|| PipelineError::Config("no feasible grid point to simulate at".into()))?;
            let witness = grid.result(d);
            if !witness.feasible {
                return Err(PipelineError::Config(format!("grid point d = {d} is infeasible")));
            }
            let completion = witness_completion(&strat, &study, &witness.allocation);
            let mode = if exhaustive {
                SimulationMode::Exhaustive
            } else {
                SimulationMode::MonteCarlo {
                    draws,
                    seed: substream_seed(cfg.seed, "monte-carlo"),
                }
            };
            let result = simulate_randomization(&completion, mode).map_err(|e| PipelineError::Stage {
                stage: "simulate",
                source: e.into(),
            })?;
            let check = qq_check(&result, 0.025, 0.975);
            let mut out = Emitter::new(&cfg.output_dir)?;
            out.with("qq.csv", |w| result.write_qq_csv(w))?;
            out.json(
                "simulation.json",
                &SimulationSummary {
                    d,
                    mode: if exhaustive { "exhaustive" } else { "monte_carlo" },
                    draws: result.samples.len(),
                    mean: result.mean,
                    variance: result.variance,
                    worst_case_variance: witness.max_variance_f64(),
                    true_effect: crate::inference::to_f64(&result.true_effect),
                    qq_slope: check.slope,
                    qq_max_deviation: check.max_deviation,
                },
            )?;
            out.finish()?;
        }
        Command::Generate {
            output_dir,
            seed,
            params,
            n,
            covariates,
            overlap_gap,
            true_effect,
        } => {
            let mut p = match params {
                Some(path) => {
                    let text = std::fs::read_to_string(&path)
                        .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
                    toml::from_str::<CohortParams>(&text).map_err(|e| PipelineError::Config(e.to_string()))?
                }
                None => CohortParams::default(),
            };
            if let Some(v) = n {
                p.n = v;
            }
            if let Some(v) = covariates {
                p.covariates = v;
            }
            if let Some(v) = overlap_gap {
                p.overlap_gap = v;
            }
            if let Some(v) = true_effect {
                p.true_effect = v;
            }
            let cohort = generate_cohort(&p, seed).map_err(|e| PipelineError::Stage {
                stage: "generate",
                source: e.into(),
            })?;
            let mut out = Emitter::new(output_dir)?;
            write_cohort(&mut out, &cohort)?;
            out.finish()?;
        }
        Command::Pipeline {
            common,
            alpha,
            budget,
            ratios,
            draws,
        } => {
            let mut cfg = resolve_config(&common)?;
            if let Some(a) = alpha {
                cfg.alpha = a;
            }
            if let Some(b) = budget {
                cfg.box_.budget = b;
            }
            if !ratios.is_empty() {
                cfg.matching.attempts = ratios;
            }
            if let Some(d) = draws {
                cfg.simulation = Some(SimulationConfig { draws: d });
            }
            let report = pipeline::run_pipeline(&cfg)?;
            warn_all(&report.warnings);
            match (&report.status, &report.inference) {
                (RunStatus::Success, Some(inf)) => {
                    let o = &inf.overall;
                    eprintln!(
                        "{} units in the box, ratio {:?}; {}",
                        report.box_.retained.units,
                        report.chosen.unwrap_or_default(),
                        headline(o)
                    );
                }
                _ => {
                    eprintln!("no matching attempt met the balance thresholds; see love_plot.csv");
                    return Ok(ExitCode::from(2));
                }
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

/// Cohort CSV, its schema, and the truth files.
pub fn write_cohort(out: &mut Emitter, cohort: &SyntheticCohort) -> CliResult<()> {
    out.with("cohort.csv", |w| cohort.write_csv(w))?;
    out.bytes("cohort.schema.toml", cohort.spec.to_toml_string().as_bytes())?;
    out.with("truth.csv", |w| cohort.write_truth_csv(w))?;
    out.json("truth.json", &cohort.summary)
}

fn headline(r: &InferenceReport) -> String {
    let se = r.se.map_or("n/a".to_string(), |v| format!("{v:.4}"));
    let ci = r.ci.map_or("empty".to_string(), |[a, b]| format!("[{a:.4}, {b:.4}]"));
    format!("ATE {:.4}  SE {se}  CI {ci}", r.ate_hat)
}

fn warn_all(warnings: &[String]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

/// Parse arguments, run, and map errors to exit status 1.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::from(1)
        }
    }
}
