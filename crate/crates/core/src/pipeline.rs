//! End-to-end study: support, maximal box, matching, balance, inference.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dataset::{filter_to_box, impute_with_indicators, load_csv, Dataset, SchemaSpec};
use crate::inference::{
    estimate_ate, observations, simulate_randomization, test_and_invert, InferenceReport,
    OptionCache, SimulationMode, StratumCompletion, WorstCaseGrid, Witness,
};
use crate::matching::{
    apply_caliper, full_match, rank_mahalanobis, standardized_differences, BalanceReport,
    DistanceMatrix, MatchingError, Stratification, TierThresholds,
};
use crate::maxbox::{budget_from_i64, maximal_box_with, BoxRecord, BoxResult, MaxBoxOptions};
use crate::propensity::{fit_logistic, mark_support, FitOptions, PropensityModel, SupportFlags, SupportRule};
use crate::synth::substream_seed;

type BoxedError = Box<dyn std::error::Error + Send + Sync>;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: BoxedError,
    },
    #[error("cannot write `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
}

pub type Result<T> = std::result::Result<T, PipelineError>;

fn stage<E: Into<BoxedError>>(name: &'static str) -> impl FnOnce(E) -> PipelineError {
    move |e| PipelineError::Stage {
        stage: name,
        source: e.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleName {
    Crump,
    DehejiaWahba,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SupportConfig {
    pub rule: RuleName,
    pub crump_bounds: [f64; 2],
    /// Covariates of the reduced score model; defaults to the box covariates.
    pub score_covariates: Option<Vec<String>>,
}

impl Default for SupportConfig {
    fn default() -> Self {
        Self {
            rule: RuleName::Crump,
            crump_bounds: [0.1, 0.9],
            score_covariates: None,
        }
    }
}

impl SupportConfig {
    pub fn rule(&self) -> SupportRule {
        match self.rule {
            RuleName::Crump => SupportRule::Crump {
                lo: self.crump_bounds[0],
                hi: self.crump_bounds[1],
            },
            RuleName::DehejiaWahba => SupportRule::DehejiaWahba,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[derive(Default)]
pub struct BoxConfig {
    /// Overrides the schema's box covariates.
    pub covariates: Option<Vec<String>>,
    pub budget: i64,
    pub node_limit: Option<usize>,
}


#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CaliperConfig {
    pub width: f64,
    pub penalty: Option<f64>,
}

impl Default for CaliperConfig {
    fn default() -> Self {
        Self {
            width: 0.2,
            penalty: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchingConfig {
    /// `(max_treated, max_controls)` pairs, tried in order.
    pub attempts: Vec<[usize; 2]>,
    /// Covariates for the distance and the refit score; defaults to all.
    pub covariates: Option<Vec<String>>,
    /// Match exactly on the schema's exact-match key.
    pub exact: bool,
}

impl Default for MatchingConfig {
    fn default() -> Self {
        Self {
            attempts: vec![[7, 7]],
            covariates: None,
            exact: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub draws: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub input: PathBuf,
    pub schema: PathBuf,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Report inference separately for every exact-key level.
    #[serde(default = "default_true")]
    pub subgroups: bool,
    #[serde(default)]
    pub support: SupportConfig,
    #[serde(default, rename = "box")]
    pub box_: BoxConfig,
    #[serde(default)]
    pub caliper: CaliperConfig,
    #[serde(default)]
    pub matching: MatchingConfig,
    #[serde(default)]
    pub thresholds: TierThresholds,
    #[serde(default)]
    pub fit: FitOptions,
    pub simulation: Option<SimulationConfig>,
}

fn default_alpha() -> f64 {
    0.05
}

fn default_true() -> bool {
    true
}

impl PipelineConfig {
    /// Defaults everywhere except the three paths.
    pub fn new(input: impl Into<PathBuf>, schema: impl Into<PathBuf>, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            input: input.into(),
            schema: schema.into(),
            output_dir: output_dir.into(),
            seed: 0,
            alpha: default_alpha(),
            subgroups: true,
            support: SupportConfig::default(),
            box_: BoxConfig::default(),
            caliper: CaliperConfig::default(),
            matching: MatchingConfig::default(),
            thresholds: TierThresholds::default(),
            fit: FitOptions::default(),
            simulation: None,
        }
    }

    /// Parse TOML; relative paths are resolved against `base`.
    pub fn from_toml_str(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: PipelineConfig =
            toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        for p in [&mut cfg.input, &mut cfg.schema, &mut cfg.output_dir] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(PipelineError::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.matching.attempts.is_empty() {
            return Err(PipelineError::Config("matching.attempts must not be empty".into()));
        }
        if let Some(a) = self.matching.attempts.iter().find(|a| a[0] == 0 || a[1] == 0) {
            return Err(PipelineError::Config(format!("ratio caps must be positive, got {a:?}")));
        }
        let [lo, hi] = self.support.crump_bounds;
        if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
            return Err(PipelineError::Config(format!("invalid crump_bounds [{lo}, {hi}]")));
        }
        if self.box_.budget < 0 {
            return Err(PipelineError::Config(format!("box.budget must be >= 0, got {}", self.box_.budget)));
        }
        if self.caliper.width < 0.0 {
            return Err(PipelineError::Config("caliper.width must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Success,
    BalanceNotAttained,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CountSummary {
    pub units: usize,
    pub treated: usize,
    pub control: usize,
}

impl CountSummary {
    fn of(ds: &Dataset) -> Self {
        Self {
            units: ds.len(),
            treated: ds.treated_count(),
            control: ds.control_count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupportSummary {
    pub rule: String,
    pub score_covariates: Vec<String>,
    pub retained: usize,
    pub excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoxSummary {
    #[serde(flatten)]
    pub record: BoxRecord,
    pub budget: usize,
    pub positives: usize,
    pub negatives: usize,
    pub negatives_inside: usize,
    pub nodes_explored: usize,
    pub proven_optimal: bool,
    pub retained: CountSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropensitySummary {
    pub covariates: Vec<String>,
    pub dropped_constant: Vec<String>,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttemptSummary {
    pub max_treated: usize,
    pub max_controls: usize,
    pub error: Option<String>,
    pub objective: Option<f64>,
    pub strata: usize,
    pub balance_pass: bool,
    pub failing: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubgroupSummary {
    pub level: String,
    pub strata: usize,
    pub report: Option<InferenceReport>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InferenceSummary {
    pub overall: InferenceReport,
    pub subgroups: Vec<SubgroupSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub status: RunStatus,
    pub loaded: CountSummary,
    pub missingness_indicators: Vec<String>,
    pub support: SupportSummary,
    #[serde(rename = "box")]
    pub box_: BoxSummary,
    pub propensity: PropensitySummary,
    pub distance_covariates: Vec<String>,
    pub attempts: Vec<AttemptSummary>,
    pub chosen: Option<[usize; 2]>,
    pub inference: Option<InferenceSummary>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub files: Vec<ManifestEntry>,
    pub notes: Vec<String>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Writes files into one directory and remembers their checksums.
pub struct Emitter {
    dir: PathBuf,
    entries: BTreeMap<String, ManifestEntry>,
    notes: Vec<String>,
}

impl Emitter {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|source| PipelineError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        Ok(Self {
            dir,
            entries: BTreeMap::new(),
            notes: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn bytes(&mut self, name: &str, data: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, data).map_err(|source| PipelineError::Io {
            path: path.display().to_string(),
            source,
        })?;
        self.entries.insert(
            name.to_string(),
            ManifestEntry {
                path: name.to_string(),
                bytes: data.len(),
                sha256: hex::encode(Sha256::digest(data)),
            },
        );
        Ok(())
    }

    pub fn with<F>(&mut self, name: &str, f: F) -> Result<()>
    where
        F: FnOnce(&mut Vec<u8>) -> io::Result<()>,
    {
        let mut buf = Vec::new();
        f(&mut buf).map_err(|source| PipelineError::Io {
            path: self.dir.join(name).display().to_string(),
            source,
        })?;
        self.bytes(name, &buf)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value).expect("report serializes");
        text.push('\n');
        self.bytes(name, text.as_bytes())
    }

    pub fn note(&mut self, note: impl Into<String>) {
        self.notes.push(note.into());
    }

    /// Write the manifest of everything emitted so far.
    pub fn finish(mut self) -> Result<Manifest> {
        let manifest = Manifest {
            files: self.entries.values().cloned().collect(),
            notes: std::mem::take(&mut self.notes),
        };
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        let path = self.dir.join(MANIFEST_FILE);
        fs::write(&path, text).map_err(|source| PipelineError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(manifest)
    }
}

/// Persist a dataset as `<stem>.csv` plus a `<stem>.schema.toml` sidecar
/// that reloads it.
pub fn emit_dataset(out: &mut Emitter, stem: &str, ds: &Dataset, key: Option<&str>) -> Result<()> {
    out.with(&format!("{stem}.csv"), |w| ds.write_csv(w, key))?;
    let spec = ds.to_schema_spec(key);
    out.bytes(&format!("{stem}.schema.toml"), spec.to_toml_string().as_bytes())
}

/// Per-unit potential outcomes of a witness allocation: observed outcomes
/// are kept, and within each stratum the imputed ones go to the first
/// members (in dataset order) of each arm/outcome group.
pub fn allocation_rows(
    strat: &Stratification,
    ds: &Dataset,
    allocation: &[Witness],
) -> Vec<(String, bool, bool)> {
    let mut rows = Vec::new();
    for (s, w) in strat.strata.iter().zip(allocation) {
        let (mut a, mut b, mut g, mut h) = (w.a, w.b, w.g, w.h);
        for &p in &s.members {
            let u = &ds.units[p];
            let take = |k: &mut usize| {
                let hit = *k > 0;
                if hit {
                    *k -= 1;
                }
                hit
            };
            let (rt, rc) = match (u.treated, u.event) {
                (true, true) => (true, take(&mut a)),
                (true, false) => (false, take(&mut b)),
                (false, true) => (take(&mut g), true),
                (false, false) => (take(&mut h), false),
            };
            rows.push((u.id.clone(), rt, rc));
        }
    }
    rows
}

/// Completion matching [`allocation_rows`], in the layout the simulator
/// expects.
pub fn witness_completion(strat: &Stratification, ds: &Dataset, allocation: &[Witness]) -> Vec<StratumCompletion> {
    let rows = allocation_rows(strat, ds, allocation);
    let mut it = rows.into_iter();
    strat
        .strata
        .iter()
        .map(|s| {
            let mut treated = Vec::new();
            let mut control = Vec::new();
            for &p in &s.members {
                let (_, rt, rc) = it.next().expect("one row per member");
                if ds.units[p].treated {
                    treated.push((rt, rc));
                } else {
                    control.push((rt, rc));
                }
            }
            let m = treated.len();
            treated.extend(control);
            StratumCompletion {
                r_t: treated.iter().map(|x| x.0).collect(),
                r_c: treated.iter().map(|x| x.1).collect(),
                m,
            }
        })
        .collect()
}

fn non_constant(ds: &Dataset, names: &[String]) -> Result<(Vec<String>, Vec<String>)> {
    let mut keep = Vec::new();
    let mut dropped = Vec::new();
    for n in names {
        let col = ds.column(n).map_err(stage("distance"))?;
        if col.iter().all(|v| *v == col[0]) {
            dropped.push(n.clone());
        } else {
            keep.push(n.clone());
        }
    }
    Ok((keep, dropped))
}

fn check_names(ds: &Dataset, names: &[String], what: &str) -> Result<()> {
    for n in names {
        if ds.schema.index_of(n).is_none() {
            return Err(PipelineError::Config(format!("{what} references unknown covariate `{n}`")));
        }
    }
    Ok(())
}

/// Inference on a stratification, with the grid table.
pub fn infer(
    strat: &Stratification,
    ds: &Dataset,
    alpha: f64,
    cache: &mut OptionCache,
) -> std::result::Result<(InferenceReport, WorstCaseGrid), crate::inference::InferenceError> {
    let obs = observations(strat, ds)?;
    let grid = WorstCaseGrid::compute_with(&obs, cache)?;
    let report = test_and_invert(&estimate_ate(&obs), &grid, alpha)?;
    Ok((report, grid))
}

fn file_key(level: &str) -> String {
    level
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect()
}

/// Settings resolved against the loaded data.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub score_covariates: Vec<String>,
    pub exact_key: Option<String>,
    pub budget: usize,
}

/// Load, apply the box-covariate override, and check that every column the
/// config names exists. Nothing is written.
pub fn load_and_resolve(config: &PipelineConfig) -> Result<(Dataset, Resolved)> {
    config.validate()?;
    let spec = SchemaSpec::from_file(&config.schema).map_err(|e| PipelineError::Config(e.to_string()))?;
    let mut ds = load_csv(&config.input, &spec).map_err(|e| PipelineError::Config(e.to_string()))?;
    if let Some(cov) = &config.box_.covariates {
        check_names(&ds, cov, "box.covariates")?;
        ds.schema.box_covariates = cov.clone();
    }
    if ds.schema.box_covariates.is_empty() {
        return Err(PipelineError::Config("no box covariates configured".into()));
    }
    let score_covariates = config
        .support
        .score_covariates
        .clone()
        .unwrap_or_else(|| ds.schema.box_covariates.clone());
    check_names(&ds, &score_covariates, "support.score_covariates")?;
    if let Some(c) = &config.matching.covariates {
        check_names(&ds, c, "matching.covariates")?;
    }
    let budget = budget_from_i64(config.box_.budget).map_err(|e| PipelineError::Config(e.to_string()))?;
    Ok((
        ds,
        Resolved {
            score_covariates,
            exact_key: spec.exact_key,
            budget,
        },
    ))
}

pub fn stage_impute(raw: Dataset, key: Option<&str>, out: &mut Emitter) -> Result<Dataset> {
    let ds = if raw.imputed { raw } else { impute_with_indicators(&raw).map_err(stage("impute"))? };
    emit_dataset(out, "imputed", &ds, key)?;
    Ok(ds)
}

pub fn stage_support(
    ds: &Dataset,
    config: &PipelineConfig,
    score_covariates: &[String],
    out: &mut Emitter,
) -> Result<SupportFlags> {
    let flags = mark_support(ds, config.support.rule(), score_covariates, &config.fit).map_err(stage("support"))?;
    out.with("support.csv", |w| flags.write_csv(ds, w))?;
    Ok(flags)
}

/// Support flags from a `support.csv` table, aligned to `ds` by id.
pub fn read_support_flags<R: io::Read>(ds: &Dataset, reader: R) -> Result<Vec<bool>> {
    let mut by_id = std::collections::HashMap::new();
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers().map_err(stage("support"))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| PipelineError::Config(format!("support table lacks a `{name}` column")))
    };
    let (id, flag) = (col("id")?, col("flag")?);
    for rec in rdr.records() {
        let rec = rec.map_err(stage("support"))?;
        let f = match rec.get(flag) {
            Some("1") => true,
            Some("0") => false,
            other => return Err(PipelineError::Config(format!("bad support flag {other:?}"))),
        };
        by_id.insert(rec.get(id).unwrap_or("").to_string(), f);
    }
    ds.units
        .iter()
        .map(|u| {
            by_id
                .get(&u.id)
                .copied()
                .ok_or_else(|| PipelineError::Config(format!("support table has no row for `{}`", u.id)))
        })
        .collect()
}

/// Maximal box over the support flags; writes the box, its scatter data,
/// and the study population.
pub fn stage_box(
    ds: &Dataset,
    flags: &[bool],
    config: &PipelineConfig,
    budget: usize,
    key: Option<&str>,
    out: &mut Emitter,
    warnings: &mut Vec<String>,
) -> Result<(BoxSummary, Dataset)> {
    let points = ds.matrix(&ds.schema.box_covariates).map_err(stage("box"))?;
    let (mut pos, mut neg) = (Vec::new(), Vec::new());
    for (x, &f) in points.iter().zip(flags) {
        if f {
            pos.push(x.clone())
        } else {
            neg.push(x.clone())
        }
    }
    let opts = MaxBoxOptions {
        dimension_names: Some(ds.schema.box_covariates.clone()),
        node_limit: config.box_.node_limit,
    };
    let solved: BoxResult = maximal_box_with(&pos, &neg, budget, &opts).map_err(stage("box"))?;
    if !solved.proven_optimal {
        warnings.push(format!(
            "box search stopped after {} nodes; result not proven optimal",
            solved.nodes_explored
        ));
    }
    let study = filter_to_box(ds, &solved.bx).map_err(stage("filter"))?.dataset;
    out.with("box_plot.csv", |w| {
        let mut w = csv::Writer::from_writer(w);
        let mut header = vec!["id".to_string()];
        header.extend(ds.schema.box_covariates.iter().cloned());
        header.extend(["arm", "support_flag", "inside_box"].map(String::from));
        w.write_record(&header)?;
        for ((u, x), f) in ds.units.iter().zip(&points).zip(flags) {
            let mut rec = vec![u.id.clone()];
            rec.extend(x.iter().map(|v| v.to_string()));
            rec.push(if u.treated { "treated" } else { "control" }.into());
            rec.push(u8::from(*f).to_string());
            rec.push(u8::from(solved.bx.contains(x)).to_string());
            w.write_record(&rec)?;
        }
        w.flush()
    })?;
    let summary = BoxSummary {
        record: BoxRecord::from(&solved),
        budget,
        positives: pos.len(),
        negatives: neg.len(),
        negatives_inside: solved.negatives_inside,
        nodes_explored: solved.nodes_explored,
        proven_optimal: solved.proven_optimal,
        retained: CountSummary::of(&study),
    };
    out.json("box.json", &summary)?;
    emit_dataset(out, "study", &study, key)?;
    Ok((summary, study))
}

/// Refit on the study population, then distances with the caliper.
pub struct MatchInputs {
    pub model: PropensityModel,
    pub scores: Vec<f64>,
    pub covariates: Vec<String>,
    pub dropped: Vec<String>,
    pub distances: DistanceMatrix,
}

pub fn stage_propensity(
    study: &Dataset,
    config: &PipelineConfig,
    out: &mut Emitter,
    warnings: &mut Vec<String>,
) -> Result<MatchInputs> {
    let all: Vec<String> = config
        .matching
        .covariates
        .clone()
        .unwrap_or_else(|| study.schema.covariate_names().map(str::to_string).collect());
    let (covariates, dropped) = non_constant(study, &all)?;
    if !dropped.is_empty() {
        warnings.push(format!(
            "constant in the study population, left out of the score and distance: {dropped:?}"
        ));
    }
    let model = fit_logistic(study, &covariates, &config.fit).map_err(stage("propensity"))?;
    let scores = model.scores(study).map_err(stage("propensity"))?;
    out.json("propensity.json", &model)?;
    out.with("scores.csv", |w| {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(["id", "score"])?;
        for (u, s) in study.units.iter().zip(&scores) {
            w.write_record([u.id.clone(), s.to_string()])?;
        }
        w.flush()
    })?;
    let dm = rank_mahalanobis(study, &covariates).map_err(stage("distance"))?;
    let distances = apply_caliper(&dm, &scores, config.caliper.width, config.caliper.penalty);
    Ok(MatchInputs {
        model,
        scores,
        covariates,
        dropped,
        distances,
    })
}

/// Matching attempts in config order, stopping at the first that balances.
/// The chosen match's strata and Love plot are written; if none balances,
/// the Love plot of the last one solved is written instead.
pub fn stage_match(
    study: &Dataset,
    config: &PipelineConfig,
    key: Option<&str>,
    dm: &DistanceMatrix,
    out: &mut Emitter,
) -> Result<(Vec<AttemptSummary>, Option<Stratification>)> {
    let keys: Option<Vec<String>> = key.map(|_| study.units.iter().map(|u| u.exact_key.clone()).collect());
    let mut attempts = Vec::new();
    let mut last: Option<BalanceReport> = None;
    for &[kt, kc] in &config.matching.attempts {
        let fm = match full_match(dm, keys.as_deref(), kt, kc) {
            Ok(fm) => fm,
            Err(e @ MatchingError::Infeasible { .. }) => {
                attempts.push(AttemptSummary {
                    max_treated: kt,
                    max_controls: kc,
                    error: Some(e.to_string()),
                    objective: None,
                    strata: 0,
                    balance_pass: false,
                    failing: Vec::new(),
                });
                continue;
            }
            Err(e) => return Err(stage("match")(e)),
        };
        let strat = fm.stratification;
        let balance = standardized_differences(study, Some(&strat), &config.thresholds).map_err(stage("balance"))?;
        out.with(&format!("balance_{kt}_{kc}.csv"), |w| balance.write_csv(w))?;
        attempts.push(AttemptSummary {
            max_treated: kt,
            max_controls: kc,
            error: None,
            objective: Some(strat.objective(dm)),
            strata: strat.strata.len(),
            balance_pass: balance.all_pass(),
            failing: balance.failures().into_iter().map(str::to_string).collect(),
        });
        if balance.all_pass() {
            out.with("love_plot.csv", |w| balance.write_love_plot(w))?;
            out.with("strata.csv", |w| strat.write_csv(study, w))?;
            return Ok((attempts, Some(strat)));
        }
        last = Some(balance);
    }
    if let Some(b) = &last {
        out.with("love_plot.csv", |w| b.write_love_plot(w))?;
    }
    out.note("no attempt met the balance thresholds; inference skipped");
    Ok((attempts, None))
}

/// Overall and per-key inference, with the worst-case allocation and
/// optional Monte-Carlo QQ data at the SE grid point. `levels` lists the
/// key levels to report; levels without strata are noted, not analysed.
pub fn stage_infer(
    strat: &Stratification,
    study: &Dataset,
    config: &PipelineConfig,
    levels: &[String],
    out: &mut Emitter,
) -> Result<InferenceSummary> {
    let mut cache = OptionCache::new();
    let (overall, grid) = infer(strat, study, config.alpha, &mut cache).map_err(stage("inference"))?;
    out.json("inference.json", &overall)?;
    out.with("grid.csv", |w| overall.write_grid_csv(w))?;
    if let Some(d) = overall.se_d {
        let witness = grid.result(d);
        out.with("allocation.csv", |w| {
            let mut w = csv::Writer::from_writer(w);
            w.write_record(["id", "r_t", "r_c"])?;
            for (id, rt, rc) in allocation_rows(strat, study, &witness.allocation) {
                w.write_record([id, u8::from(rt).to_string(), u8::from(rc).to_string()])?;
            }
            w.flush()
        })?;
        if let Some(sim) = &config.simulation {
            let completion = witness_completion(strat, study, &witness.allocation);
            let mode = SimulationMode::MonteCarlo {
                draws: sim.draws,
                seed: substream_seed(config.seed, "monte-carlo"),
            };
            let result = simulate_randomization(&completion, mode).map_err(stage("simulate"))?;
            out.with("qq.csv", |w| result.write_qq_csv(w))?;
        }
    }

    let mut subgroups = Vec::new();
    if config.subgroups {
        for level in levels.iter().cloned() {
            let sub = strat.filter_key(&level);
            if sub.strata.is_empty() {
                out.note(format!("subgroup `{level}` has no strata; no subgroup files written"));
                subgroups.push(SubgroupSummary {
                    level,
                    strata: 0,
                    report: None,
                    note: Some("empty subgroup".into()),
                });
                continue;
            }
            let (r, _) = infer(&sub, study, config.alpha, &mut cache).map_err(stage("inference"))?;
            let tag = file_key(&level);
            out.json(&format!("inference_key_{tag}.json"), &r)?;
            out.with(&format!("grid_key_{tag}.csv"), |w| r.write_grid_csv(w))?;
            subgroups.push(SubgroupSummary {
                level,
                strata: sub.strata.len(),
                report: Some(r),
                note: None,
            });
        }
    }
    Ok(InferenceSummary { overall, subgroups })
}

/// Run every stage and write results into `config.output_dir`.
///
/// Balance failure on every attempt is not an error: diagnostics are
/// written and the report carries [`RunStatus::BalanceNotAttained`].
pub fn run_pipeline(config: &PipelineConfig) -> Result<RunReport> {
    let (raw, res) = load_and_resolve(config)?;
    let key = if config.matching.exact { res.exact_key.as_deref() } else { None };
    let loaded = CountSummary::of(&raw);

    let mut out = Emitter::new(&config.output_dir)?;
    let mut warnings = Vec::new();
    let ds = stage_impute(raw, res.exact_key.as_deref(), &mut out)?;
    let flags = stage_support(&ds, config, &res.score_covariates, &mut out)?;
    let (box_summary, study) = stage_box(
        &ds,
        &flags.per_unit,
        config,
        res.budget,
        res.exact_key.as_deref(),
        &mut out,
        &mut warnings,
    )?;
    let inputs = stage_propensity(&study, config, &mut out, &mut warnings)?;
    let (attempts, chosen) = stage_match(&study, config, key, &inputs.distances, &mut out)?;

    let mut report = RunReport {
        status: RunStatus::BalanceNotAttained,
        loaded,
        missingness_indicators: ds.missingness_indicators.clone(),
        support: SupportSummary {
            rule: flags.rule_name.clone(),
            score_covariates: res.score_covariates.clone(),
            retained: flags.retained(),
            excluded: flags.per_unit.len() - flags.retained(),
        },
        box_: box_summary,
        propensity: PropensitySummary {
            covariates: inputs.model.covariates_used.clone(),
            dropped_constant: inputs.dropped,
            converged: inputs.model.converged,
            iterations: inputs.model.iterations,
        },
        distance_covariates: inputs.covariates,
        attempts,
        chosen: None,
        inference: None,
        warnings,
    };
    if let Some(strat) = chosen {
        report.chosen = Some([strat.max_treated, strat.max_controls]);
        let levels = if key.is_some() { ds.exact_key_levels() } else { Vec::new() };
        report.inference = Some(stage_infer(&strat, &study, config, &levels, &mut out)?);
        report.status = RunStatus::Success;
    }
    out.json("report.json", &report)?;
    out.finish()?;
    Ok(report)
}
