//! Tabular study data: loading, missingness indicators with mean imputation,
//! and restriction to a box-shaped study population.
//!
//! Row order of the input file is the canonical unit order; every later stage
//! refers to units by their position in this order.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::maxbox::HyperBox;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("malformed CSV at row {row}: {message}")]
    Malformed { row: usize, message: String },
    #[error("column `{0}` referenced by the schema is not in the CSV header")]
    UnknownColumn(String),
    #[error("row {row}, column `{column}`: expected 0 or 1, found `{value}`")]
    NonBinary {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}, column `{column}`: `{value}` is not a number")]
    NotNumeric {
        row: usize,
        column: String,
        value: String,
    },
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("covariate `{0}` has no observed values, cannot impute")]
    AllMissing(String),
    #[error("dataset has already been imputed")]
    AlreadyImputed,
    #[error("operation requires an imputed dataset")]
    NotImputed,
    #[error("box dimensions {found:?} do not match the schema box covariates {expected:?}")]
    BoxMismatch {
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("unknown covariate `{0}`")]
    UnknownCovariate(String),
    #[error("covariate `{column}` is missing for unit `{id}`")]
    MissingValue { id: String, column: String },
    #[error("box covariate `{0}` is binary; boxes should be formed on non-binary covariates")]
    BinaryBoxCovariate(String),
}

pub type Result<T> = std::result::Result<T, DatasetError>;

/// Importance tier of a covariate. Tiers select the balance threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Tier {
    One,
    Two,
    Three,
}

impl Tier {
    pub fn number(self) -> u8 {
        match self {
            Tier::One => 1,
            Tier::Two => 2,
            Tier::Three => 3,
        }
    }
}

impl TryFrom<u8> for Tier {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(Tier::One),
            2 => Ok(Tier::Two),
            3 => Ok(Tier::Three),
            other => Err(format!("tier must be 1, 2 or 3, got {other}")),
        }
    }
}

impl From<Tier> for u8 {
    fn from(t: Tier) -> u8 {
        t.number()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateSpec {
    pub name: String,
    pub tier: Tier,
    /// Explicit balance threshold; overrides the tier default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
}

fn default_indicator_tier() -> Tier {
    Tier::Three
}

/// Key-value schema description, read from TOML.
///
/// ```toml
/// id = "id"
/// treatment = "z"
/// outcome = "r"
/// exact_key = "flag"
/// box_covariates = ["x1", "x2"]
///
/// [[covariates]]
/// name = "x1"
/// tier = 1
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaSpec {
    pub id: String,
    pub treatment: String,
    pub outcome: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact_key: Option<String>,
    pub covariates: Vec<CovariateSpec>,
    #[serde(default)]
    pub box_covariates: Vec<String>,
    /// Tier given to generated missingness indicators.
    #[serde(default = "default_indicator_tier")]
    pub indicator_tier: Tier,
    /// Threshold pinned on generated missingness indicators.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub indicator_threshold: Option<f64>,
    /// Set on schemas written alongside an imputed dataset.
    #[serde(default)]
    pub imputed: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub missingness_indicators: Vec<String>,
}

impl SchemaSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: SchemaSpec =
            toml::from_str(text).map_err(|e| DatasetError::InvalidSchema(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("schema serializes to TOML")
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for c in &self.covariates {
            if !seen.insert(c.name.as_str()) {
                return Err(DatasetError::InvalidSchema(format!(
                    "covariate `{}` listed twice",
                    c.name
                )));
            }
        }
        for b in &self.box_covariates {
            if !seen.contains(b.as_str()) {
                return Err(DatasetError::InvalidSchema(format!(
                    "box covariate `{b}` is not a covariate"
                )));
            }
        }
        for ind in &self.missingness_indicators {
            if !seen.contains(ind.as_str()) {
                return Err(DatasetError::InvalidSchema(format!(
                    "missingness indicator `{ind}` is not a covariate"
                )));
            }
        }
        Ok(())
    }
}

/// Column layout shared by all units of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Schema {
    pub covariates: Vec<CovariateSpec>,
    pub box_covariates: Vec<String>,
    pub indicator_tier: Tier,
    pub indicator_threshold: Option<f64>,
}

impl Schema {
    pub fn covariate_names(&self) -> impl Iterator<Item = &str> {
        self.covariates.iter().map(|c| c.name.as_str())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.covariates.iter().position(|c| c.name == name)
    }

    pub fn tier_of(&self, name: &str) -> Option<Tier> {
        self.covariates
            .iter()
            .find(|c| c.name == name)
            .map(|c| c.tier)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Unit {
    pub id: String,
    pub treated: bool,
    pub event: bool,
    /// `None` marks a missing cell.
    pub covariates: Vec<Option<f64>>,
    pub exact_key: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub schema: Schema,
    pub units: Vec<Unit>,
    pub imputed: bool,
    pub missingness_indicators: Vec<String>,
}

/// Units retained by a box, with per-arm counts.
#[derive(Debug, Clone)]
pub struct BoxFilter {
    pub dataset: Dataset,
    /// Positions of retained units in the input dataset.
    pub retained: Vec<usize>,
    pub treated_retained: usize,
    pub control_retained: usize,
}

fn parse_binary(row: usize, column: &str, raw: &str) -> Result<bool> {
    match raw.trim() {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(DatasetError::NonBinary {
            row,
            column: column.to_string(),
            value: other.to_string(),
        }),
    }
}

fn header_index(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| DatasetError::UnknownColumn(name.to_string()))
}

/// Load a dataset from CSV text. Row numbers in errors are 1-based data rows.
pub fn load_csv_reader<R: io::Read>(reader: R, spec: &SchemaSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| DatasetError::Malformed {
            row: 0,
            message: e.to_string(),
        })?
        .clone();

    let id_col = header_index(&headers, &spec.id)?;
    let z_col = header_index(&headers, &spec.treatment)?;
    let r_col = header_index(&headers, &spec.outcome)?;
    let key_col = spec
        .exact_key
        .as_deref()
        .map(|k| header_index(&headers, k))
        .transpose()?;
    let cov_cols = spec
        .covariates
        .iter()
        .map(|c| header_index(&headers, &c.name))
        .collect::<Result<Vec<_>>>()?;

    let mut units = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| DatasetError::Malformed {
            row,
            message: e.to_string(),
        })?;
        let field = |col: usize| record.get(col).unwrap_or("");
        let treated = parse_binary(row, &spec.treatment, field(z_col))?;
        let event = parse_binary(row, &spec.outcome, field(r_col))?;
        let mut covariates = Vec::with_capacity(cov_cols.len());
        for (spec_cov, &col) in spec.covariates.iter().zip(&cov_cols) {
            let raw = field(col).trim();
            if raw.is_empty() {
                covariates.push(None);
            } else {
                let v: f64 = raw.parse().map_err(|_| DatasetError::NotNumeric {
                    row,
                    column: spec_cov.name.clone(),
                    value: raw.to_string(),
                })?;
                if !v.is_finite() {
                    return Err(DatasetError::NotNumeric {
                        row,
                        column: spec_cov.name.clone(),
                        value: raw.to_string(),
                    });
                }
                covariates.push(Some(v));
            }
        }
        units.push(Unit {
            id: field(id_col).trim().to_string(),
            treated,
            event,
            covariates,
            exact_key: key_col.map(|c| field(c).trim().to_string()).unwrap_or_default(),
        });
    }

    let ds = Dataset {
        schema: Schema {
            covariates: spec.covariates.clone(),
            box_covariates: spec.box_covariates.clone(),
            indicator_tier: spec.indicator_tier,
            indicator_threshold: spec.indicator_threshold,
        },
        units,
        imputed: spec.imputed,
        missingness_indicators: spec.missingness_indicators.clone(),
    };
    if ds.imputed {
        if let Some((unit, col)) = ds.first_missing() {
            return Err(DatasetError::MissingValue {
                id: ds.units[unit].id.clone(),
                column: ds.schema.covariates[col].name.clone(),
            });
        }
    }
    ds.check_box_covariates()?;
    Ok(ds)
}

pub fn load_csv(path: impl AsRef<Path>, spec: &SchemaSpec) -> Result<Dataset> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    load_csv_reader(io::BufReader::new(file), spec)
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn treated_count(&self) -> usize {
        self.units.iter().filter(|u| u.treated).count()
    }

    pub fn control_count(&self) -> usize {
        self.len() - self.treated_count()
    }

    fn first_missing(&self) -> Option<(usize, usize)> {
        self.units.iter().enumerate().find_map(|(i, u)| {
            u.covariates
                .iter()
                .position(Option::is_none)
                .map(|c| (i, c))
        })
    }

    fn check_box_covariates(&self) -> Result<()> {
        for name in &self.schema.box_covariates {
            let idx = self
                .schema
                .index_of(name)
                .ok_or_else(|| DatasetError::UnknownCovariate(name.clone()))?;
            let binary = !self.units.is_empty()
                && self.units.iter().all(|u| {
                    u.covariates[idx].is_none_or(|v| v == 0.0 || v == 1.0)
                });
            if binary {
                return Err(DatasetError::BinaryBoxCovariate(name.clone()));
            }
        }
        Ok(())
    }

    /// Fully observed values of one covariate, in unit order.
    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let idx = self
            .schema
            .index_of(name)
            .ok_or_else(|| DatasetError::UnknownCovariate(name.to_string()))?;
        self.units
            .iter()
            .map(|u| {
                u.covariates[idx].ok_or_else(|| DatasetError::MissingValue {
                    id: u.id.clone(),
                    column: name.to_string(),
                })
            })
            .collect()
    }

    /// Row-major design matrix over `names`.
    pub fn matrix(&self, names: &[String]) -> Result<Vec<Vec<f64>>> {
        let cols = names
            .iter()
            .map(|n| self.column(n))
            .collect::<Result<Vec<_>>>()?;
        Ok((0..self.len())
            .map(|i| cols.iter().map(|c| c[i]).collect())
            .collect())
    }

    pub fn treatments(&self) -> Vec<bool> {
        self.units.iter().map(|u| u.treated).collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            units: indices.iter().map(|&i| self.units[i].clone()).collect(),
            imputed: self.imputed,
            missingness_indicators: self.missingness_indicators.clone(),
        }
    }

    pub fn exact_key_levels(&self) -> Vec<String> {
        self.units
            .iter()
            .map(|u| u.exact_key.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// Schema spec that reloads this dataset from [`Dataset::write_csv`] output.
    pub fn to_schema_spec(&self, exact_key: Option<&str>) -> SchemaSpec {
        SchemaSpec {
            id: "id".into(),
            treatment: "z".into(),
            outcome: "r".into(),
            exact_key: exact_key.map(str::to_string),
            covariates: self.schema.covariates.clone(),
            box_covariates: self.schema.box_covariates.clone(),
            indicator_tier: self.schema.indicator_tier,
            indicator_threshold: self.schema.indicator_threshold,
            imputed: self.imputed,
            missingness_indicators: self.missingness_indicators.clone(),
        }
    }

    /// Write units as CSV with columns `id,z,r[,key],<covariates...>`.
    /// Missing cells are written empty.
    pub fn write_csv<W: io::Write>(&self, writer: W, exact_key: Option<&str>) -> io::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["id".to_string(), "z".into(), "r".into()];
        if let Some(k) = exact_key {
            header.push(k.to_string());
        }
        header.extend(self.schema.covariate_names().map(str::to_string));
        w.write_record(&header)?;
        for u in &self.units {
            let mut rec = vec![
                u.id.clone(),
                (u.treated as u8).to_string(),
                (u.event as u8).to_string(),
            ];
            if exact_key.is_some() {
                rec.push(u.exact_key.clone());
            }
            rec.extend(
                u.covariates
                    .iter()
                    .map(|v| v.map(|x| x.to_string()).unwrap_or_default()),
            );
            w.write_record(&rec)?;
        }
        w.flush()
    }
}

/// Append one binary indicator per covariate with missing cells and replace
/// those cells by the mean of the observed values.
pub fn impute_with_indicators(ds: &Dataset) -> Result<Dataset> {
    if ds.imputed {
        return Err(DatasetError::AlreadyImputed);
    }
    let ncov = ds.schema.covariates.len();
    let mut means: BTreeMap<usize, f64> = BTreeMap::new();
    for c in 0..ncov {
        let observed: Vec<f64> = ds.units.iter().filter_map(|u| u.covariates[c]).collect();
        if observed.len() == ds.len() {
            continue;
        }
        if observed.is_empty() {
            return Err(DatasetError::AllMissing(ds.schema.covariates[c].name.clone()));
        }
        means.insert(c, observed.iter().sum::<f64>() / observed.len() as f64);
    }

    let mut schema = ds.schema.clone();
    let mut indicator_names = ds.missingness_indicators.clone();
    for &c in means.keys() {
        let mut name = format!("{}_missing", ds.schema.covariates[c].name);
        while schema.index_of(&name).is_some() {
            name.push('_');
        }
        schema.covariates.push(CovariateSpec {
            name: name.clone(),
            tier: schema.indicator_tier,
            threshold: schema.indicator_threshold,
        });
        indicator_names.push(name);
    }

    let units = ds
        .units
        .iter()
        .map(|u| {
            let mut covs: Vec<Option<f64>> = u
                .covariates
                .iter()
                .enumerate()
                .map(|(c, v)| v.or_else(|| means.get(&c).copied()))
                .collect();
            covs.extend(
                means
                    .keys()
                    .map(|&c| Some(if u.covariates[c].is_none() { 1.0 } else { 0.0 })),
            );
            Unit {
                covariates: covs,
                ..u.clone()
            }
        })
        .collect();

    Ok(Dataset {
        schema,
        units,
        imputed: true,
        missingness_indicators: indicator_names,
    })
}

/// Restrict to units inside the closed box over the schema's box covariates.
pub fn filter_to_box(ds: &Dataset, bx: &HyperBox) -> Result<BoxFilter> {
    if !ds.imputed {
        return Err(DatasetError::NotImputed);
    }
    if bx.dimension_names != ds.schema.box_covariates {
        return Err(DatasetError::BoxMismatch {
            expected: ds.schema.box_covariates.clone(),
            found: bx.dimension_names.clone(),
        });
    }
    let points = ds.matrix(&ds.schema.box_covariates)?;
    let retained: Vec<usize> = points
        .iter()
        .enumerate()
        .filter(|(_, x)| bx.contains(x))
        .map(|(i, _)| i)
        .collect();
    let dataset = ds.subset(&retained);
    let treated_retained = dataset.treated_count();
    Ok(BoxFilter {
        control_retained: dataset.len() - treated_retained,
        treated_retained,
        dataset,
        retained,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(covs: &[&str], boxed: &[&str]) -> SchemaSpec {
        SchemaSpec {
            id: "id".into(),
            treatment: "z".into(),
            outcome: "r".into(),
            exact_key: None,
            covariates: covs
                .iter()
                .map(|n| CovariateSpec {
                    name: n.to_string(),
                    tier: Tier::One,
                    threshold: None,
                })
                .collect(),
            box_covariates: boxed.iter().map(|s| s.to_string()).collect(),
            indicator_tier: Tier::Three,
            indicator_threshold: None,
            imputed: false,
            missingness_indicators: vec![],
        }
    }

    #[test]
    fn loads_three_rows() {
        let csv = "id,z,r,age\na,1,0,50\nb,0,1,61\nc,0,0,70\n";
        let ds = load_csv_reader(csv.as_bytes(), &spec(&["age"], &[])).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.schema.covariates.len(), 1);
        assert!(!ds.imputed);
        assert_eq!(ds.units[1].covariates[0], Some(61.0));
        assert!(ds.units[0].treated && !ds.units[0].event);
    }

    #[test]
    fn blank_cell_is_missing() {
        let csv = "id,z,r,age\na,1,0,50\nb,0,1,\nc,0,0,70\n";
        let ds = load_csv_reader(csv.as_bytes(), &spec(&["age"], &[])).unwrap();
        assert_eq!(ds.units[1].covariates[0], None);
        assert!(ds.column("age").is_err());
    }

    #[test]
    fn non_binary_treatment_names_row() {
        let csv = "id,z,r,age\na,1,0,50\nb,2,1,3\n";
        let err = load_csv_reader(csv.as_bytes(), &spec(&["age"], &[])).unwrap_err();
        match err {
            DatasetError::NonBinary { row, ref column, .. } => {
                assert_eq!(row, 2);
                assert_eq!(column, "z");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(err.to_string().contains("row 2"));
    }

    #[test]
    fn unknown_column_rejected() {
        let csv = "id,z,r,age\na,1,0,50\n";
        let err = load_csv_reader(csv.as_bytes(), &spec(&["weight"], &[])).unwrap_err();
        assert!(matches!(err, DatasetError::UnknownColumn(ref c) if c == "weight"));
    }

    #[test]
    fn binary_box_covariate_rejected() {
        let csv = "id,z,r,flag\na,1,0,1\nb,0,0,0\n";
        let err = load_csv_reader(csv.as_bytes(), &spec(&["flag"], &["flag"])).unwrap_err();
        assert!(matches!(err, DatasetError::BinaryBoxCovariate(_)));
    }

    #[test]
    fn mean_imputation_with_indicator() {
        let csv = "id,z,r,x\na,1,0,1\nb,0,1,\nc,0,0,3\n";
        let ds = load_csv_reader(csv.as_bytes(), &spec(&["x"], &[])).unwrap();
        let imp = impute_with_indicators(&ds).unwrap();
        assert!(imp.imputed);
        assert_eq!(imp.column("x").unwrap(), vec![1.0, 2.0, 3.0]);
        assert_eq!(imp.column("x_missing").unwrap(), vec![0.0, 1.0, 0.0]);
        assert_eq!(imp.missingness_indicators, vec!["x_missing".to_string()]);
        assert_eq!(imp.schema.tier_of("x_missing"), Some(Tier::Three));
    }

    #[test]
    fn imputing_complete_data_adds_nothing() {
        let csv = "id,z,r,x\na,1,0,1\nb,0,1,2\n";
        let ds = load_csv_reader(csv.as_bytes(), &spec(&["x"], &[])).unwrap();
        let imp = impute_with_indicators(&ds).unwrap();
        assert!(imp.imputed);
        assert_eq!(imp.units, ds.units);
        assert_eq!(imp.schema, ds.schema);
        assert!(impute_with_indicators(&imp).is_err());
    }

    #[test]
    fn two_covariates_with_gaps_get_two_indicators() {
        let csv = "id,z,r,x,y,w\na,1,0,1,,5\nb,0,1,,2,6\nc,0,0,3,4,7\n";
        let ds = load_csv_reader(csv.as_bytes(), &spec(&["x", "y", "w"], &[])).unwrap();
        let imp = impute_with_indicators(&ds).unwrap();
        assert_eq!(imp.schema.covariates.len(), 5);
        assert_eq!(imp.missingness_indicators.len(), 2);
    }

    #[test]
    fn indicator_threshold_override_applies() {
        let csv = "id,z,r,x\na,1,0,1\nb,0,1,\nc,0,0,3\n";
        let mut s = spec(&["x"], &[]);
        s.indicator_threshold = Some(0.10);
        let ds = load_csv_reader(csv.as_bytes(), &s).unwrap();
        let imp = impute_with_indicators(&ds).unwrap();
        assert_eq!(imp.schema.covariates[1].threshold, Some(0.10));
    }

    #[test]
    fn all_missing_is_an_error() {
        let csv = "id,z,r,x\na,1,0,\nb,0,1,\n";
        let ds = load_csv_reader(csv.as_bytes(), &spec(&["x"], &[])).unwrap();
        assert!(matches!(
            impute_with_indicators(&ds),
            Err(DatasetError::AllMissing(_))
        ));
    }

    #[test]
    fn box_filter_is_closed() {
        let csv = "id,z,r,x\na,1,0,5\nb,0,1,11\nc,0,0,10\n";
        let ds = load_csv_reader(csv.as_bytes(), &spec(&["x"], &["x"])).unwrap();
        let ds = impute_with_indicators(&ds).unwrap();
        let bx = HyperBox::new(vec!["x".into()], vec![0.0], vec![10.0]).unwrap();
        let f = filter_to_box(&ds, &bx).unwrap();
        assert_eq!(f.retained, vec![0, 2]);
        assert_eq!(f.treated_retained, 1);
        assert_eq!(f.control_retained, 1);
    }

    #[test]
    fn box_filter_requires_matching_dimensions() {
        let csv = "id,z,r,x,y\na,1,0,5,1\nb,0,1,11,2\n";
        let ds = load_csv_reader(csv.as_bytes(), &spec(&["x", "y"], &["x"])).unwrap();
        let ds = impute_with_indicators(&ds).unwrap();
        let bx = HyperBox::new(vec!["y".into()], vec![0.0], vec![10.0]).unwrap();
        assert!(matches!(
            filter_to_box(&ds, &bx),
            Err(DatasetError::BoxMismatch { .. })
        ));
    }

    #[test]
    fn csv_round_trip_after_imputation() {
        let csv = "id,z,r,x\na,1,0,1\nb,0,1,\nc,0,0,3\n";
        let ds = load_csv_reader(csv.as_bytes(), &spec(&["x"], &[])).unwrap();
        let imp = impute_with_indicators(&ds).unwrap();
        let mut buf = Vec::new();
        imp.write_csv(&mut buf, None).unwrap();
        let spec2 = SchemaSpec::from_toml_str(&imp.to_schema_spec(None).to_toml_string()).unwrap();
        let back = load_csv_reader(buf.as_slice(), &spec2).unwrap();
        assert_eq!(back, imp);
    }
}
