//! Unit-level data: loading, validation, treatment assignment and windowing.
//!
//! A [`Dataset`] is immutable once built. Deriving the assignment indicator
//! or swapping in simulated columns produces a new value.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Declared kind of a covariate column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovariateKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CovariateSpec {
    pub name: String,
    pub kind: CovariateKind,
}

impl CovariateSpec {
    pub fn numeric(name: impl Into<String>) -> Self {
        Self { name: name.into(), kind: CovariateKind::Numeric }
    }

    pub fn categorical(name: impl Into<String>) -> Self {
        Self { name: name.into(), kind: CovariateKind::Categorical }
    }
}

/// Maps column names in the input file onto their roles.
///
/// Outcome and receipt are optional so that design-stage commands can run on
/// files that do not carry (or should not expose) outcome columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub running: String,
    #[serde(default)]
    pub outcome: Option<String>,
    #[serde(default)]
    pub receipt: Option<String>,
    #[serde(default)]
    pub covariates: Vec<CovariateSpec>,
    /// Extra numeric columns carried along (e.g. supplied propensity scores).
    #[serde(default)]
    pub auxiliary: Vec<String>,
}

impl Schema {
    pub fn new(running: impl Into<String>) -> Self {
        Self {
            running: running.into(),
            outcome: None,
            receipt: None,
            covariates: Vec::new(),
            auxiliary: Vec::new(),
        }
    }

    pub fn outcome(mut self, name: impl Into<String>) -> Self {
        self.outcome = Some(name.into());
        self
    }

    pub fn receipt(mut self, name: impl Into<String>) -> Self {
        self.receipt = Some(name.into());
        self
    }

    pub fn covariate(mut self, spec: CovariateSpec) -> Self {
        self.covariates.push(spec);
        self
    }

    pub fn auxiliary(mut self, name: impl Into<String>) -> Self {
        self.auxiliary.push(name.into());
        self
    }

    /// Same schema with outcome and receipt roles removed.
    pub fn design_only(&self) -> Self {
        Self { outcome: None, receipt: None, ..self.clone() }
    }

    fn column_names(&self) -> Vec<&str> {
        let mut names = vec![self.running.as_str()];
        names.extend(self.outcome.as_deref());
        names.extend(self.receipt.as_deref());
        names.extend(self.covariates.iter().map(|c| c.name.as_str()));
        names.extend(self.auxiliary.iter().map(String::as_str));
        names
    }

    fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for name in self.column_names() {
            if !seen.insert(name) {
                return Err(Error::Load(format!("column `{name}` is assigned more than one role")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CovariateValues {
    Numeric(Vec<f64>),
    /// `levels` is sorted; `codes[i]` indexes into it.
    Categorical { levels: Vec<String>, codes: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Covariate {
    pub name: String,
    pub values: CovariateValues,
}

impl Covariate {
    pub fn numeric(name: impl Into<String>, values: Vec<f64>) -> Self {
        Self { name: name.into(), values: CovariateValues::Numeric(values) }
    }

    /// Builds a categorical column from raw labels, collecting sorted levels.
    pub fn categorical<S: AsRef<str>>(name: impl Into<String>, labels: &[S]) -> Self {
        let levels: Vec<String> = labels
            .iter()
            .map(|l| l.as_ref().to_string())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let codes = labels
            .iter()
            .map(|l| levels.binary_search_by(|v| v.as_str().cmp(l.as_ref())).unwrap())
            .collect();
        Self { name: name.into(), values: CovariateValues::Categorical { levels, codes } }
    }

    pub fn kind(&self) -> CovariateKind {
        match self.values {
            CovariateValues::Numeric(_) => CovariateKind::Numeric,
            CovariateValues::Categorical { .. } => CovariateKind::Categorical,
        }
    }

    pub fn len(&self) -> usize {
        match &self.values {
            CovariateValues::Numeric(v) => v.len(),
            CovariateValues::Categorical { codes, .. } => codes.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Level label of unit `i` for categorical columns.
    pub fn level_of(&self, i: usize) -> Option<&str> {
        match &self.values {
            CovariateValues::Categorical { levels, codes } => Some(levels[codes[i]].as_str()),
            CovariateValues::Numeric(_) => None,
        }
    }
}

/// Which side of the cutoff is assigned to treatment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// z = 1 when s <= cutoff.
    #[default]
    TreatedIfLe,
    /// z = 1 when s > cutoff.
    TreatedIfGt,
}

impl Direction {
    pub fn treated(self, s: f64, cutoff: f64) -> bool {
        match self {
            Direction::TreatedIfLe => s <= cutoff,
            Direction::TreatedIfGt => s > cutoff,
        }
    }
}

impl std::str::FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "treated_if_le" | "le" => Ok(Direction::TreatedIfLe),
            "treated_if_gt" | "gt" => Ok(Direction::TreatedIfGt),
            other => Err(Error::Config(format!("unknown direction `{other}`"))),
        }
    }
}

/// Immutable table of units.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    running: Vec<f64>,
    outcome: Option<Vec<f64>>,
    receipt: Option<Vec<u8>>,
    covariates: Vec<Covariate>,
    auxiliary: BTreeMap<String, Vec<f64>>,
    assignment: Option<Vec<u8>>,
}

impl Dataset {
    /// Builds a dataset from a running variable and covariates.
    pub fn new(running: Vec<f64>, covariates: Vec<Covariate>) -> Result<Self> {
        if running.is_empty() {
            return Err(Error::Load("no data rows".into()));
        }
        if let Some(i) = running.iter().position(|s| !s.is_finite()) {
            return Err(Error::Load(format!("non-finite running variable at row {}", i + 1)));
        }
        let mut names = BTreeSet::new();
        for c in &covariates {
            if c.len() != running.len() {
                return Err(Error::Load(format!(
                    "covariate `{}` has {} values, expected {}",
                    c.name,
                    c.len(),
                    running.len()
                )));
            }
            if !names.insert(c.name.clone()) {
                return Err(Error::Load(format!("duplicate covariate `{}`", c.name)));
            }
            if let CovariateValues::Numeric(v) = &c.values {
                if let Some(i) = v.iter().position(|x| !x.is_finite()) {
                    return Err(Error::Load(format!("non-finite value in column `{}` at row {}", c.name, i + 1)));
                }
            }
        }
        Ok(Self {
            running,
            outcome: None,
            receipt: None,
            covariates,
            auxiliary: BTreeMap::new(),
            assignment: None,
        })
    }

    pub fn with_outcome(mut self, y: Vec<f64>) -> Result<Self> {
        self.check_len("outcome", y.len())?;
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::Load(format!("non-finite outcome at row {}", i + 1)));
        }
        self.outcome = Some(y);
        Ok(self)
    }

    pub fn with_receipt(mut self, w: Vec<u8>) -> Result<Self> {
        self.check_len("receipt", w.len())?;
        if let Some(i) = w.iter().position(|&v| v > 1) {
            return Err(Error::Load(format!("receipt not in {{0,1}} at row {}", i + 1)));
        }
        self.receipt = Some(w);
        Ok(self)
    }

    pub fn with_auxiliary(mut self, name: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        let name = name.into();
        self.check_len(&name, values.len())?;
        self.auxiliary.insert(name, values);
        Ok(self)
    }

    /// Replaces the assignment indicator with an explicit vector.
    ///
    /// Used by simulations that re-randomize units inside a window; ordinary
    /// analyses derive it with [`assign_treatment`].
    pub fn with_assignment(mut self, z: Vec<u8>) -> Result<Self> {
        self.check_len("assignment", z.len())?;
        if z.iter().any(|&v| v > 1) {
            return Err(Error::Argument("assignment entries must be 0 or 1".into()));
        }
        self.assignment = Some(z);
        Ok(self)
    }

    fn check_len(&self, what: &str, len: usize) -> Result<()> {
        if len != self.running.len() {
            return Err(Error::Load(format!("column `{what}` has {len} values, expected {}", self.running.len())));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.running.len()
    }

    pub fn is_empty(&self) -> bool {
        self.running.is_empty()
    }

    pub fn running(&self) -> &[f64] {
        &self.running
    }

    pub fn outcome(&self) -> Result<&[f64]> {
        self.outcome.as_deref().ok_or_else(|| Error::MissingColumn("outcome".into()))
    }

    pub fn receipt(&self) -> Result<&[u8]> {
        self.receipt.as_deref().ok_or_else(|| Error::MissingColumn("receipt".into()))
    }

    pub fn has_outcome(&self) -> bool {
        self.outcome.is_some()
    }

    pub fn assignment(&self) -> Result<&[u8]> {
        self.assignment
            .as_deref()
            .ok_or_else(|| Error::Argument("treatment assignment has not been derived".into()))
    }

    pub fn covariates(&self) -> &[Covariate] {
        &self.covariates
    }

    pub fn covariate(&self, name: &str) -> Result<&Covariate> {
        self.covariates
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    }

    pub fn auxiliary(&self, name: &str) -> Result<&[f64]> {
        self.auxiliary
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    }

    /// Assignment vector restricted to `members`, in member order.
    pub fn assignment_in(&self, members: &[usize]) -> Result<Vec<u8>> {
        let z = self.assignment()?;
        Ok(members.iter().map(|&i| z[i]).collect())
    }
}

/// Numeric encoding of covariates over a subset of units.
///
/// Numeric columns pass through. Categorical columns become indicator
/// columns named `name=level`, dropping the first level in sorted order.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedCovariates {
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl EncodedCovariates {
    pub fn n_units(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }
}

/// Encodes the named covariates (all when `names` is `None`) for `members`.
///
/// With `observed_levels_only`, categorical levels absent from `members` are
/// skipped before choosing the reference level, so no all-zero indicator
/// columns are produced.
pub fn encode_covariates(
    dataset: &Dataset,
    members: &[usize],
    names: Option<&[String]>,
    observed_levels_only: bool,
) -> Result<EncodedCovariates> {
    let selected: Vec<&Covariate> = match names {
        Some(names) => names.iter().map(|n| dataset.covariate(n)).collect::<Result<_>>()?,
        None => dataset.covariates().iter().collect(),
    };
    let mut out = EncodedCovariates { names: Vec::new(), columns: Vec::new() };
    for cov in selected {
        match &cov.values {
            CovariateValues::Numeric(v) => {
                out.names.push(cov.name.clone());
                out.columns.push(members.iter().map(|&i| v[i]).collect());
            }
            CovariateValues::Categorical { levels, codes } => {
                let used: Vec<usize> = if observed_levels_only {
                    members.iter().map(|&i| codes[i]).collect::<BTreeSet<_>>().into_iter().collect()
                } else {
                    (0..levels.len()).collect()
                };
                for &code in used.iter().skip(1) {
                    out.names.push(format!("{}={}", cov.name, levels[code]));
                    out.columns
                        .push(members.iter().map(|&i| if codes[i] == code { 1.0 } else { 0.0 }).collect());
                }
            }
        }
    }
    Ok(out)
}

/// Reads a delimited text stream with a header row.
///
/// Row numbers in errors count data rows from 1.
pub fn load_dataset<R: Read>(source: R, schema: &Schema, delimiter: u8) -> Result<Dataset> {
    schema.validate()?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let headers = reader.headers().map_err(|e| Error::Load(e.to_string()))?.clone();
    let index_of = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let s_idx = index_of(&schema.running)?;
    let y_idx = schema.outcome.as_deref().map(index_of).transpose()?;
    let w_idx = schema.receipt.as_deref().map(index_of).transpose()?;
    let cov_idx: Vec<usize> = schema.covariates.iter().map(|c| index_of(&c.name)).collect::<Result<_>>()?;
    let aux_idx: Vec<usize> = schema.auxiliary.iter().map(|c| index_of(c)).collect::<Result<_>>()?;

    let mut running = Vec::new();
    let mut outcome = Vec::new();
    let mut receipt = Vec::new();
    let mut raw_cov: Vec<Vec<String>> = vec![Vec::new(); cov_idx.len()];
    let mut aux: Vec<Vec<f64>> = vec![Vec::new(); aux_idx.len()];

    for (r, record) in reader.records().enumerate() {
        let row = r + 1;
        let record = record.map_err(|e| Error::Load(format!("malformed record at row {row}: {e}")))?;
        let field = |idx: usize, name: &str| -> Result<&str> {
            match record.get(idx) {
                Some(v) if !v.is_empty() => Ok(v),
                _ => Err(Error::Load(format!("missing value in column `{name}` at row {row}"))),
            }
        };
        let number = |idx: usize, name: &str| -> Result<f64> {
            let raw = field(idx, name)?;
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Error::Load(format!("non-numeric value `{raw}` in column `{name}` at row {row}"))),
            }
        };
        running.push(number(s_idx, &schema.running)?);
        if let (Some(idx), Some(name)) = (y_idx, schema.outcome.as_deref()) {
            outcome.push(number(idx, name)?);
        }
        if let (Some(idx), Some(name)) = (w_idx, schema.receipt.as_deref()) {
            let v = number(idx, name)?;
            if v != 0.0 && v != 1.0 {
                return Err(Error::Load(format!("receipt not in {{0,1}} at row {row} (column `{name}`)")));
            }
            receipt.push(v as u8);
        }
        for (k, (&idx, spec)) in cov_idx.iter().zip(&schema.covariates).enumerate() {
            let raw = field(idx, &spec.name)?;
            if spec.kind == CovariateKind::Numeric {
                number(idx, &spec.name)?;
            }
            raw_cov[k].push(raw.to_string());
        }
        for (k, (&idx, name)) in aux_idx.iter().zip(&schema.auxiliary).enumerate() {
            aux[k].push(number(idx, name)?);
        }
    }
    if running.is_empty() {
        return Err(Error::Load("no data rows".into()));
    }

    let covariates = schema
        .covariates
        .iter()
        .zip(raw_cov)
        .map(|(spec, raw)| match spec.kind {
            CovariateKind::Numeric => {
                Covariate::numeric(spec.name.clone(), raw.iter().map(|v| v.parse::<f64>().unwrap()).collect())
            }
            CovariateKind::Categorical => Covariate::categorical(spec.name.clone(), &raw),
        })
        .collect();

    let mut dataset = Dataset::new(running, covariates)?;
    if y_idx.is_some() {
        dataset = dataset.with_outcome(outcome)?;
    }
    if w_idx.is_some() {
        dataset = dataset.with_receipt(receipt)?;
    }
    for (name, values) in schema.auxiliary.iter().zip(aux) {
        dataset = dataset.with_auxiliary(name.clone(), values)?;
    }
    Ok(dataset)
}

/// Derives z from the running variable: z = 1 exactly when `direction` holds.
pub fn assign_treatment(dataset: &Dataset, cutoff: f64, direction: Direction) -> Result<Dataset> {
    if !cutoff.is_finite() {
        return Err(Error::Argument("cutoff must be finite".into()));
    }
    let z = dataset.running.iter().map(|&s| u8::from(direction.treated(s, cutoff))).collect();
    let mut out = dataset.clone();
    out.assignment = Some(z);
    Ok(out)
}

/// A set of units around the cutoff.
///
/// Ordinary windows hold every unit with `cutoff - bandwidth <= s <= cutoff + bandwidth`.
/// Rings (see [`Window::ring`]) additionally exclude the units of an inner window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub cutoff: f64,
    pub bandwidth: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inner_bandwidth: Option<f64>,
    pub members: Vec<usize>,
    pub n_treated: usize,
    pub n_control: usize,
}

impl Window {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Units in the `outer` window but not within `inner` of the cutoff.
    pub fn ring(dataset: &Dataset, cutoff: f64, inner: f64, outer: f64) -> Result<Window> {
        if !(inner > 0.0 && inner < outer) {
            return Err(Error::Argument(format!("ring needs 0 < h1 < h2, got h1 = {inner}, h2 = {outer}")));
        }
        let outer_w = window_units(dataset, cutoff, outer)?;
        let s = dataset.running();
        let members: Vec<usize> =
            outer_w.members.into_iter().filter(|&i| !(cutoff - inner <= s[i] && s[i] <= cutoff + inner)).collect();
        Window::from_members(dataset, cutoff, outer, Some(inner), members)
    }

    /// Builds a window from an explicit member list, counting arms from z.
    pub fn from_members(
        dataset: &Dataset,
        cutoff: f64,
        bandwidth: f64,
        inner_bandwidth: Option<f64>,
        members: Vec<usize>,
    ) -> Result<Window> {
        let z = dataset.assignment()?;
        if let Some(&bad) = members.iter().find(|&&i| i >= dataset.len()) {
            return Err(Error::Argument(format!("member index {bad} out of range")));
        }
        let n_treated = members.iter().filter(|&&i| z[i] == 1).count();
        Ok(Window { cutoff, bandwidth, inner_bandwidth, n_control: members.len() - n_treated, members, n_treated })
    }
}

/// Units with `cutoff - bandwidth <= s_i <= cutoff + bandwidth`.
pub fn window_units(dataset: &Dataset, cutoff: f64, bandwidth: f64) -> Result<Window> {
    if !(bandwidth > 0.0) || !bandwidth.is_finite() {
        return Err(Error::Argument(format!("bandwidth must be positive, got {bandwidth}")));
    }
    let lo = cutoff - bandwidth;
    let hi = cutoff + bandwidth;
    let members = dataset
        .running()
        .iter()
        .enumerate()
        .filter(|(_, &s)| lo <= s && s <= hi)
        .map(|(i, _)| i)
        .collect();
    Window::from_members(dataset, cutoff, bandwidth, None, members)
}
