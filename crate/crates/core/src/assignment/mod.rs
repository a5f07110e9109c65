//! Local assignment mechanisms.
//!
//! A [`MechanismSpec`] is what the analyst posits ("complete randomization",
//! "blocks on sex and year", ...). Resolving it against a window gives a
//! concrete [`Mechanism`] whose parameters (treated counts, block membership,
//! propensities) are fixed for that window. Mechanisms can be sampled,
//! enumerated exhaustively on small windows, and evaluated as mass functions.
//!
//! All positions inside a mechanism are window-relative: position `k` is the
//! unit `window.members[k]`.

mod propensity;

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use propensity::{fit_propensity, irls, log_likelihood, PropensityModel, MAX_ITERATIONS, SCORE_TOLERANCE};

use crate::data::{CovariateValues, Dataset, Window};
use crate::error::{Error, Result};
use crate::rng;

/// Upper bound on the number of assignment vectors we will enumerate.
pub const MAX_SUPPORT: f64 = 1e6;
/// Attempts allowed when rejection-sampling conditional Bernoulli draws.
pub const REJECTION_BUDGET: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Block {
    pub label: String,
    /// Window positions of the block's units, ascending.
    pub positions: Vec<usize>,
}

/// Partition of a window's units into blocks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Blocking {
    /// Block label of each window position.
    pub labels: Vec<String>,
    /// Blocks sorted by label.
    pub blocks: Vec<Block>,
}

impl Blocking {
    /// One block holding every unit.
    pub fn single(n: usize) -> Self {
        Self {
            labels: vec!["all".into(); n],
            blocks: vec![Block { label: "all".into(), positions: (0..n).collect() }],
        }
    }

    /// Groups window positions by their block label.
    pub fn from_labels(labels: Vec<String>) -> Self {
        let mut map: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (k, l) in labels.iter().enumerate() {
            map.entry(l.as_str()).or_default().push(k);
        }
        let blocks = map
            .into_iter()
            .map(|(label, positions)| Block { label: label.to_string(), positions })
            .collect();
        Self { labels, blocks }
    }

    pub fn n_units(&self) -> usize {
        self.labels.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.positions.len()).collect()
    }

    /// Observed treated count per block under the window's assignment.
    pub fn treated_counts(&self, z: &[u8]) -> Vec<usize> {
        self.blocks
            .iter()
            .map(|b| b.positions.iter().filter(|&&k| z[k] == 1).count())
            .collect()
    }
}

/// Cross-classifies the named categorical covariates over the window.
///
/// Only level combinations that occur in the window form blocks. With no
/// covariates the whole window is one block.
pub fn build_blocks(window: &Window, dataset: &Dataset, covariate_names: &[String]) -> Result<Blocking> {
    if covariate_names.is_empty() {
        return Ok(Blocking::single(window.len()));
    }
    let covs = covariate_names
        .iter()
        .map(|name| {
            let c = dataset.covariate(name)?;
            match c.values {
                CovariateValues::Categorical { .. } => Ok(c),
                CovariateValues::Numeric(_) => Err(Error::Assignment(format!(
                    "blocking covariate `{name}` is numeric; discretize it into a categorical column before blocking"
                ))),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<String> = window
        .members
        .iter()
        .map(|&i| {
            covs.iter()
                .map(|c| format!("{}={}", c.name, c.level_of(i).unwrap()))
                .collect::<Vec<_>>()
                .join("|")
        })
        .collect();
    Ok(Blocking::from_labels(labels))
}

/// A fully parameterized assignment mechanism for one window.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Mechanism {
    /// Independent coin flips with unit-specific propensities, optionally
    /// conditioned on the total number treated.
    Bernoulli { propensities: Vec<f64>, condition_on: Option<usize> },
    /// Uniform over vectors with exactly `n_treated` ones.
    Complete { n_units: usize, n_treated: usize },
    /// Independent complete randomization inside each block.
    Block { blocking: Blocking, treated_per_block: Vec<usize> },
}

impl Mechanism {
    pub fn bernoulli(propensities: Vec<f64>, condition_on: Option<usize>) -> Result<Self> {
        if let Some(bad) = propensities.iter().find(|&&e| !(e > 0.0 && e < 1.0)) {
            return Err(Error::Assignment(format!("propensity {bad} is outside (0, 1)")));
        }
        if let Some(k) = condition_on {
            if k > propensities.len() {
                return Err(Error::Assignment(format!(
                    "cannot condition on {k} treated among {} units",
                    propensities.len()
                )));
            }
        }
        Ok(Mechanism::Bernoulli { propensities, condition_on })
    }

    pub fn complete(n_units: usize, n_treated: usize) -> Result<Self> {
        if n_treated == 0 || n_treated >= n_units {
            return Err(Error::Assignment(format!(
                "complete randomization needs 0 < N_T < N, got N_T = {n_treated}, N = {n_units}"
            )));
        }
        Ok(Mechanism::Complete { n_units, n_treated })
    }

    pub fn block(blocking: Blocking, treated_per_block: Vec<usize>) -> Result<Self> {
        if treated_per_block.len() != blocking.blocks.len() {
            return Err(Error::Assignment("one treated count per block is required".into()));
        }
        for (b, &k) in blocking.blocks.iter().zip(&treated_per_block) {
            if k > b.positions.len() {
                return Err(Error::Assignment(format!(
                    "block `{}` has {} units but {k} treated",
                    b.label,
                    b.positions.len()
                )));
            }
        }
        let total: usize = treated_per_block.iter().sum();
        if total == 0 || total >= blocking.n_units() {
            return Err(Error::Assignment(format!(
                "block randomization needs 0 < N_T < N, got N_T = {total}, N = {}",
                blocking.n_units()
            )));
        }
        Ok(Mechanism::Block { blocking, treated_per_block })
    }

    pub fn n_units(&self) -> usize {
        match self {
            Mechanism::Bernoulli { propensities, .. } => propensities.len(),
            Mechanism::Complete { n_units, .. } => *n_units,
            Mechanism::Block { blocking, .. } => blocking.n_units(),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Mechanism::Bernoulli { .. } => "bernoulli",
            Mechanism::Complete { .. } => "complete",
            Mechanism::Block { .. } => "block",
        }
    }

    /// Number of assignment vectors with positive probability.
    pub fn support_size(&self) -> f64 {
        match self {
            Mechanism::Bernoulli { propensities, condition_on } => match condition_on {
                Some(k) => binomial(propensities.len(), *k),
                None => 2f64.powi(propensities.len() as i32),
            },
            Mechanism::Complete { n_units, n_treated } => binomial(*n_units, *n_treated),
            Mechanism::Block { blocking, treated_per_block } => blocking
                .blocks
                .iter()
                .zip(treated_per_block)
                .map(|(b, &k)| binomial(b.positions.len(), k))
                .product(),
        }
    }

    /// Draws one assignment vector from stream `(seed, draw_index)`.
    pub fn draw(&self, seed: u64, draw_index: u64) -> Result<Vec<u8>> {
        let mut rng = rng::stream(seed, draw_index);
        match self {
            Mechanism::Complete { n_units, n_treated } => {
                let mut z = vec![0u8; *n_units];
                for k in sample(&mut rng, *n_units, *n_treated) {
                    z[k] = 1;
                }
                Ok(z)
            }
            Mechanism::Block { blocking, treated_per_block } => {
                let mut z = vec![0u8; blocking.n_units()];
                for (b, &k) in blocking.blocks.iter().zip(treated_per_block) {
                    for pick in sample(&mut rng, b.positions.len(), k) {
                        z[b.positions[pick]] = 1;
                    }
                }
                Ok(z)
            }
            Mechanism::Bernoulli { propensities, condition_on } => {
                let flip = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<u8> {
                    propensities.iter().map(|&e| u8::from(rng.gen::<f64>() < e)).collect()
                };
                match condition_on {
                    None => Ok(flip(&mut rng)),
                    Some(k) => {
                        for _ in 0..REJECTION_BUDGET {
                            let z = flip(&mut rng);
                            if z.iter().map(|&v| v as usize).sum::<usize>() == *k {
                                return Ok(z);
                            }
                        }
                        Err(Error::RejectionBudget {
                            attempts: REJECTION_BUDGET,
                            acceptance: count_distribution(propensities)[*k],
                        })
                    }
                }
            }
        }
    }

    /// Exact mass of `z` under the mechanism.
    pub fn probability(&self, z: &[u8]) -> Result<f64> {
        if z.len() != self.n_units() {
            return Err(Error::Argument(format!(
                "assignment has length {}, mechanism covers {} units",
                z.len(),
                self.n_units()
            )));
        }
        if z.iter().any(|&v| v > 1) {
            return Err(Error::Argument("assignment entries must be 0 or 1".into()));
        }
        let treated = z.iter().filter(|&&v| v == 1).count();
        Ok(match self {
            Mechanism::Complete { n_units, n_treated } => {
                if treated == *n_treated {
                    1.0 / binomial(*n_units, *n_treated)
                } else {
                    0.0
                }
            }
            Mechanism::Block { blocking, treated_per_block } => {
                if blocking.treated_counts(z) == *treated_per_block {
                    1.0 / self.support_size()
                } else {
                    0.0
                }
            }
            Mechanism::Bernoulli { propensities, condition_on } => {
                let unconditional = bernoulli_mass(propensities, z);
                match condition_on {
                    None => unconditional,
                    Some(k) if treated == *k => unconditional / count_distribution(propensities)[*k],
                    Some(_) => 0.0,
                }
            }
        })
    }

    /// Every assignment vector with positive probability, with its mass.
    pub fn enumerate(&self) -> Result<Vec<(Vec<u8>, f64)>> {
        let size = self.support_size();
        let n = self.n_units();
        let too_large = match self {
            Mechanism::Bernoulli { .. } => n > 20,
            _ => size > MAX_SUPPORT,
        };
        if too_large {
            return Err(Error::SupportTooLarge { size, limit: MAX_SUPPORT });
        }
        match self {
            Mechanism::Complete { n_units, n_treated } => {
                let p = 1.0 / size;
                Ok(combinations(*n_units, *n_treated)
                    .into_iter()
                    .map(|picks| {
                        let mut z = vec![0u8; *n_units];
                        for k in picks {
                            z[k] = 1;
                        }
                        (z, p)
                    })
                    .collect())
            }
            Mechanism::Block { blocking, treated_per_block } => {
                let p = 1.0 / size;
                let mut out = vec![vec![0u8; n]];
                for (b, &k) in blocking.blocks.iter().zip(treated_per_block) {
                    let choices = combinations(b.positions.len(), k);
                    let mut next = Vec::with_capacity(out.len() * choices.len());
                    for z in &out {
                        for picks in &choices {
                            let mut z = z.clone();
                            for &pick in picks {
                                z[b.positions[pick]] = 1;
                            }
                            next.push(z);
                        }
                    }
                    out = next;
                }
                Ok(out.into_iter().map(|z| (z, p)).collect())
            }
            Mechanism::Bernoulli { propensities, condition_on } => {
                let mut out = Vec::new();
                for mask in 0u32..(1u32 << n) {
                    let z: Vec<u8> = (0..n).map(|k| ((mask >> k) & 1) as u8).collect();
                    if let Some(k) = condition_on {
                        if mask.count_ones() as usize != *k {
                            continue;
                        }
                    }
                    out.push((z.clone(), bernoulli_mass(propensities, &z)));
                }
                if condition_on.is_some() {
                    let total: f64 = out.iter().map(|(_, p)| p).sum();
                    for (_, p) in &mut out {
                        *p /= total;
                    }
                }
                Ok(out)
            }
        }
    }
}

fn bernoulli_mass(propensities: &[f64], z: &[u8]) -> f64 {
    propensities
        .iter()
        .zip(z)
        .map(|(&e, &v)| if v == 1 { e } else { 1.0 - e })
        .product()
}

/// Distribution of the number treated under independent coin flips.
fn count_distribution(propensities: &[f64]) -> Vec<f64> {
    let mut dist = vec![1.0];
    for &e in propensities {
        let mut next = vec![0.0; dist.len() + 1];
        for (k, &p) in dist.iter().enumerate() {
            next[k] += p * (1.0 - e);
            next[k + 1] += p * e;
        }
        dist = next;
    }
    dist
}

/// `n choose k` as a float.
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64).round()
}

/// All `k`-subsets of `0..n` in lexicographic order.
fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    if k > n {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut current: Vec<usize> = (0..k).collect();
    loop {
        out.push(current.clone());
        let mut i = k;
        while i > 0 && current[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        current[i - 1] += 1;
        for j in i..k {
            current[j] = current[j - 1] + 1;
        }
    }
}

/// Mechanism as posited in configuration, before it is fitted to a window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MechanismSpec {
    Bernoulli {
        /// Supplied propensity column; takes precedence over fitting.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        propensity_column: Option<String>,
        /// Covariates for the logistic fit when no column is supplied.
        #[serde(default)]
        fit_covariates: Vec<String>,
        #[serde(default)]
        condition_on_nt: bool,
    },
    Complete {
        /// Defaults to the observed treated count in the window.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n_treated: Option<usize>,
    },
    Block {
        covariates: Vec<String>,
        /// Treated count per block label; defaults to observed counts.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        treated_per_block: Option<BTreeMap<String, usize>>,
    },
}

impl MechanismSpec {
    pub fn complete() -> Self {
        MechanismSpec::Complete { n_treated: None }
    }

    pub fn block<S: Into<String>>(covariates: impl IntoIterator<Item = S>) -> Self {
        MechanismSpec::Block { covariates: covariates.into_iter().map(Into::into).collect(), treated_per_block: None }
    }

    pub fn bernoulli_fitted<S: Into<String>>(covariates: impl IntoIterator<Item = S>, condition_on_nt: bool) -> Self {
        MechanismSpec::Bernoulli {
            propensity_column: None,
            fit_covariates: covariates.into_iter().map(Into::into).collect(),
            condition_on_nt,
        }
    }

    /// Short human-readable name, e.g. `block(sex,year)`.
    pub fn label(&self) -> String {
        match self {
            MechanismSpec::Complete { .. } => "complete".into(),
            MechanismSpec::Block { covariates, .. } => format!("block({})", covariates.join(",")),
            MechanismSpec::Bernoulli { propensity_column: Some(c), condition_on_nt, .. } => {
                format!("bernoulli[{c}]{}", if *condition_on_nt { "|nt" } else { "" })
            }
            MechanismSpec::Bernoulli { fit_covariates, condition_on_nt, .. } => {
                format!("bernoulli({}){}", fit_covariates.join(","), if *condition_on_nt { "|nt" } else { "" })
            }
        }
    }

    /// Fixes the mechanism's parameters for `window`.
    pub fn resolve(&self, dataset: &Dataset, window: &Window) -> Result<Mechanism> {
        match self {
            MechanismSpec::Complete { n_treated } => {
                Mechanism::complete(window.len(), n_treated.unwrap_or(window.n_treated))
            }
            MechanismSpec::Block { covariates, treated_per_block } => {
                let blocking = build_blocks(window, dataset, covariates)?;
                let counts = match treated_per_block {
                    None => blocking.treated_counts(&dataset.assignment_in(&window.members)?),
                    Some(map) => blocking
                        .blocks
                        .iter()
                        .map(|b| {
                            map.get(&b.label).copied().ok_or_else(|| {
                                Error::Assignment(format!("no treated count given for block `{}`", b.label))
                            })
                        })
                        .collect::<Result<_>>()?,
                };
                Mechanism::block(blocking, counts)
            }
            MechanismSpec::Bernoulli { propensity_column, fit_covariates, condition_on_nt } => {
                let propensities = match propensity_column {
                    Some(col) => {
                        let e = dataset.auxiliary(col)?;
                        window.members.iter().map(|&i| e[i]).collect()
                    }
                    None => fit_propensity(window, dataset, fit_covariates)?.fitted,
                };
                Mechanism::bernoulli(propensities, condition_on_nt.then_some(window.n_treated))
            }
        }
    }
}
