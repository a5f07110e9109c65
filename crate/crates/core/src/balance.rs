//! Randomization tests of whether a posited assignment mechanism is
//! plausible inside a window, and the bandwidth scan built on them.
//!
//! Statistics only ever see the assignment vector and the covariate matrix.
//! Outcomes and treatment receipt are not part of any signature here.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assignment::{Mechanism, MechanismSpec};
use crate::data::{encode_covariates, window_units, Dataset, EncodedCovariates, Window};
use crate::error::{Error, Result};
use crate::rng::derive_seed;

pub const DEFAULT_ALPHA: f64 = 0.15;
pub const DEFAULT_DRAWS: usize = 1000;
/// Relative tolerance for deciding `t(z) >= t_obs` on floating point ties.
const TIE_TOLERANCE: f64 = 1e-9;
/// Singular values below this fraction of the largest are dropped when
/// inverting the covariate covariance.
const PINV_CUTOFF: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TestStatistic {
    /// |mean(x | z=1) - mean(x | z=0)|, one test per encoded covariate.
    AbsMeanDifference,
    /// Absolute mean difference over the pooled-arm standard deviation,
    /// one test per encoded covariate.
    StandardizedMeanDifference,
    /// Omnibus (N_T N_C / N) d' cov(X)^+ d over all encoded covariates.
    #[default]
    Mahalanobis,
}

impl TestStatistic {
    pub fn is_omnibus(self) -> bool {
        matches!(self, TestStatistic::Mahalanobis)
    }
}

impl std::str::FromStr for TestStatistic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "abs_mean_difference" | "mean_difference" => Ok(TestStatistic::AbsMeanDifference),
            "standardized_mean_difference" | "smd" => Ok(TestStatistic::StandardizedMeanDifference),
            "mahalanobis" => Ok(TestStatistic::Mahalanobis),
            other => Err(Error::Config(format!("unknown statistic `{other}`"))),
        }
    }
}

/// How the reference distribution is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PValueMethod {
    /// M draws, observed assignment counted in: (1 + #{t >= t_obs}) / (M + 1).
    #[default]
    MonteCarlo,
    /// M draws, literal #{t >= t_obs} / (M + 1).
    PaperExact,
    /// Full enumeration of the mechanism's support: sum of P(z) over t(z) >= t_obs.
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BalanceOptions {
    pub statistic: TestStatistic,
    pub alpha: f64,
    pub draws: usize,
    pub seed: u64,
    pub method: PValueMethod,
    /// Minimum units per arm for a window to be testable.
    pub min_arm: usize,
    /// Covariates to test; all loaded covariates when `None`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub covariates: Option<Vec<String>>,
}

impl Default for BalanceOptions {
    fn default() -> Self {
        Self {
            statistic: TestStatistic::default(),
            alpha: DEFAULT_ALPHA,
            draws: DEFAULT_DRAWS,
            seed: 0,
            method: PValueMethod::default(),
            min_arm: 2,
            covariates: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Plausible,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BalanceResult {
    pub per_statistic_p: BTreeMap<String, f64>,
    pub p_min: f64,
    pub alpha: f64,
    pub decision: Decision,
    /// Number of reference draws (support size in exact mode).
    pub m_draws: usize,
    pub observed_stats: BTreeMap<String, f64>,
}

/// |mean(x | z=1) - mean(x | z=0)|.
pub fn mean_difference_stat(z: &[u8], x: &[f64]) -> Result<f64> {
    check_len(z, x)?;
    let (n_t, n_c, sum_t, sum_c) = arm_sums(z, x);
    if n_t == 0 || n_c == 0 {
        return Err(Error::Balance("mean difference needs both arms nonempty".into()));
    }
    Ok((sum_t / n_t as f64 - sum_c / n_c as f64).abs())
}

/// Absolute mean difference over sqrt((s_T^2 + s_C^2) / 2).
///
/// Zero spread in both arms gives 0 for a zero difference and +inf otherwise.
pub fn standardized_mean_difference_stat(z: &[u8], x: &[f64]) -> Result<f64> {
    check_len(z, x)?;
    let (n_t, n_c, sum_t, sum_c) = arm_sums(z, x);
    if n_t < 2 || n_c < 2 {
        return Err(Error::Balance("standardized mean difference needs two units per arm".into()));
    }
    let (mt, mc) = (sum_t / n_t as f64, sum_c / n_c as f64);
    let (mut ss_t, mut ss_c) = (0.0, 0.0);
    for (&zi, &xi) in z.iter().zip(x) {
        if zi == 1 {
            ss_t += (xi - mt).powi(2);
        } else {
            ss_c += (xi - mc).powi(2);
        }
    }
    let spread = ((ss_t / (n_t - 1) as f64 + ss_c / (n_c - 1) as f64) / 2.0).sqrt();
    let diff = (mt - mc).abs();
    Ok(if spread > 0.0 {
        diff / spread
    } else if diff == 0.0 {
        0.0
    } else {
        f64::INFINITY
    })
}

/// (N_T N_C / N) (x̄_T - x̄_C)' cov(X)^+ (x̄_T - x̄_C) for covariate columns.
pub fn mahalanobis_stat(z: &[u8], columns: &[Vec<f64>]) -> Result<f64> {
    let form = MahalanobisForm::new(columns)?;
    form.evaluate(z)
        .ok_or_else(|| Error::Balance("Mahalanobis distance needs both arms nonempty".into()))
}

fn check_len(z: &[u8], x: &[f64]) -> Result<()> {
    if z.len() != x.len() {
        return Err(Error::Argument(format!("assignment length {} != covariate length {}", z.len(), x.len())));
    }
    Ok(())
}

fn arm_sums(z: &[u8], x: &[f64]) -> (usize, usize, f64, f64) {
    let (mut n_t, mut n_c, mut sum_t, mut sum_c) = (0usize, 0usize, 0.0, 0.0);
    for (&zi, &xi) in z.iter().zip(x) {
        if zi == 1 {
            n_t += 1;
            sum_t += xi;
        } else {
            n_c += 1;
            sum_c += xi;
        }
    }
    (n_t, n_c, sum_t, sum_c)
}

/// Covariance pseudoinverse prepared once per window.
struct MahalanobisForm<'a> {
    columns: &'a [Vec<f64>],
    totals: Vec<f64>,
    pinv: DMatrix<f64>,
}

impl<'a> MahalanobisForm<'a> {
    fn new(columns: &'a [Vec<f64>]) -> Result<Self> {
        let k = columns.len();
        let n = columns.first().map_or(0, Vec::len);
        if n < 2 {
            return Err(Error::Balance("Mahalanobis distance needs at least two units".into()));
        }
        if k == 0 {
            return Err(Error::Balance("Mahalanobis distance needs at least one covariate".into()));
        }
        let means: Vec<f64> = columns.iter().map(|c| c.iter().sum::<f64>() / n as f64).collect();
        let cov = DMatrix::from_fn(k, k, |a, b| {
            columns[a]
                .iter()
                .zip(&columns[b])
                .map(|(xa, xb)| (xa - means[a]) * (xb - means[b]))
                .sum::<f64>()
                / (n - 1) as f64
        });
        let svd = cov.svd(true, true);
        let max_sv = svd.singular_values.iter().copied().fold(0.0, f64::max);
        let pinv = if max_sv == 0.0 {
            DMatrix::zeros(k, k)
        } else {
            svd.pseudo_inverse(PINV_CUTOFF * max_sv).map_err(|e| Error::Balance(e.to_string()))?
        };
        let totals = columns.iter().map(|c| c.iter().sum()).collect();
        Ok(Self { columns, totals, pinv })
    }

    /// `None` when an arm is empty.
    fn evaluate(&self, z: &[u8]) -> Option<f64> {
        let n = z.len();
        let n_t = z.iter().filter(|&&v| v == 1).count();
        let n_c = n - n_t;
        if n_t == 0 || n_c == 0 {
            return None;
        }
        let diff: Vec<f64> = self
            .columns
            .iter()
            .zip(&self.totals)
            .map(|(col, total)| {
                let sum_t: f64 = col.iter().zip(z).filter(|(_, &zi)| zi == 1).map(|(x, _)| x).sum();
                sum_t / n_t as f64 - (total - sum_t) / n_c as f64
            })
            .collect();
        let k = diff.len();
        let mut q = 0.0;
        for a in 0..k {
            let mut row = 0.0;
            for b in 0..k {
                row += self.pinv[(a, b)] * diff[b];
            }
            q += diff[a] * row;
        }
        Some((n_t as f64 * n_c as f64 / n as f64 * q).max(0.0))
    }
}

/// Evaluates a statistic family on assignment vectors for fixed covariates.
enum Evaluator<'a> {
    PerCovariate { statistic: TestStatistic, columns: &'a [Vec<f64>] },
    Omnibus(MahalanobisForm<'a>),
}

impl<'a> Evaluator<'a> {
    fn new(statistic: TestStatistic, encoded: &'a EncodedCovariates) -> Result<Self> {
        if encoded.n_columns() == 0 {
            return Err(Error::Balance("no covariates to test".into()));
        }
        Ok(match statistic {
            TestStatistic::Mahalanobis => Evaluator::Omnibus(MahalanobisForm::new(&encoded.columns)?),
            s => Evaluator::PerCovariate { statistic: s, columns: &encoded.columns },
        })
    }

    fn names(&self, encoded: &EncodedCovariates) -> Vec<String> {
        match self {
            Evaluator::Omnibus(_) => vec!["mahalanobis".into()],
            Evaluator::PerCovariate { .. } => encoded.names.clone(),
        }
    }

    /// One value per statistic; undefined values (empty arm) map to +inf.
    fn evaluate(&self, z: &[u8]) -> (Vec<f64>, bool) {
        match self {
            Evaluator::Omnibus(form) => match form.evaluate(z) {
                Some(t) => (vec![t], false),
                None => (vec![f64::INFINITY], true),
            },
            Evaluator::PerCovariate { statistic, columns } => {
                let mut degenerate = false;
                let values = columns
                    .iter()
                    .map(|x| {
                        let t = match statistic {
                            TestStatistic::AbsMeanDifference => mean_difference_stat(z, x),
                            _ => standardized_mean_difference_stat(z, x),
                        };
                        t.unwrap_or_else(|_| {
                            degenerate = true;
                            f64::INFINITY
                        })
                    })
                    .collect();
                (values, degenerate)
            }
        }
    }
}

fn neumaier_add((sum, comp): &mut (f64, f64), x: f64) {
    let t = *sum + x;
    if sum.abs() >= x.abs() {
        *comp += (*sum - t) + x;
    } else {
        *comp += (x - t) + *sum;
    }
    *sum = t;
}

fn at_least(t: f64, observed: f64) -> bool {
    t >= observed - TIE_TOLERANCE * observed.abs()
}

/// Randomization p-values for each statistic (one for the omnibus statistic).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RandomizationPValues {
    pub names: Vec<String>,
    pub observed: Vec<f64>,
    pub p_values: Vec<f64>,
    pub m_draws: usize,
}

/// Compares the observed statistic against draws from `mechanism`.
pub fn randomization_p_value(
    window: &Window,
    dataset: &Dataset,
    mechanism: &Mechanism,
    options: &BalanceOptions,
) -> Result<RandomizationPValues> {
    let z_obs = dataset.assignment_in(&window.members)?;
    let encoded = encode_covariates(dataset, &window.members, options.covariates.as_deref(), false)?;
    p_values_for(&z_obs, &encoded, mechanism, options)
}

/// Same as [`randomization_p_value`] on an already encoded covariate matrix.
pub fn p_values_for(
    z_obs: &[u8],
    encoded: &EncodedCovariates,
    mechanism: &Mechanism,
    options: &BalanceOptions,
) -> Result<RandomizationPValues> {
    if mechanism.n_units() != z_obs.len() || encoded.n_units() != z_obs.len() {
        return Err(Error::Argument("mechanism, assignment and covariates cover different unit counts".into()));
    }
    let evaluator = Evaluator::new(options.statistic, encoded)?;
    let names = evaluator.names(encoded);
    let (observed, degenerate) = evaluator.evaluate(z_obs);
    if degenerate {
        return Err(Error::Balance("observed assignment leaves a statistic undefined (arm too small)".into()));
    }
    let k = observed.len();

    let (p_values, m_draws) = match options.method {
        PValueMethod::Exact => {
            let support = mechanism.enumerate()?;
            let mut mass = vec![(0.0, 0.0); k];
            let mut all_degenerate = true;
            for (z, p) in &support {
                let (t, deg) = evaluator.evaluate(z);
                all_degenerate &= deg;
                for j in 0..k {
                    if at_least(t[j], observed[j]) {
                        neumaier_add(&mut mass[j], *p);
                    }
                }
            }
            if all_degenerate {
                return Err(Error::Balance("every assignment in the support is degenerate".into()));
            }
            (mass.into_iter().map(|(s, c)| (s + c).min(1.0)).collect(), support.len())
        }
        PValueMethod::MonteCarlo | PValueMethod::PaperExact => {
            let m = options.draws;
            if m == 0 {
                return Err(Error::Argument("number of draws must be at least 1".into()));
            }
            let (counts, degenerate_draws) = (0..m as u64)
                .into_par_iter()
                .map(|i| -> Result<(Vec<usize>, usize)> {
                    let z = mechanism.draw(options.seed, i)?;
                    let (t, deg) = evaluator.evaluate(&z);
                    let hits = t.iter().zip(&observed).map(|(&t, &o)| usize::from(at_least(t, o))).collect();
                    Ok((hits, usize::from(deg)))
                })
                .try_reduce(
                    || (vec![0; k], 0),
                    |(mut a, da), (b, db)| {
                        a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                        Ok((a, da + db))
                    },
                )?;
            if degenerate_draws == m {
                return Err(Error::Balance(format!("all {m} draws left an arm empty")));
            }
            let extra = usize::from(options.method == PValueMethod::MonteCarlo);
            let denom = (m + 1) as f64;
            (counts.into_iter().map(|c| (c + extra) as f64 / denom).collect(), m)
        }
    };
    Ok(RandomizationPValues { names, observed, p_values, m_draws })
}

/// Minimum p-value rule: reject when `p_min < alpha`, without multiplicity
/// correction.
pub fn min_p_test(per_statistic_p: &BTreeMap<String, f64>, alpha: f64) -> Result<BalanceResult> {
    if per_statistic_p.is_empty() {
        return Err(Error::Argument("min-p test needs at least one p-value".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Argument(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let p_min = per_statistic_p.values().copied().fold(f64::INFINITY, f64::min);
    Ok(BalanceResult {
        per_statistic_p: per_statistic_p.clone(),
        p_min,
        alpha,
        decision: if p_min < alpha { Decision::Rejected } else { Decision::Plausible },
        m_draws: 0,
        observed_stats: BTreeMap::new(),
    })
}

/// Randomization p-values followed by the min-p decision.
pub fn balance_test(
    window: &Window,
    dataset: &Dataset,
    mechanism: &Mechanism,
    options: &BalanceOptions,
) -> Result<BalanceResult> {
    let pv = randomization_p_value(window, dataset, mechanism, options)?;
    let map = pv.names.iter().cloned().zip(pv.p_values.iter().copied()).collect();
    let mut result = min_p_test(&map, options.alpha)?;
    result.m_draws = pv.m_draws;
    result.observed_stats = pv.names.into_iter().zip(pv.observed).collect();
    Ok(result)
}

/// Seed used for the balance test at bandwidth `h`, independent of the grid.
pub fn seed_for_bandwidth(seed: u64, h: f64) -> u64 {
    derive_seed(seed, 0xBA1A_17CE, h.to_bits())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowScanRow {
    pub bandwidth: f64,
    pub n: usize,
    pub n_treated: usize,
    pub n_control: usize,
    /// `None` when the window could not be tested.
    pub p_min: Option<f64>,
    pub decision: Option<Decision>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<BalanceResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowSelection {
    /// Largest plausible bandwidth, `None` when every tested window is rejected.
    pub selected: Option<f64>,
    pub mechanism: String,
    pub rows: Vec<WindowScanRow>,
}

/// Tests the mechanism at every grid bandwidth and picks the largest plausible one.
pub fn select_window(
    dataset: &Dataset,
    spec: &MechanismSpec,
    cutoff: f64,
    grid: &[f64],
    options: &BalanceOptions,
) -> Result<WindowSelection> {
    if grid.is_empty() {
        return Err(Error::Argument("bandwidth grid is empty".into()));
    }
    if grid.iter().any(|&h| !(h > 0.0)) {
        return Err(Error::Argument("bandwidths must be positive".into()));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Argument("bandwidth grid must be strictly increasing".into()));
    }
    let rows: Vec<WindowScanRow> = grid
        .par_iter()
        .map(|&h| -> Result<WindowScanRow> {
            let window = window_units(dataset, cutoff, h)?;
            let mut row = WindowScanRow {
                bandwidth: h,
                n: window.len(),
                n_treated: window.n_treated,
                n_control: window.n_control,
                p_min: None,
                decision: None,
                note: None,
                result: None,
            };
            if window.n_treated < options.min_arm || window.n_control < options.min_arm {
                row.note = Some(format!("fewer than {} units in an arm", options.min_arm));
                return Ok(row);
            }
            let opts = BalanceOptions { seed: seed_for_bandwidth(options.seed, h), ..options.clone() };
            let outcome = spec
                .resolve(dataset, &window)
                .and_then(|mechanism| balance_test(&window, dataset, &mechanism, &opts));
            match outcome {
                Ok(result) => {
                    row.p_min = Some(result.p_min);
                    row.decision = Some(result.decision);
                    row.result = Some(result);
                }
                Err(e) => row.note = Some(e.to_string()),
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;
    if rows.iter().all(|r| r.decision.is_none()) {
        return Err(Error::Balance("no bandwidth in the grid gives a testable window".into()));
    }
    let selected = rows
        .iter()
        .filter(|r| r.decision == Some(Decision::Plausible))
        .map(|r| r.bandwidth)
        .fold(None, |acc: Option<f64>, h| Some(acc.map_or(h, |a| a.max(h))));
    Ok(WindowSelection { selected, mechanism: spec.label(), rows })
}
