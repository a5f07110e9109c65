//! Synthetic designs with known potential outcomes.
//!
//! Generated data satisfy one-sided noncompliance (W(0) = 0) and the
//! exclusion restriction (Y(1) = Y(0) for never-takers) by construction, so
//! the finite-population complier effect of any window is known exactly.
//! The studies here re-randomize units inside a window under a posited
//! mechanism and check the estimators and tests against that truth.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Normal, WeightedIndex};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assignment::{Mechanism, MechanismSpec};
use crate::balance::{balance_test, BalanceOptions, Decision, TestStatistic};
use crate::data::{assign_treatment, encode_covariates, window_units, Covariate, Dataset, Direction, Window};
use crate::error::{Error, Result};
use crate::estimation::{estimate_complete, estimate_for_mechanism, itt_estimates, EstimationOptions, IttEstimate};
use crate::rng::{derive_seed, stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CovariateLaw {
    /// x = mean + slope_on_s · (s - c) + N(0, sd²).
    Numeric {
        name: String,
        #[serde(default)]
        mean: f64,
        #[serde(default = "one")]
        sd: f64,
        #[serde(default)]
        slope_on_s: f64,
        /// Contribution of x to Y(0).
        #[serde(default)]
        outcome_coef: f64,
    },
    Categorical {
        name: String,
        levels: Vec<String>,
        probs: Vec<f64>,
        /// Additive effect of each level on Y(0); zeros when omitted.
        #[serde(default)]
        outcome_effects: Vec<f64>,
    },
}

fn one() -> f64 {
    1.0
}

/// Unit-level effect of treatment receipt, τ(s).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EffectModel {
    Constant { tau: f64 },
    /// `inside` for |s - c| <= radius, `outside` beyond it.
    Piecewise { radius: f64, inside: f64, outside: f64 },
    /// intercept + slope · |s - c|.
    Linear { intercept: f64, slope: f64 },
}

impl EffectModel {
    pub fn at(&self, distance: f64) -> f64 {
        match *self {
            EffectModel::Constant { tau } => tau,
            EffectModel::Piecewise { radius, inside, outside } => {
                if distance <= radius {
                    inside
                } else {
                    outside
                }
            }
            EffectModel::Linear { intercept, slope } => intercept + slope * distance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DgpConfig {
    pub n: usize,
    pub cutoff: f64,
    /// Running variable is uniform on [cutoff - half_width, cutoff + half_width].
    pub half_width: f64,
    pub direction: Direction,
    pub covariates: Vec<CovariateLaw>,
    pub intercept: f64,
    /// Linear dependence of Y(0) on s - c.
    pub slope_on_s: f64,
    pub noise_sd: f64,
    pub effect: EffectModel,
    /// P(W(1) = 1); W(0) is always 0.
    pub compliance: f64,
    pub seed: u64,
}

impl Default for DgpConfig {
    fn default() -> Self {
        Self {
            n: 1000,
            cutoff: 0.0,
            half_width: 2000.0,
            direction: Direction::TreatedIfLe,
            covariates: Vec::new(),
            intercept: 0.0,
            slope_on_s: 0.0,
            noise_sd: 1.0,
            effect: EffectModel::Constant { tau: 0.0 },
            compliance: 1.0,
            seed: 0,
        }
    }
}

impl DgpConfig {
    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Simulation(msg));
        if self.n == 0 {
            return bad("n must be positive".into());
        }
        if !(self.half_width > 0.0) {
            return bad("half_width must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.compliance) {
            return bad(format!("compliance probability {} outside [0, 1]", self.compliance));
        }
        if !(self.noise_sd >= 0.0) {
            return bad("noise_sd must be nonnegative".into());
        }
        for law in &self.covariates {
            match law {
                CovariateLaw::Numeric { name, sd, .. } if !(*sd >= 0.0) => {
                    return bad(format!("covariate `{name}` has negative sd"));
                }
                CovariateLaw::Categorical { name, levels, probs, outcome_effects } => {
                    if levels.is_empty() || levels.len() != probs.len() {
                        return bad(format!("covariate `{name}` needs one probability per level"));
                    }
                    if probs.iter().any(|p| !(*p >= 0.0)) || (probs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                        return bad(format!("level probabilities of `{name}` must be nonnegative and sum to 1"));
                    }
                    if !outcome_effects.is_empty() && outcome_effects.len() != levels.len() {
                        return bad(format!("covariate `{name}` needs one outcome effect per level"));
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Observed dataset plus the potential outcomes behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleDataset {
    pub dataset: Dataset,
    pub cutoff: f64,
    pub y1: Vec<f64>,
    pub y0: Vec<f64>,
    /// Receipt under assignment to treatment; receipt under control is 0.
    pub w1: Vec<u8>,
    pub complier: Vec<bool>,
}

impl OracleDataset {
    /// Observed data implied by assignment `z` for every unit.
    pub fn with_assignment(&self, z: Vec<u8>) -> Result<Dataset> {
        let y = z.iter().enumerate().map(|(i, &zi)| if zi == 1 { self.y1[i] } else { self.y0[i] }).collect();
        let w = z.iter().zip(&self.w1).map(|(&zi, &w1)| zi * w1).collect();
        self.dataset.clone().with_assignment(z)?.with_outcome(y)?.with_receipt(w)
    }

    /// Replaces the assignment of `window` members with `z_window` (in member order).
    pub fn rerandomize(&self, window: &Window, z_window: &[u8]) -> Result<Dataset> {
        if z_window.len() != window.len() {
            return Err(Error::Argument("assignment does not match the window".into()));
        }
        let mut z = self.dataset.assignment()?.to_vec();
        for (&i, &zi) in window.members.iter().zip(z_window) {
            z[i] = zi;
        }
        self.with_assignment(z)
    }
}

/// Draws a dataset from the DGP; identical seeds give identical data.
pub fn generate_dataset(dgp: &DgpConfig) -> Result<OracleDataset> {
    dgp.validate()?;
    let mut rng = stream(dgp.seed, 0);
    let n = dgp.n;
    let c = dgp.cutoff;
    let s: Vec<f64> = (0..n).map(|_| rng.gen_range(c - dgp.half_width..=c + dgp.half_width)).collect();
    let std_normal = Normal::new(0.0, 1.0).unwrap();
    let mut y0: Vec<f64> = s.iter().map(|&si| dgp.intercept + dgp.slope_on_s * (si - c)).collect();
    let mut covariates = Vec::new();
    for law in &dgp.covariates {
        match law {
            CovariateLaw::Numeric { name, mean, sd, slope_on_s, outcome_coef } => {
                let x: Vec<f64> =
                    s.iter().map(|&si| mean + slope_on_s * (si - c) + sd * std_normal.sample(&mut rng)).collect();
                for (y, xi) in y0.iter_mut().zip(&x) {
                    *y += outcome_coef * xi;
                }
                covariates.push(Covariate::numeric(name.clone(), x));
            }
            CovariateLaw::Categorical { name, levels, probs, outcome_effects } => {
                let picker = WeightedIndex::new(probs).map_err(|e| Error::Simulation(e.to_string()))?;
                let codes: Vec<usize> = (0..n).map(|_| picker.sample(&mut rng)).collect();
                if !outcome_effects.is_empty() {
                    for (y, &k) in y0.iter_mut().zip(&codes) {
                        *y += outcome_effects[k];
                    }
                }
                let labels: Vec<&str> = codes.iter().map(|&k| levels[k].as_str()).collect();
                covariates.push(Covariate::categorical(name.clone(), &labels));
            }
        }
    }
    for y in &mut y0 {
        *y += dgp.noise_sd * std_normal.sample(&mut rng);
    }
    let w1: Vec<u8> = (0..n).map(|_| u8::from(rng.gen::<f64>() < dgp.compliance)).collect();
    let y1: Vec<f64> = (0..n).map(|i| y0[i] + dgp.effect.at((s[i] - c).abs()) * f64::from(w1[i])).collect();
    let base = assign_treatment(&Dataset::new(s, covariates)?, c, dgp.direction)?;
    let mut oracle = OracleDataset {
        dataset: base,
        cutoff: c,
        y1,
        y0,
        complier: w1.iter().map(|&w| w == 1).collect(),
        w1,
    };
    let z = oracle.dataset.assignment()?.to_vec();
    oracle.dataset = oracle.with_assignment(z)?;
    Ok(oracle)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Population {
    All,
    Compliers,
}

/// Mean of y1 - y0 over `members`, optionally restricted to compliers.
pub fn true_effect_on(oracle: &OracleDataset, members: &[usize], population: Population) -> Result<f64> {
    let (sum, count) = members
        .iter()
        .filter(|&&i| population == Population::All || oracle.complier[i])
        .fold((0.0, 0usize), |(s, k), &i| (s + (oracle.y1[i] - oracle.y0[i]), k + 1));
    if count == 0 {
        return Err(Error::Simulation("target population in the window is empty".into()));
    }
    Ok(sum / count as f64)
}

/// Finite-population local effect in the window of half-width `h`.
pub fn true_local_ate(oracle: &OracleDataset, cutoff: f64, h: f64, population: Population) -> Result<f64> {
    let w = window_units(&oracle.dataset, cutoff, h)?;
    true_effect_on(oracle, &w.members, population)
}

/// True effects behind the nested-window decomposition.
pub fn true_ring_decomposition(
    oracle: &OracleDataset,
    cutoff: f64,
    h1: f64,
    h2: f64,
    population: Population,
) -> Result<crate::sensitivity::RingDecomposition> {
    let ring = Window::ring(&oracle.dataset, cutoff, h1, h2)?;
    let inner = window_units(&oracle.dataset, cutoff, h1)?;
    let outer = window_units(&oracle.dataset, cutoff, h2)?;
    let count = |m: &[usize]| {
        m.iter().filter(|&&i| population == Population::All || oracle.complier[i]).count()
    };
    let part = |m: &[usize]| -> Result<(usize, f64)> { Ok((count(m), true_effect_on(oracle, m, population)?)) };
    Ok(crate::sensitivity::RingDecomposition::from_parts(
        h1,
        h2,
        [part(&inner.members)?, part(&ring.members)?, part(&outer.members)?],
    ))
}

/// Brute-force exact randomization p-values, one per statistic.
///
/// Statistics are recomputed from scratch for every assignment in the
/// enumerated support, independently of the balance module's evaluators.
pub fn exact_p_oracle(
    window: &Window,
    dataset: &Dataset,
    mechanism: &Mechanism,
    statistic: TestStatistic,
) -> Result<Vec<f64>> {
    let z_obs = dataset.assignment_in(&window.members)?;
    let encoded = encode_covariates(dataset, &window.members, None, false)?;
    let support = mechanism.enumerate()?;
    let stats = |z: &[u8]| -> Vec<f64> { naive_statistics(statistic, z, &encoded.columns) };
    let observed = stats(&z_obs);
    if observed.iter().any(|t| t.is_infinite()) {
        return Err(Error::Simulation("observed statistic is undefined".into()));
    }
    let mut p = vec![0.0; observed.len()];
    for (z, prob) in &support {
        for (j, t) in stats(z).into_iter().enumerate() {
            if t >= observed[j] - 1e-9 * observed[j].abs() {
                p[j] += prob;
            }
        }
    }
    Ok(p)
}

fn naive_statistics(statistic: TestStatistic, z: &[u8], columns: &[Vec<f64>]) -> Vec<f64> {
    let treated: Vec<usize> = (0..z.len()).filter(|&i| z[i] == 1).collect();
    let control: Vec<usize> = (0..z.len()).filter(|&i| z[i] == 0).collect();
    let avg = |col: &[f64], idx: &[usize]| idx.iter().map(|&i| col[i]).sum::<f64>() / idx.len() as f64;
    let var = |col: &[f64], idx: &[usize]| {
        let m = avg(col, idx);
        idx.iter().map(|&i| (col[i] - m).powi(2)).sum::<f64>() / (idx.len() as f64 - 1.0)
    };
    match statistic {
        TestStatistic::AbsMeanDifference => columns
            .iter()
            .map(|c| {
                if treated.is_empty() || control.is_empty() {
                    f64::INFINITY
                } else {
                    (avg(c, &treated) - avg(c, &control)).abs()
                }
            })
            .collect(),
        TestStatistic::StandardizedMeanDifference => columns
            .iter()
            .map(|c| {
                if treated.len() < 2 || control.len() < 2 {
                    return f64::INFINITY;
                }
                let d = (avg(c, &treated) - avg(c, &control)).abs();
                let sd = ((var(c, &treated) + var(c, &control)) / 2.0).sqrt();
                if sd > 0.0 {
                    d / sd
                } else if d == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            })
            .collect(),
        TestStatistic::Mahalanobis => {
            if treated.is_empty() || control.is_empty() {
                return vec![f64::INFINITY];
            }
            let n = z.len();
            let k = columns.len();
            let x = DMatrix::from_fn(n, k, |i, j| columns[j][i]);
            let centered = DMatrix::from_fn(n, k, |i, j| x[(i, j)] - x.column(j).mean());
            let cov = centered.transpose() * &centered / (n as f64 - 1.0);
            let max_sv = cov.clone().svd(false, false).singular_values.max();
            let pinv = cov.pseudo_inverse(1e-10 * max_sv.max(f64::MIN_POSITIVE)).unwrap();
            let d = nalgebra::DVector::from_fn(k, |j, _| avg(&columns[j], &treated) - avg(&columns[j], &control));
            let q = (d.transpose() * pinv * &d)[(0, 0)];
            vec![(treated.len() * control.len()) as f64 / n as f64 * q]
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub dgp: DgpConfig,
    pub mechanism: MechanismSpec,
    pub bandwidth: f64,
    pub reps: usize,
    pub estimation: EstimationOptions,
    /// Balance test run on each re-randomized window; skipped when `None`.
    pub balance: Option<BalanceOptions>,
    pub seed: u64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            dgp: DgpConfig::default(),
            mechanism: MechanismSpec::complete(),
            bandwidth: 1000.0,
            reps: 1000,
            estimation: EstimationOptions::default(),
            balance: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyReport {
    pub reps: usize,
    pub completed: usize,
    pub failures: usize,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub failure_examples: Vec<String>,
    /// Estimator matching the mechanism (block-pooled for block designs).
    pub coverage: f64,
    pub mean_ci_width: f64,
    pub mean_point: f64,
    pub mean_true_effect: f64,
    /// Complete-randomization estimator on the same draws, for comparison.
    pub complete_coverage: f64,
    pub complete_mean_ci_width: f64,
    pub balance_tested: usize,
    pub balance_rejection_rate: Option<f64>,
}

struct RepOutcome {
    truth: f64,
    point: f64,
    covered: bool,
    width: f64,
    complete_covered: bool,
    complete_width: f64,
    rejected: Option<bool>,
}

fn run_rep(config: &StudyConfig, r: u64) -> Result<RepOutcome> {
    let dgp = DgpConfig { seed: derive_seed(config.dgp.seed, 1, r), ..config.dgp.clone() };
    let oracle = generate_dataset(&dgp)?;
    let window = window_units(&oracle.dataset, dgp.cutoff, config.bandwidth)?;
    let mechanism = config.mechanism.resolve(&oracle.dataset, &window)?;
    let z = mechanism.draw(derive_seed(config.seed, 2, r), 0)?;
    let data = oracle.rerandomize(&window, &z)?;
    let window = Window::from_members(&data, dgp.cutoff, config.bandwidth, None, window.members)?;
    let truth = true_effect_on(&oracle, &window.members, Population::Compliers)?;
    let est = estimate_for_mechanism(&window, &data, &mechanism, &config.estimation)?;
    let complete = estimate_complete(&window, &data, &config.estimation)?;
    let rejected = match &config.balance {
        None => None,
        Some(opts) => {
            let mech = config.mechanism.resolve(&data, &window)?;
            let opts = BalanceOptions { seed: derive_seed(config.seed, 3, r), ..opts.clone() };
            Some(balance_test(&window, &data, &mech, &opts)?.decision == Decision::Rejected)
        }
    };
    let covers = |ci: (f64, f64)| ci.0 <= truth && truth <= ci.1;
    Ok(RepOutcome {
        truth,
        point: est.point,
        covered: covers(est.ci),
        width: est.ci.1 - est.ci.0,
        complete_covered: covers(complete.ci),
        complete_width: complete.ci.1 - complete.ci.0,
        rejected,
    })
}

/// Coverage and test-validity study over `reps` simulated datasets.
///
/// Each replication draws a fresh dataset, re-randomizes the window under
/// the posited mechanism, and compares the interval with the window's true
/// complier effect. Failed replications are counted, not fatal.
pub fn coverage_study(config: &StudyConfig) -> Result<StudyReport> {
    if config.reps < 100 {
        return Err(Error::Simulation(format!("coverage study needs at least 100 replications, got {}", config.reps)));
    }
    let outcomes: Vec<Result<RepOutcome>> = (0..config.reps as u64).into_par_iter().map(|r| run_rep(config, r)).collect();
    let mut ok = Vec::new();
    let mut failure_examples = Vec::new();
    let mut failures = 0;
    for (r, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(o) => ok.push(o),
            Err(e) => {
                failures += 1;
                if failure_examples.len() < 5 {
                    failure_examples.push(format!("rep {r}: {e}"));
                }
            }
        }
    }
    if ok.is_empty() {
        return Err(Error::Simulation(format!("all replications failed; first: {}", failure_examples.join("; "))));
    }
    let k = ok.len() as f64;
    let frac = |f: &dyn Fn(&RepOutcome) -> bool| ok.iter().filter(|o| f(o)).count() as f64 / k;
    let avg = |f: &dyn Fn(&RepOutcome) -> f64| ok.iter().map(f).sum::<f64>() / k;
    let tested: Vec<bool> = ok.iter().filter_map(|o| o.rejected).collect();
    Ok(StudyReport {
        reps: config.reps,
        completed: ok.len(),
        failures,
        failure_examples,
        coverage: frac(&|o| o.covered),
        mean_ci_width: avg(&|o| o.width),
        mean_point: avg(&|o| o.point),
        mean_true_effect: avg(&|o| o.truth),
        complete_coverage: frac(&|o| o.complete_covered),
        complete_mean_ci_width: avg(&|o| o.complete_width),
        balance_tested: tested.len(),
        balance_rejection_rate: (!tested.is_empty())
            .then(|| tested.iter().filter(|&&r| r).count() as f64 / tested.len() as f64),
    })
}

/// ITT estimates from `reps` re-randomizations of one fixed window.
pub fn rerandomized_itt(
    oracle: &OracleDataset,
    window: &Window,
    mechanism: &Mechanism,
    reps: usize,
    seed: u64,
) -> Result<Vec<IttEstimate>> {
    (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let z = mechanism.draw(seed, r)?;
            let data = oracle.rerandomize(window, &z)?;
            let w = Window::from_members(&data, window.cutoff, window.bandwidth, None, window.members.clone())?;
            itt_estimates(&w, &data)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> DgpConfig {
        DgpConfig {
            n: 200,
            covariates: vec![
                CovariateLaw::Numeric { name: "x".into(), mean: 0.0, sd: 1.0, slope_on_s: 0.0, outcome_coef: 0.5 },
                CovariateLaw::Categorical {
                    name: "g".into(),
                    levels: vec!["a".into(), "b".into()],
                    probs: vec![0.4, 0.6],
                    outcome_effects: vec![],
                },
            ],
            seed: 11,
            ..Default::default()
        }
    }

    #[test]
    fn null_effect_and_perfect_compliance() {
        let o = generate_dataset(&base()).unwrap();
        assert_eq!(o.y1, o.y0);
        assert!(o.w1.iter().all(|&w| w == 1));
        assert_eq!(o.dataset.receipt().unwrap(), o.dataset.assignment().unwrap());
    }

    #[test]
    fn deterministic_given_seed() {
        let a = generate_dataset(&base()).unwrap();
        let b = generate_dataset(&base()).unwrap();
        assert_eq!(a, b);
        let c = generate_dataset(&DgpConfig { seed: 12, ..base() }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn observed_columns_consistent_with_hidden() {
        let dgp = DgpConfig { compliance: 0.6, effect: EffectModel::Constant { tau: 2.0 }, ..base() };
        let o = generate_dataset(&dgp).unwrap();
        let z = o.dataset.assignment().unwrap();
        let y = o.dataset.outcome().unwrap();
        let w = o.dataset.receipt().unwrap();
        for i in 0..o.y1.len() {
            assert_eq!(y[i], if z[i] == 1 { o.y1[i] } else { o.y0[i] });
            assert_eq!(w[i], z[i] * o.w1[i]);
            assert_eq!(o.complier[i], o.w1[i] == 1);
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(generate_dataset(&DgpConfig { compliance: 1.5, ..base() }).is_err());
        let mut d = base();
        d.covariates.push(CovariateLaw::Categorical {
            name: "h".into(),
            levels: vec!["a".into()],
            probs: vec![0.5],
            outcome_effects: vec![],
        });
        assert!(generate_dataset(&d).is_err());
    }

    #[test]
    fn true_effects() {
        let dgp = DgpConfig { effect: EffectModel::Constant { tau: 1.5 }, ..base() };
        let o = generate_dataset(&dgp).unwrap();
        for h in [100.0, 500.0, 2000.0] {
            assert!((true_local_ate(&o, 0.0, h, Population::All).unwrap() - 1.5).abs() < 1e-12);
        }
        let dgp = DgpConfig { effect: EffectModel::Piecewise { radius: 800.0, inside: 0.0, outside: 3.0 }, ..base() };
        let o = generate_dataset(&dgp).unwrap();
        assert_eq!(true_local_ate(&o, 0.0, 700.0, Population::All).unwrap(), 0.0);
        assert!(true_local_ate(&o, 0.0, 2000.0, Population::All).unwrap() > 0.0);
        let dgp = DgpConfig { compliance: 0.5, effect: EffectModel::Constant { tau: 0.8 }, ..base() };
        let o = generate_dataset(&dgp).unwrap();
        assert!((true_local_ate(&o, 0.0, 2000.0, Population::Compliers).unwrap() - 0.8).abs() < 1e-12);
        assert!(true_local_ate(&o, 0.0, 2000.0, Population::All).unwrap() < 0.8);
    }

    #[test]
    fn study_needs_enough_reps() {
        let cfg = StudyConfig { reps: 10, ..Default::default() };
        assert!(coverage_study(&cfg).is_err());
    }
}
