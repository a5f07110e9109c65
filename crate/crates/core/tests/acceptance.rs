//! Acceptance suite: one PASS/FAIL line per criterion.

mod common;

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use localrd::assignment::{build_blocks, fit_propensity, Blocking, Mechanism, MechanismSpec};
use localrd::balance::{randomization_p_value, select_window, BalanceOptions, PValueMethod, TestStatistic};
use localrd::cli::RunConfig;
use localrd::data::{window_units, Covariate, CovariateSpec, Dataset, Direction, Schema, Window};
use localrd::estimation::{block_complier_ate, estimate_complete, EstimationOptions};
use localrd::rng::{derive_seed, stream};
use localrd::simulation::{
    coverage_study, exact_p_oracle, generate_dataset, true_ring_decomposition, CovariateLaw, DgpConfig, EffectModel,
    Population, StudyConfig,
};
use localrd::Error;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use rand::Rng;

type Outcome = Result<String, String>;

fn main() {
    let criteria: [(&str, fn() -> Outcome, Duration); 10] = [
        ("exact vs Monte Carlo p-values", mc_matches_exact, Duration::from_secs(60)),
        ("hand-enumerable fixture", hand_fixture, Duration::from_secs(60)),
        ("balance test validity", test_validity, Duration::from_secs(300)),
        ("estimator identities", estimator_identities, Duration::from_secs(600)),
        ("interval coverage", ci_coverage, Duration::from_secs(600)),
        ("block vs complete precision", precision_ordering, Duration::from_secs(600)),
        ("nested-window decomposition", decomposition_identity, Duration::from_secs(600)),
        ("window selection", window_selection, Duration::from_secs(600)),
        ("propensity fit", propensity_fit, Duration::from_secs(600)),
        ("CLI reproducibility", cli_reproducibility, Duration::from_secs(600)),
    ];
    let mut failed = 0;
    for (k, (name, check, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(msg) if elapsed > *budget => Err(format!("{msg}; over time budget of {budget:?}")),
            other => other,
        };
        let (tag, msg) = match outcome {
            Ok(msg) => ("PASS", msg),
            Err(msg) => {
                failed += 1;
                ("FAIL", msg)
            }
        };
        println!("{tag} [{:>2}] {name}: {msg} ({:.1}s)", k + 1, elapsed.as_secs_f64());
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn ensure(ok: bool, msg: String) -> Outcome {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

/// Random small window; redrawn while the observed statistic is undefined.
fn small_case(case: u64) -> (Dataset, Window, Mechanism, TestStatistic) {
    (0..)
        .map(|attempt| small_case_attempt(case, attempt))
        .find(|(d, w, m, s)| exact_p_oracle(w, d, m, *s).is_ok())
        .unwrap()
}

fn small_case_attempt(case: u64, attempt: u64) -> (Dataset, Window, Mechanism, TestStatistic) {
    let mut rng = stream(0xACCE + attempt, case);
    let n = rng.gen_range(5..=8usize);
    let x: Vec<f64> = (0..n).map(|_| (rng.gen_range(0.0..10.0f64) * 100.0).round() / 100.0).collect();
    let g: Vec<&str> = (0..n).map(|i| if i % 2 == 0 { "a" } else { "b" }).collect();
    let covs = vec![Covariate::numeric("x", x), Covariate::categorical("g", &g)];
    let z = common::random_assignment(n, 2, derive_seed(0xACCE, 1, case));
    let (data, window) = common::whole_window((0..n).map(|i| i as f64).collect(), covs, z.clone());
    let mechanism = match case % 3 {
        0 => Mechanism::complete(n, window.n_treated).unwrap(),
        1 => {
            let blocking = build_blocks(&window, &data, &["g".to_string()]).unwrap();
            let per_block = blocking.treated_counts(&z);
            Mechanism::block(blocking, per_block).unwrap()
        }
        _ => {
            let e: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..0.8)).collect();
            let condition = (case % 2 == 1).then_some(window.n_treated);
            Mechanism::bernoulli(e, condition).unwrap()
        }
    };
    let statistic = [TestStatistic::AbsMeanDifference, TestStatistic::StandardizedMeanDifference, TestStatistic::Mahalanobis]
        [(case / 3 % 3) as usize];
    (data, window, mechanism, statistic)
}

fn mc_matches_exact() -> Outcome {
    let m = 100_000usize;
    let cases = 27u64;
    let mut worst: f64 = 0.0;
    let mut kinds = std::collections::BTreeSet::new();
    for case in 0..cases {
        let (data, window, mechanism, statistic) = small_case(case);
        kinds.insert(mechanism.kind_name());
        let exact = exact_p_oracle(&window, &data, &mechanism, statistic).map_err(|e| e.to_string())?;
        let opts = BalanceOptions { statistic, method: PValueMethod::PaperExact, draws: m, seed: case, ..Default::default() };
        let mc = randomization_p_value(&window, &data, &mechanism, &opts).map_err(|e| e.to_string())?;
        for (p, q) in exact.iter().zip(&mc.p_values) {
            let tol = 4.0 * (p * (1.0 - p) / m as f64).sqrt() + 1.0 / (m as f64 + 1.0) + 1e-12;
            worst = worst.max((p - q).abs() / tol);
            if (p - q).abs() > tol {
                return Err(format!("case {case} ({}): exact {p} vs Monte Carlo {q}", mechanism.kind_name()));
            }
        }
    }
    ensure(kinds.len() == 3, format!("{cases} windows over {kinds:?}, max |diff| / tolerance = {worst:.3}"))
}

fn hand_fixture() -> Outcome {
    let x = Covariate::numeric("x", vec![1.0, 2.0, 3.0, 4.0]);
    let (data, window) = common::whole_window(vec![0.0; 4], vec![x], vec![1, 1, 0, 0]);
    let mechanism = Mechanism::complete(4, 2).unwrap();
    let oracle = exact_p_oracle(&window, &data, &mechanism, TestStatistic::AbsMeanDifference).unwrap()[0];
    let opts =
        BalanceOptions { statistic: TestStatistic::AbsMeanDifference, method: PValueMethod::Exact, ..Default::default() };
    let library = randomization_p_value(&window, &data, &mechanism, &opts).unwrap().p_values[0];
    ensure(oracle == 1.0 / 3.0 && library == 1.0 / 3.0, format!("oracle p = {oracle}, library p = {library}"))
}

fn validity_dgp(seed: u64) -> DgpConfig {
    DgpConfig {
        n: 400,
        covariates: vec![
            CovariateLaw::Numeric { name: "age".into(), mean: 20.0, sd: 2.0, slope_on_s: 0.0, outcome_coef: 0.3 },
            CovariateLaw::Numeric { name: "income".into(), mean: 0.0, sd: 1.0, slope_on_s: 0.0005, outcome_coef: 0.0 },
            CovariateLaw::Categorical {
                name: "sex".into(),
                levels: vec!["F".into(), "M".into()],
                probs: vec![0.5, 0.5],
                outcome_effects: vec![],
            },
        ],
        effect: EffectModel::Constant { tau: 0.3 },
        seed,
        ..Default::default()
    }
}

fn test_validity() -> Outcome {
    let reps = 2000;
    let bound = 0.15 + 3.0 * (0.15f64 * 0.85 / reps as f64).sqrt();
    let mut parts = Vec::new();
    for (label, mechanism) in [("complete", MechanismSpec::complete()), ("block(sex)", MechanismSpec::block(["sex"]))] {
        let study = StudyConfig {
            dgp: validity_dgp(11),
            mechanism,
            bandwidth: 1000.0,
            reps,
            balance: Some(BalanceOptions::default()),
            seed: 12,
            ..Default::default()
        };
        let report = coverage_study(&study).map_err(|e| e.to_string())?;
        let rate = report.balance_rejection_rate.ok_or("no balance tests ran")?;
        if report.balance_tested < reps * 99 / 100 || rate > bound {
            return Err(format!("{label}: rejection rate {rate:.4} over {} tests, bound {bound:.4}", report.balance_tested));
        }
        parts.push(format!("{label} {rate:.4}"));
    }
    Ok(format!("rejection rates at alpha = 0.15: {} (bound {bound:.4}, {reps} reps)", parts.join(", ")))
}

fn deterministic_runner(cases: u32) -> TestRunner {
    TestRunner::new_with_rng(
        Config { cases, failure_persistence: None, ..Config::default() },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    )
}

fn random_values(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = stream(seed, 7);
    (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect()
}

fn estimator_identities() -> Outcome {
    let options = EstimationOptions::default();
    let mut runner = deterministic_runner(1000);
    let result = runner.run(&(4usize..40, 2usize..5, proptest::num::u64::ANY), |(n, j, seed)| {
        // Sharp design: point and variance reduce to the outcome ITT.
        let z = common::random_assignment(n, 2, seed);
        let (data, window) = common::whole_window(vec![0.0; n], vec![], z.clone());
        let sharp = data.clone().with_outcome(random_values(n, seed)).unwrap().with_receipt(z.clone()).unwrap();
        let est = estimate_complete(&window, &sharp, &options).unwrap();
        if est.point != est.itt.itt_y || est.variance != est.itt.var_itt_y {
            return Err(TestCaseError::fail(format!("sharp reduction failed: {est:?}")));
        }

        // A single block reproduces the complete estimator bit for bit.
        let mut rng = stream(seed, 9);
        let w: Vec<u8> = z.iter().map(|&zi| zi * u8::from(rng.gen::<f64>() < 0.8)).collect();
        let fuzzy = data.with_outcome(random_values(n, seed ^ 1)).unwrap().with_receipt(w).unwrap();
        let complete = estimate_complete(&window, &fuzzy, &options);
        let single = block_complier_ate(&window, &Blocking::single(n), &fuzzy, &options).map(|b| b.pooled);
        match (&complete, &single) {
            (Ok(c), Ok(b)) if c.point == b.point && c.variance == b.variance && c.ci == b.ci => {}
            (Err(_), Err(_)) => {}
            _ => return Err(TestCaseError::fail(format!("J=1 mismatch: {complete:?} vs {single:?}"))),
        }

        // Pooled estimate is the size-weighted average of block estimates.
        let sizes: Vec<usize> = (0..j).map(|b| 4 + (derive_seed(seed, 3, b as u64) % 7) as usize).collect();
        let total: usize = sizes.iter().sum();
        let mut labels = Vec::new();
        let mut zb = Vec::new();
        for (b, &size) in sizes.iter().enumerate() {
            labels.extend(std::iter::repeat(format!("b{b}")).take(size));
            zb.extend(common::random_assignment(size, 2, derive_seed(seed, 4, b as u64)));
        }
        let g = Covariate::categorical("g", &labels);
        let (blocked, bwin) = common::whole_window(vec![0.0; total], vec![g], zb.clone());
        let blocked = blocked.with_outcome(random_values(total, seed ^ 2)).unwrap().with_receipt(zb).unwrap();
        let blocking = build_blocks(&bwin, &blocked, &["g".to_string()]).unwrap();
        let est = block_complier_ate(&bwin, &blocking, &blocked, &options).unwrap();
        let size_sum: f64 = est.per_block.iter().map(|c| c.size as f64).sum();
        let point: f64 = est.per_block.iter().map(|c| c.size as f64 * c.point).sum::<f64>() / size_sum;
        let variance: f64 =
            est.per_block.iter().map(|c| (c.size as f64).powi(2) * c.variance).sum::<f64>() / size_sum.powi(2);
        if (point - est.pooled.point).abs() > 1e-12 || (variance - est.pooled.variance).abs() > 1e-12 {
            return Err(TestCaseError::fail(format!("pooling: {point} vs {}, {variance} vs {}", est.pooled.point, est.pooled.variance)));
        }
        Ok(())
    });
    result.map(|_| "1000 cases: sharp reduction exact, J=1 bit-equal, pooling within 1e-12".to_string()).map_err(|e| e.to_string())
}

fn coverage_dgp(compliance: f64, seed: u64) -> DgpConfig {
    DgpConfig {
        n: 1000,
        covariates: vec![CovariateLaw::Numeric {
            name: "ability".into(),
            mean: 0.0,
            sd: 1.0,
            slope_on_s: 0.0002,
            outcome_coef: 0.8,
        }],
        intercept: 1.0,
        slope_on_s: 0.0003,
        effect: EffectModel::Constant { tau: 0.4 },
        compliance,
        seed,
        ..Default::default()
    }
}

fn ci_coverage() -> Outcome {
    let reps = 2000;
    let bound = 0.95 - 3.0 * (0.05f64 * 0.95 / reps as f64).sqrt();
    let mut parts = Vec::new();
    for (label, compliance, h) in [("sharp", 1.0, 500.0), ("fuzzy 0.7", 0.7, 1000.0)] {
        let study = StudyConfig { dgp: coverage_dgp(compliance, 21), bandwidth: h, reps, seed: 22, ..Default::default() };
        let report = coverage_study(&study).map_err(|e| e.to_string())?;
        if report.completed < reps * 99 / 100 || report.coverage < bound {
            return Err(format!("{label}: coverage {:.4} over {} reps, bound {bound:.4}", report.coverage, report.completed));
        }
        parts.push(format!("{label} {:.4}", report.coverage));
    }
    Ok(format!("coverage {} (bound {bound:.4}, {reps} reps)", parts.join(", ")))
}

fn precision_dgp(seed: u64) -> DgpConfig {
    DgpConfig {
        n: 1000,
        covariates: vec![CovariateLaw::Categorical {
            name: "school".into(),
            levels: vec!["A".into(), "B".into(), "C".into(), "D".into()],
            probs: vec![0.25; 4],
            outcome_effects: vec![0.0, 2.0, 4.0, 6.0],
        }],
        effect: EffectModel::Constant { tau: 0.5 },
        seed,
        ..Default::default()
    }
}

fn precision_ordering() -> Outcome {
    let oracle = generate_dataset(&precision_dgp(31)).map_err(|e| e.to_string())?;
    let school = oracle.dataset.covariate("school").unwrap();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let total_mean = mean(&oracle.y0);
    let total_var = oracle.y0.iter().map(|y| (y - total_mean).powi(2)).sum::<f64>();
    let mut between = 0.0;
    for level in ["A", "B", "C", "D"] {
        let ys: Vec<f64> = (0..oracle.y0.len()).filter(|&i| school.level_of(i) == Some(level)).map(|i| oracle.y0[i]).collect();
        between += ys.len() as f64 * (mean(&ys) - total_mean).powi(2);
    }
    let share = between / total_var;
    let study = StudyConfig {
        dgp: precision_dgp(32),
        mechanism: MechanismSpec::block(["school"]),
        bandwidth: 500.0,
        reps: 1000,
        seed: 33,
        ..Default::default()
    };
    let report = coverage_study(&study).map_err(|e| e.to_string())?;
    ensure(
        share >= 0.5 && report.mean_ci_width < report.complete_mean_ci_width && report.completed >= 990,
        format!(
            "blocking covariate explains {:.0}% of Y(0) variance; mean width block {:.4} < complete {:.4}",
            100.0 * share,
            report.mean_ci_width,
            report.complete_mean_ci_width
        ),
    )
}

fn decomposition_identity() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut done = 0;
    let mut attempt = 0u64;
    while done < 100 {
        attempt += 1;
        let mut rng = stream(0xDEC0, attempt);
        let dgp = DgpConfig {
            n: rng.gen_range(200..1000),
            compliance: rng.gen_range(0.5..=1.0),
            noise_sd: rng.gen_range(0.1..3.0),
            effect: EffectModel::Linear { intercept: rng.gen_range(-1.0..1.0), slope: rng.gen_range(-1e-3..1e-3) },
            seed: attempt,
            ..Default::default()
        };
        let h1 = rng.gen_range(50.0..1000.0);
        let h2 = h1 + rng.gen_range(50.0..1000.0);
        let oracle = generate_dataset(&dgp).map_err(|e| e.to_string())?;
        for population in [Population::All, Population::Compliers] {
            let d = match true_ring_decomposition(&oracle, 0.0, h1, h2, population) {
                Ok(d) => d,
                Err(_) => continue,
            };
            if d.n_h1 + d.n_ring != d.n_h2 {
                return Err(format!("counts do not add up for ({h1}, {h2})"));
            }
            worst = worst.max(d.discrepancy.abs());
        }
        done += 1;
    }
    ensure(worst <= 1e-12, format!("100 (h1, h2, DGP) triples, max reconstruction error {worst:.2e}"))
}

fn window_selection() -> Outcome {
    let grid: Vec<f64> = (2..=9).map(f64::from).collect();
    let opts = BalanceOptions {
        statistic: TestStatistic::AbsMeanDifference,
        method: PValueMethod::Exact,
        ..Default::default()
    };
    let mut nontrivial = 0;
    let designs = 12;
    for seed in 0..designs {
        let dgp = DgpConfig {
            n: 18,
            half_width: 9.0,
            covariates: vec![CovariateLaw::Numeric { name: "x".into(), mean: 0.0, sd: 1.0, slope_on_s: 0.35, outcome_coef: 0.0 }],
            seed,
            ..Default::default()
        };
        let data = generate_dataset(&dgp).map_err(|e| e.to_string())?.dataset;
        let selection = select_window(&data, &MechanismSpec::complete(), 0.0, &grid, &opts).map_err(|e| e.to_string())?;
        let mut expected = None;
        for (&h, row) in grid.iter().zip(&selection.rows) {
            let window = window_units(&data, 0.0, h).unwrap();
            let p = if window.n_treated < 2 || window.n_control < 2 {
                None
            } else {
                let mech = Mechanism::complete(window.len(), window.n_treated).unwrap();
                let ps = exact_p_oracle(&window, &data, &mech, TestStatistic::AbsMeanDifference).unwrap();
                Some(ps.into_iter().fold(f64::INFINITY, f64::min))
            };
            match (p, row.p_min) {
                (None, None) => {}
                (Some(a), Some(b)) if (a - b).abs() <= 1e-12 => {}
                _ => return Err(format!("design {seed}, h = {h}: oracle p {p:?} vs scan p {:?}", row.p_min)),
            }
            if p.is_some_and(|p| p >= 0.15) {
                expected = Some(h);
            }
        }
        if selection.selected != expected {
            return Err(format!("design {seed}: selected {:?}, exhaustive search gives {expected:?}", selection.selected));
        }
        if expected.is_some_and(|h| h < grid[grid.len() - 1]) {
            nontrivial += 1;
        }
    }
    ensure(
        nontrivial > 0,
        format!("{designs} designs agree with exhaustive exact p-values; {nontrivial} select an interior bandwidth"),
    )
}

fn loglik(x: &[f64], z: &[f64], b0: f64, b1: f64) -> f64 {
    x.iter()
        .zip(z)
        .map(|(&xi, &zi)| {
            let eta = b0 + b1 * xi;
            zi * eta - (1.0 + eta.exp()).ln()
        })
        .sum()
}

/// Maximizes the log-likelihood by repeatedly refining a 2-D grid over
/// (intercept at the mean of x, slope), then maps back to the raw intercept.
fn grid_mle(x: &[f64], z: &[f64]) -> (f64, f64) {
    let xbar = x.iter().sum::<f64>() / x.len() as f64;
    let centered: Vec<f64> = x.iter().map(|v| v - xbar).collect();
    let x = centered.as_slice();
    let (mut c0, mut c1, mut half) = (0.0, 0.0, 20.0);
    while half > 1e-9 {
        let step = half / 40.0;
        let mut best = (f64::NEG_INFINITY, c0, c1);
        for i in -40..=40 {
            for j in -40..=40 {
                let (b0, b1) = (c0 + i as f64 * step, c1 + j as f64 * step);
                let ll = loglik(x, z, b0, b1);
                if ll > best.0 {
                    best = (ll, b0, b1);
                }
            }
        }
        (c0, c1) = (best.1, best.2);
        half = 2.0 * step;
    }
    (c0 - c1 * xbar, c1)
}

fn propensity_fit() -> Outcome {
    let fixtures: [([f64; 6], [u8; 6]); 5] = [
        ([1.0, 2.0, 3.0, 4.0, 5.0, 6.0], [0, 0, 1, 0, 1, 1]),
        ([0.5, 1.7, 2.2, 3.1, 4.8, 5.0], [1, 0, 0, 1, 0, 1]),
        ([-2.0, -1.0, 0.0, 0.5, 1.0, 3.0], [0, 1, 0, 1, 1, 0]),
        ([10.0, 12.0, 13.0, 15.0, 16.0, 20.0], [1, 1, 0, 1, 0, 0]),
        ([0.0, 0.1, 0.2, 0.3, 0.4, 0.5], [0, 1, 1, 0, 0, 1]),
    ];
    let mut worst: f64 = 0.0;
    for (x, z) in &fixtures {
        let (data, window) = common::whole_window(vec![0.0; 6], vec![Covariate::numeric("x", x.to_vec())], z.to_vec());
        let model = fit_propensity(&window, &data, &["x".to_string()]).map_err(|e| e.to_string())?;
        let zf: Vec<f64> = z.iter().map(|&v| f64::from(v)).collect();
        let (b0, b1) = grid_mle(x, &zf);
        worst = worst.max((model.coefficients[0] - b0).abs()).max((model.coefficients[1] - b1).abs());
    }
    if worst > 1e-4 {
        return Err(format!("max coefficient gap {worst:.2e}"));
    }
    let x = Covariate::numeric("x", vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    let (data, window) = common::whole_window(vec![0.0; 6], vec![x], vec![0, 0, 0, 1, 1, 1]);
    match fit_propensity(&window, &data, &["x".to_string()]) {
        Err(Error::Separation(_)) => Ok(format!("5 fixtures, max gap to grid optimum {worst:.1e}; separated fixture rejected")),
        other => Err(format!("separated fixture gave {other:?}")),
    }
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn cli_reproducibility() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut dgp = validity_dgp(41);
    dgp.n = 300;
    let oracle = generate_dataset(&dgp).map_err(|e| e.to_string())?;
    let input = tmp.path().join("data.csv");
    common::write_csv(&oracle, &input, true);

    let schema = Schema::new("s")
        .outcome("y")
        .receipt("w")
        .covariate(CovariateSpec::numeric("age"))
        .covariate(CovariateSpec::numeric("income"))
        .covariate(CovariateSpec::categorical("sex"));
    let out = tmp.path().join("out");
    let config = RunConfig {
        input: Some(input),
        schema: Some(schema),
        direction: Direction::TreatedIfLe,
        mechanisms: vec![MechanismSpec::complete(), MechanismSpec::block(["sex"])],
        grid: vec![500.0, 1000.0, 1500.0],
        bandwidth: Some(1000.0),
        draws: 500,
        seed: 5,
        simulation: Some(StudyConfig { dgp: validity_dgp(42), reps: 100, bandwidth: 1000.0, ..Default::default() }),
        out: out.clone(),
        ..Default::default()
    };
    let config_path = tmp.path().join("config.json");
    std::fs::write(&config_path, config.to_json()).unwrap();

    let commands: [&[&str]; 4] = [
        &["windows", "--mechanism", "complete"],
        &["estimate"],
        &["sensitivity"],
        &["simulate"],
    ];
    let mut compared = 0;
    for args in commands {
        let mut runs = Vec::new();
        for _ in 0..2 {
            if out.exists() {
                std::fs::remove_dir_all(&out).unwrap();
            }
            let status = Command::new(env!("CARGO_BIN_EXE_localrd"))
                .args(args)
                .arg("--config")
                .arg(&config_path)
                .output()
                .map_err(|e| e.to_string())?;
            if !status.status.success() {
                return Err(format!("{args:?} failed: {}", String::from_utf8_lossy(&status.stderr)));
            }
            runs.push(snapshot(&out));
        }
        if runs[0] != runs[1] || runs[0].is_empty() {
            return Err(format!("{args:?}: outputs differ between runs"));
        }
        compared += runs[0].len();
    }
    Ok(format!("windows, estimate, sensitivity and simulate reruns byte-identical ({compared} files)"))
}
