mod common;

use localrd::assignment::{binomial, Blocking, Mechanism};
use localrd::balance::{randomization_p_value, BalanceOptions, PValueMethod, TestStatistic};
use localrd::data::{load_dataset, window_units, Covariate, Schema};
use localrd::estimation::{
    confidence_interval, estimate_complete, itt_estimates, normal_quantile, var_complier_ate, EstimationOptions,
};
use localrd::simulation::{
    exact_p_oracle, generate_dataset, rerandomized_itt, true_local_ate, CovariateLaw, DgpConfig, EffectModel, Population,
};
use localrd::Error;
use statrs::distribution::{ContinuousCDF, Normal};

#[test]
fn normal_quantile_matches_statrs() {
    let reference = Normal::new(0.0, 1.0).unwrap();
    for k in 1..2000 {
        let p = k as f64 / 2000.0;
        let (ours, theirs) = (normal_quantile(p), reference.inverse_cdf(p));
        assert!((ours - theirs).abs() <= 1e-9 * theirs.abs().max(1.0), "p = {p}: {ours} vs {theirs}");
    }
    for p in [1e-10, 1e-6, 0.025, 0.975, 1.0 - 1e-6] {
        assert!((normal_quantile(p) - reference.inverse_cdf(p)).abs() < 1e-8);
    }
    let ci = confidence_interval(1.0, 4.0, 0.05).unwrap();
    assert!((ci.1 - 1.0 - 2.0 * 1.959963984540054).abs() < 1e-12);
}

#[test]
fn neyman_pieces_match_direct_formulas() {
    let y = vec![3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0];
    let z = vec![1, 1, 1, 1, 0, 0, 0, 0];
    let w = vec![1, 0, 1, 1, 0, 0, 0, 0];
    let (data, window) = common::whole_window(vec![0.0; 8], vec![], z);
    let data = data.with_outcome(y).unwrap().with_receipt(w).unwrap();
    let itt = itt_estimates(&window, &data).unwrap();
    // Treated: y = 3,1,4,1 (mean 2.25), w = 1,0,1,1 (mean 0.75); control: y = 5,9,2,6 (mean 5.5).
    let var_t = [3.0f64, 1.0, 4.0, 1.0].iter().map(|v| (v - 2.25).powi(2)).sum::<f64>() / 3.0;
    let var_c = [5.0f64, 9.0, 2.0, 6.0].iter().map(|v| (v - 5.5).powi(2)).sum::<f64>() / 3.0;
    let var_w = [1.0f64, 0.0, 1.0, 1.0].iter().map(|v| (v - 0.75).powi(2)).sum::<f64>() / 3.0;
    let cov_t = [(3.0, 1.0), (1.0, 0.0), (4.0, 1.0), (1.0, 1.0)]
        .iter()
        .map(|(a, b): &(f64, f64)| (a - 2.25) * (b - 0.75))
        .sum::<f64>()
        / 3.0;
    assert!((itt.itt_y - (2.25 - 5.5)).abs() < 1e-12);
    assert!((itt.itt_w - 0.75).abs() < 1e-12);
    assert!((itt.var_itt_y - (var_t / 4.0 + var_c / 4.0)).abs() < 1e-12);
    assert!((itt.var_itt_w - var_w / 4.0).abs() < 1e-12);
    assert!((itt.cov_itt - cov_t / 4.0).abs() < 1e-12);

    let tau = itt.itt_y / itt.itt_w;
    let delta = (itt.var_itt_y - 2.0 * tau * itt.cov_itt + tau * tau * itt.var_itt_w) / itt.itt_w.powi(2);
    let v = var_complier_ate(&itt).unwrap();
    assert!((v.variance - delta.max(0.0)).abs() < 1e-12);
    let est = estimate_complete(&window, &data, &EstimationOptions::default()).unwrap();
    assert!((est.point - tau).abs() < 1e-12);
}

#[test]
fn enumerated_supports_have_the_right_mass() {
    let complete = Mechanism::complete(7, 3).unwrap();
    let support = complete.enumerate().unwrap();
    assert_eq!(support.len(), 35);
    assert!(support.iter().all(|(_, p)| (p - 1.0 / 35.0).abs() < 1e-15));
    assert_eq!(binomial(7, 3), 35.0);

    let blocking = Blocking::from_labels(["a", "b", "a", "b", "a", "a", "b"].map(String::from).to_vec());
    assert_eq!(blocking.sizes(), vec![4, 3]);
    let block = Mechanism::block(blocking, vec![2, 1]).unwrap();
    let support = block.enumerate().unwrap();
    assert_eq!(support.len(), 6 * 3);
    assert!(support.iter().all(|(_, p)| (p - 1.0 / 18.0).abs() < 1e-15));

    let e = vec![0.2, 0.5, 0.9];
    let bern = Mechanism::bernoulli(e.clone(), None).unwrap();
    for (z, p) in bern.enumerate().unwrap() {
        let direct: f64 = z.iter().zip(&e).map(|(&zi, &ei)| if zi == 1 { ei } else { 1.0 - ei }).product();
        assert!((p - direct).abs() < 1e-15);
    }
}

#[test]
fn conditional_bernoulli_at_one_half_is_complete() {
    let x = Covariate::numeric("x", vec![0.3, 1.2, 2.8, 0.1, 4.4, 3.3]);
    let z = vec![1, 0, 1, 1, 0, 0];
    let (data, window) = common::whole_window(vec![0.0; 6], vec![x], z);
    let bern = Mechanism::bernoulli(vec![0.5; 6], Some(3)).unwrap();
    let complete = Mechanism::complete(6, 3).unwrap();
    for stat in [TestStatistic::AbsMeanDifference, TestStatistic::Mahalanobis] {
        let a = exact_p_oracle(&window, &data, &bern, stat).unwrap();
        let b = exact_p_oracle(&window, &data, &complete, stat).unwrap();
        assert!((a[0] - b[0]).abs() < 1e-12);
    }
}

#[test]
fn exhaustive_exact_mode_agrees_with_oracle() {
    let x = Covariate::numeric("x", vec![2.0, 7.5, 1.0, 3.5, 8.0, 6.0, 4.25]);
    let g = Covariate::categorical("g", &["u", "v", "u", "v", "u", "u", "v"]);
    let (data, window) = common::whole_window(vec![0.0; 7], vec![x, g], vec![0, 1, 0, 1, 1, 0, 0]);
    let mechanism = Mechanism::complete(7, 3).unwrap();
    for stat in [TestStatistic::AbsMeanDifference, TestStatistic::StandardizedMeanDifference, TestStatistic::Mahalanobis] {
        let oracle = exact_p_oracle(&window, &data, &mechanism, stat).unwrap();
        let opts = BalanceOptions { statistic: stat, method: PValueMethod::Exact, ..Default::default() };
        let ours = randomization_p_value(&window, &data, &mechanism, &opts).unwrap();
        assert_eq!(ours.m_draws, 35);
        for (a, b) in oracle.iter().zip(&ours.p_values) {
            assert!((a - b).abs() < 1e-12, "{stat:?}: {a} vs {b}");
        }
    }
}

#[test]
fn true_local_effects() {
    let constant = DgpConfig { n: 300, effect: EffectModel::Constant { tau: 0.7 }, seed: 3, ..Default::default() };
    let oracle = generate_dataset(&constant).unwrap();
    for h in [100.0, 500.0, 2000.0] {
        assert!((true_local_ate(&oracle, 0.0, h, Population::All).unwrap() - 0.7).abs() < 1e-12);
    }

    let ring = DgpConfig {
        n: 300,
        effect: EffectModel::Piecewise { radius: 800.0, inside: 0.0, outside: 2.0 },
        seed: 4,
        ..Default::default()
    };
    let oracle = generate_dataset(&ring).unwrap();
    assert_eq!(true_local_ate(&oracle, 0.0, 800.0, Population::All).unwrap(), 0.0);
    assert!(true_local_ate(&oracle, 0.0, 2000.0, Population::All).unwrap() > 0.5);

    let fuzzy = DgpConfig { n: 400, compliance: 0.5, effect: EffectModel::Constant { tau: 1.5 }, seed: 5, ..Default::default() };
    let oracle = generate_dataset(&fuzzy).unwrap();
    assert!((true_local_ate(&oracle, 0.0, 1000.0, Population::Compliers).unwrap() - 1.5).abs() < 1e-12);
    let all = true_local_ate(&oracle, 0.0, 1000.0, Population::All).unwrap();
    let w = window_units(&oracle.dataset, 0.0, 1000.0).unwrap();
    let share = w.members.iter().filter(|&&i| oracle.complier[i]).count() as f64 / w.len() as f64;
    assert!((all - 1.5 * share).abs() < 1e-12);
}

#[test]
fn outcome_itt_is_unbiased_under_rerandomization() {
    let dgp = DgpConfig {
        n: 400,
        covariates: vec![CovariateLaw::Numeric { name: "x".into(), mean: 0.0, sd: 1.0, slope_on_s: 0.0, outcome_coef: 1.0 }],
        effect: EffectModel::Linear { intercept: 0.5, slope: 0.0004 },
        seed: 9,
        ..Default::default()
    };
    let oracle = generate_dataset(&dgp).unwrap();
    let window = window_units(&oracle.dataset, 0.0, 1000.0).unwrap();
    let truth = true_local_ate(&oracle, 0.0, 1000.0, Population::All).unwrap();
    let mechanism = Mechanism::complete(window.len(), window.n_treated).unwrap();
    let itts = rerandomized_itt(&oracle, &window, &mechanism, 2000, 17).unwrap();
    let vals: Vec<f64> = itts.iter().map(|e| e.itt_y).collect();
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (vals.len() - 1) as f64).sqrt();
    assert!((mean - truth).abs() <= 4.0 * sd / (vals.len() as f64).sqrt(), "{mean} vs {truth}");
}

#[test]
fn observed_columns_follow_from_hidden_ones() {
    let dgp = DgpConfig { n: 200, compliance: 0.6, effect: EffectModel::Constant { tau: 1.0 }, seed: 1, ..Default::default() };
    let oracle = generate_dataset(&dgp).unwrap();
    let d = &oracle.dataset;
    let (z, y, w) = (d.assignment().unwrap(), d.outcome().unwrap(), d.receipt().unwrap());
    for i in 0..d.len() {
        let expected_y = if z[i] == 1 { oracle.y1[i] } else { oracle.y0[i] };
        assert_eq!(y[i], expected_y);
        assert_eq!(w[i], z[i] * oracle.w1[i]);
        assert_eq!(oracle.complier[i], oracle.w1[i] == 1);
    }
}

#[test]
fn loader_reports_row_and_column() {
    let schema = Schema::new("s").outcome("y").receipt("w");
    let text = "s,y,w\n1,2,0\n-1,3,1\n0.5,1,2\n";
    let err = load_dataset(text.as_bytes(), &schema, b',').unwrap_err();
    assert!(matches!(err, Error::Load(_)));
    assert!(err.to_string().contains("row 3"), "{err}");
    assert!(err.to_string().contains("`w`"), "{err}");

    let missing = load_dataset("s,y\n1,2\n".as_bytes(), &schema, b',').unwrap_err();
    assert!(matches!(missing, Error::MissingColumn(_)), "{missing}");
}
