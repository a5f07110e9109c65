//! Fit assignment propensities by logistic regression inside a window.

use localrd::assignment::{fit_propensity, MechanismSpec};
use localrd::data::window_units;
use localrd::simulation::{generate_dataset, CovariateLaw, DgpConfig};

fn main() -> localrd::Result<()> {
    let dgp = DgpConfig {
        n: 600,
        covariates: vec![
            CovariateLaw::Numeric { name: "income".into(), mean: 10.0, sd: 2.0, slope_on_s: -0.001, outcome_coef: 0.0 },
            CovariateLaw::Categorical {
                name: "sex".into(),
                levels: vec!["F".into(), "M".into()],
                probs: vec![0.5, 0.5],
                outcome_effects: vec![],
            },
        ],
        seed: 1,
        ..Default::default()
    };
    let data = generate_dataset(&dgp)?.dataset;
    let window = window_units(&data, 0.0, 800.0)?;
    let model = fit_propensity(&window, &data, &["income".to_string(), "sex".to_string()])?;
    for (name, b) in model.names.iter().zip(&model.coefficients) {
        println!("{name:>12}: {b:+.4}");
    }
    println!("converged in {} iterations (|score| = {:.1e})", model.iterations, model.gradient_norm);

    // The same fit drives a Bernoulli mechanism spec.
    let spec = MechanismSpec::bernoulli_fitted(["income", "sex"], false);
    let mechanism = spec.resolve(&data, &window)?;
    println!("{} over {} units", spec.label(), mechanism.n_units());
    Ok(())
}
