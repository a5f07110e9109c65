//! Bandwidth by mechanism grid; implausible cells are flagged, not dropped.

use localrd::assignment::MechanismSpec;
use localrd::balance::BalanceOptions;
use localrd::estimation::EstimationOptions;
use localrd::sensitivity::sensitivity_grid;
use localrd::simulation::{generate_dataset, CovariateLaw, DgpConfig, EffectModel};

fn main() -> localrd::Result<()> {
    let dgp = DgpConfig {
        n: 1500,
        covariates: vec![
            CovariateLaw::Numeric { name: "income".into(), mean: 10.0, sd: 1.0, slope_on_s: 0.0002, outcome_coef: 0.5 },
            CovariateLaw::Categorical {
                name: "sex".into(),
                levels: vec!["F".into(), "M".into()],
                probs: vec![0.55, 0.45],
                outcome_effects: vec![0.0, 0.4],
            },
        ],
        compliance: 0.8,
        effect: EffectModel::Constant { tau: 0.5 },
        seed: 9,
        ..Default::default()
    };
    let data = generate_dataset(&dgp)?.dataset;
    let mechanisms = [MechanismSpec::complete(), MechanismSpec::block(["sex"])];
    let bandwidths = [250.0, 500.0, 1000.0, 1500.0];
    let balance = BalanceOptions { draws: 500, seed: 3, ..Default::default() };
    let rows = sensitivity_grid(&data, 0.0, &mechanisms, &bandwidths, &balance, &EstimationOptions::default())?;

    for r in &rows {
        let mark = if r.flagged { "  *implausible*" } else { "" };
        let (point, ci) = (r.point.unwrap_or(f64::NAN), r.ci.unwrap_or((f64::NAN, f64::NAN)));
        println!(
            "{:<12} h = {:>5}  p_min = {:.3}  {:+.3} ({:+.3}, {:+.3}){mark}",
            r.mechanism,
            r.bandwidth,
            r.p_min.unwrap_or(f64::NAN),
            point,
            ci.0,
            ci.1
        );
    }
    Ok(())
}
