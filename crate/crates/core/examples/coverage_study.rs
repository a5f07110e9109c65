//! Interval coverage and balance-test size on simulated designs.

use localrd::assignment::MechanismSpec;
use localrd::balance::BalanceOptions;
use localrd::simulation::{coverage_study, CovariateLaw, DgpConfig, EffectModel, StudyConfig};

fn main() -> localrd::Result<()> {
    let dgp = DgpConfig {
        n: 1000,
        covariates: vec![
            CovariateLaw::Categorical {
                name: "region".into(),
                levels: vec!["north".into(), "centre".into(), "south".into()],
                probs: vec![0.4, 0.2, 0.4],
                outcome_effects: vec![0.0, 1.0, 3.0],
            },
            CovariateLaw::Numeric { name: "income".into(), mean: 10.0, sd: 2.0, slope_on_s: 0.0, outcome_coef: 0.2 },
        ],
        compliance: 0.7,
        effect: EffectModel::Constant { tau: 0.5 },
        seed: 5,
        ..Default::default()
    };
    let study = StudyConfig {
        dgp,
        mechanism: MechanismSpec::block(["region"]),
        bandwidth: 800.0,
        reps: 500,
        balance: Some(BalanceOptions { draws: 200, ..Default::default() }),
        seed: 1,
        ..Default::default()
    };
    let r = coverage_study(&study)?;
    println!("{} of {} replications completed", r.completed, r.reps);
    println!("block:    coverage {:.3}, mean width {:.4}", r.coverage, r.mean_ci_width);
    println!("complete: coverage {:.3}, mean width {:.4}", r.complete_coverage, r.complete_mean_ci_width);
    println!("balance test rejection rate: {:.3}", r.balance_rejection_rate.unwrap_or(f64::NAN));
    Ok(())
}
