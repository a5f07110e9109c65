//! Complier effect with a Neyman interval in a fuzzy design.

use localrd::data::window_units;
use localrd::estimation::{estimate_complete, EstimationOptions};
use localrd::simulation::{generate_dataset, true_local_ate, DgpConfig, EffectModel, Population};

fn main() -> localrd::Result<()> {
    let dgp = DgpConfig {
        n: 2000,
        compliance: 0.6,
        effect: EffectModel::Constant { tau: 0.8 },
        seed: 2,
        ..Default::default()
    };
    let oracle = generate_dataset(&dgp)?;
    let window = window_units(&oracle.dataset, 0.0, 500.0)?;
    let est = estimate_complete(&window, &oracle.dataset, &EstimationOptions::default())?;

    println!("ITT_Y = {:.4}, ITT_W = {:.4}", est.itt.itt_y, est.itt.itt_w);
    println!("complier effect {:.4}  95% CI ({:.4}, {:.4})", est.point, est.ci.0, est.ci.1);
    println!("truth among compliers in the window: {:.4}", true_local_ate(&oracle, 0.0, 500.0, Population::Compliers)?);
    for w in &est.warnings {
        println!("warning: {w}");
    }
    Ok(())
}
