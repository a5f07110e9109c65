//! Block-randomization estimate with per-block components.

use localrd::assignment::build_blocks;
use localrd::data::window_units;
use localrd::estimation::{block_complier_ate, estimate_complete, EstimationOptions};
use localrd::simulation::{generate_dataset, CovariateLaw, DgpConfig, EffectModel};

fn main() -> localrd::Result<()> {
    let dgp = DgpConfig {
        n: 2000,
        covariates: vec![CovariateLaw::Categorical {
            name: "school".into(),
            levels: vec!["classical".into(), "scientific".into(), "technical".into()],
            probs: vec![0.3, 0.4, 0.3],
            outcome_effects: vec![0.0, 1.5, -1.0],
        }],
        effect: EffectModel::Constant { tau: 0.3 },
        seed: 6,
        ..Default::default()
    };
    let data = generate_dataset(&dgp)?.dataset;
    let window = window_units(&data, 0.0, 600.0)?;
    let blocking = build_blocks(&window, &data, &["school".to_string()])?;
    let options = EstimationOptions::default();
    let block = block_complier_ate(&window, &blocking, &data, &options)?;

    for c in &block.per_block {
        println!("{:<20} n = {:>3} ({:>3}/{:>3})  {:+.4} (var {:.5})", c.label, c.size, c.n_t, c.n_c, c.point, c.variance);
    }
    let pooled = &block.pooled;
    let complete = estimate_complete(&window, &data, &options)?;
    println!("pooled   {:+.4}  CI ({:+.4}, {:+.4})", pooled.point, pooled.ci.0, pooled.ci.1);
    println!("complete {:+.4}  CI ({:+.4}, {:+.4})", complete.point, complete.ci.0, complete.ci.1);
    Ok(())
}
