//! Split an outer-window effect into the inner window and the ring around it.

use localrd::assignment::MechanismSpec;
use localrd::estimation::EstimationOptions;
use localrd::sensitivity::ring_decomposition;
use localrd::simulation::{generate_dataset, true_ring_decomposition, DgpConfig, EffectModel, Population};

fn main() -> localrd::Result<()> {
    // The effect only switches on away from the cutoff.
    let dgp = DgpConfig {
        n: 4000,
        effect: EffectModel::Piecewise { radius: 500.0, inside: 0.0, outside: 1.0 },
        seed: 12,
        ..Default::default()
    };
    let oracle = generate_dataset(&dgp)?;
    let est = ring_decomposition(&oracle.dataset, 0.0, 500.0, 1000.0, &MechanismSpec::complete(), &EstimationOptions::default())?;
    let truth = true_ring_decomposition(&oracle, 0.0, 500.0, 1000.0, Population::All)?;

    println!("{:<10} {:>9} {:>9}", "", "estimate", "truth");
    println!("{:<10} {:>9.4} {:>9.4}", "inner", est.tau_h1, truth.tau_h1);
    println!("{:<10} {:>9.4} {:>9.4}", "ring", est.tau_ring, truth.tau_ring);
    println!("{:<10} {:>9.4} {:>9.4}", "outer", est.tau_h2, truth.tau_h2);
    println!("reconstruction gap: estimate {:.2e}, truth {:.2e}", est.discrepancy, truth.discrepancy);
    Ok(())
}
