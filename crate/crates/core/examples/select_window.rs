//! Scan a bandwidth grid with balance randomization tests and pick the window.

use localrd::assignment::MechanismSpec;
use localrd::balance::{select_window, BalanceOptions};
use localrd::cli::parse_grid;
use localrd::simulation::{generate_dataset, CovariateLaw, DgpConfig};

fn main() -> localrd::Result<()> {
    // Covariates drift with the score, so wide windows lose balance.
    let dgp = DgpConfig {
        n: 1500,
        covariates: vec![
            CovariateLaw::Numeric { name: "income".into(), mean: 10.0, sd: 1.0, slope_on_s: 0.0008, outcome_coef: 0.0 },
            CovariateLaw::Numeric { name: "age".into(), mean: 19.0, sd: 1.0, slope_on_s: 0.0, outcome_coef: 0.0 },
        ],
        seed: 4,
        ..Default::default()
    };
    let data = generate_dataset(&dgp)?.dataset;
    let grid = parse_grid("100:2000:100")?;
    let opts = BalanceOptions { seed: 11, ..Default::default() };
    let selection = select_window(&data, &MechanismSpec::complete(), 0.0, &grid, &opts)?;

    println!("{:>6} {:>5} {:>8}", "h", "n", "p_min");
    for row in &selection.rows {
        let p = row.p_min.map_or("-".to_string(), |p| format!("{p:.3}"));
        println!("{:>6} {:>5} {:>8}", row.bandwidth, row.n, p);
    }
    println!("selected: {:?}", selection.selected);
    Ok(())
}
