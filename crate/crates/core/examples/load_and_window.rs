//! Load a delimited file, derive assignment from the cutoff and inspect windows.
//!
//! ```text
//! cargo run --example load_and_window
//! ```

use localrd::data::{assign_treatment, load_dataset, window_units, CovariateSpec, Direction, Schema};

const CSV: &str = "\
score,grant,applied,sex,income
-420,3.1,1,F,12.5
-180,2.4,1,M,9.8
-95,2.9,0,F,14.1
-30,3.5,1,M,11.0
12,2.2,0,F,10.4
60,1.9,0,M,13.3
150,2.6,0,F,8.7
390,2.0,0,M,12.9
";

fn main() -> localrd::Result<()> {
    let schema = Schema::new("score")
        .outcome("grant")
        .receipt("applied")
        .covariate(CovariateSpec::categorical("sex"))
        .covariate(CovariateSpec::numeric("income"));
    let data = load_dataset(CSV.as_bytes(), &schema, b',')?;
    // Scores at or below the cutoff are eligible.
    let data = assign_treatment(&data, 0.0, Direction::TreatedIfLe)?;

    for h in [50.0, 100.0, 200.0, 500.0] {
        let w = window_units(&data, 0.0, h)?;
        println!("h = {h:>5}: {} units ({} treated, {} control)", w.len(), w.n_treated, w.n_control);
    }
    Ok(())
}
