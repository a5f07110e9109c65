//! Drive the batch commands from a config, as the `localrd` binary does.

use localrd::assignment::MechanismSpec;
use localrd::cli::{parse_grid, run, Command, RunConfig};
use localrd::data::{CovariateSpec, Schema};

fn main() -> localrd::Result<()> {
    let dir = std::env::temp_dir().join("localrd-batch-example");
    std::fs::create_dir_all(&dir)?;
    let input = dir.join("data.csv");
    let mut csv = String::from("score,y,w,sex\n");
    for i in 0..200 {
        let s = (i as f64 * 37.0) % 2000.0 - 1000.0;
        let z = u8::from(s <= 0.0);
        let y = 1.0 + 0.4 * f64::from(z) + (i as f64 * 0.7).sin();
        csv.push_str(&format!("{s},{y},{z},{}\n", if i % 3 == 0 { "M" } else { "F" }));
    }
    std::fs::write(&input, csv)?;

    let config = RunConfig {
        input: Some(input),
        schema: Some(Schema::new("score").outcome("y").receipt("w").covariate(CovariateSpec::categorical("sex"))),
        mechanisms: vec![MechanismSpec::complete(), MechanismSpec::block(["sex"])],
        grid: parse_grid("200:1000:200")?,
        bandwidth: Some(600.0),
        draws: 500,
        seed: 7,
        out: dir.join("out"),
        ..Default::default()
    };
    std::fs::write(dir.join("config.json"), config.to_json())?;

    for command in [Command::Estimate, Command::Sensitivity] {
        let summary = run(command, &config)?;
        println!("{}:\n{}", command.name(), summary.message);
        for f in summary.files {
            println!("  wrote {}", f.display());
        }
    }
    println!("rerun with: localrd sensitivity --config {}", dir.join("config.json").display());
    Ok(())
}
