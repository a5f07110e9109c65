//! Draw from, score and enumerate the three assignment mechanisms.

use localrd::assignment::{Blocking, Mechanism};

fn show(name: &str, m: &Mechanism) -> localrd::Result<()> {
    let z = m.draw(42, 0)?;
    println!("{name:<10} support {:>4}  draw {z:?}  P(draw) = {:.5}", m.support_size(), m.probability(&z)?);
    Ok(())
}

fn main() -> localrd::Result<()> {
    let complete = Mechanism::complete(6, 3)?;
    let labels = ["F", "F", "F", "M", "M", "M"].map(String::from).to_vec();
    let block = Mechanism::block(Blocking::from_labels(labels), vec![2, 1])?;
    let bernoulli = Mechanism::bernoulli(vec![0.3, 0.5, 0.5, 0.6, 0.7, 0.4], None)?;
    show("complete", &complete)?;
    show("block", &block)?;
    show("bernoulli", &bernoulli)?;

    // Draws are a pure function of (seed, index).
    assert_eq!(complete.draw(42, 7)?, complete.draw(42, 7)?);

    let total: f64 = bernoulli.enumerate()?.iter().map(|(_, p)| p).sum();
    println!("bernoulli mass over all {} assignments: {total}", bernoulli.enumerate()?.len());
    Ok(())
}
