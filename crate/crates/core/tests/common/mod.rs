#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::Path;

use localrd::data::{Covariate, CovariateValues, Dataset, Window};
use localrd::rng::stream;
use localrd::simulation::OracleDataset;
use rand::Rng;

/// Dataset whose every unit is in the window, with the given assignment.
pub fn whole_window(running: Vec<f64>, covariates: Vec<Covariate>, z: Vec<u8>) -> (Dataset, Window) {
    let n = running.len();
    let data = Dataset::new(running, covariates).unwrap().with_assignment(z).unwrap();
    let window = Window::from_members(&data, 0.0, f64::MAX, None, (0..n).collect()).unwrap();
    (data, window)
}

/// Random assignment with at least `min_arm` units in each arm.
pub fn random_assignment(n: usize, min_arm: usize, seed: u64) -> Vec<u8> {
    let mut rng = stream(seed, 0);
    loop {
        let z: Vec<u8> = (0..n).map(|_| u8::from(rng.gen::<bool>())).collect();
        let nt = z.iter().filter(|&&v| v == 1).count();
        if nt >= min_arm && n - nt >= min_arm {
            return z;
        }
    }
}

/// Writes the observed columns of `oracle` as CSV: s, y, w, then covariates.
pub fn write_csv(oracle: &OracleDataset, path: &Path, with_outcome: bool) {
    let d = &oracle.dataset;
    let mut out = String::from("s");
    if with_outcome {
        out.push_str(",y,w");
    }
    for c in d.covariates() {
        write!(out, ",{}", c.name).unwrap();
    }
    out.push('\n');
    let (y, w) = (d.outcome().unwrap(), d.receipt().unwrap());
    for i in 0..d.len() {
        write!(out, "{}", d.running()[i]).unwrap();
        if with_outcome {
            write!(out, ",{},{}", y[i], w[i]).unwrap();
        }
        for c in d.covariates() {
            match &c.values {
                CovariateValues::Numeric(v) => write!(out, ",{}", v[i]).unwrap(),
                CovariateValues::Categorical { .. } => write!(out, ",{}", c.level_of(i).unwrap()).unwrap(),
            }
        }
        out.push('\n');
    }
    std::fs::write(path, out).unwrap();
}
