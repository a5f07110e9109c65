//! Logistic propensity scores fitted by iteratively reweighted least squares.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::data::{encode_covariates, Dataset, Window};
use crate::error::{Error, Result};

pub const MAX_ITERATIONS: usize = 100;
pub const SCORE_TOLERANCE: f64 = 1e-8;
/// Fitted probabilities closer than this to 0 or 1 are treated as separation.
const BOUNDARY: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropensityModel {
    /// Column names, starting with `(intercept)`.
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub iterations: usize,
    /// Max absolute score component at the returned coefficients.
    pub gradient_norm: f64,
    /// Fitted probabilities for the window units, in window order.
    pub fitted: Vec<f64>,
}

/// Fits `P(z = 1 | x)` on the window units by maximum likelihood.
pub fn fit_propensity(window: &Window, dataset: &Dataset, covariate_names: &[String]) -> Result<PropensityModel> {
    if window.n_treated == 0 || window.n_control == 0 {
        return Err(Error::Separation("window needs both treated and control units".into()));
    }
    let encoded = encode_covariates(dataset, &window.members, Some(covariate_names), true)?;
    let z: Vec<f64> = dataset.assignment_in(&window.members)?.into_iter().map(f64::from).collect();
    let mut names = vec!["(intercept)".to_string()];
    names.extend(encoded.names.iter().cloned());
    let n = window.len();
    let p = names.len();
    let x = DMatrix::from_fn(n, p, |i, j| if j == 0 { 1.0 } else { encoded.columns[j - 1][i] });
    check_rank(&x, &names)?;
    irls(&x, &z, names)
}

/// Fits a logistic regression of `z` on the columns of `x` (which must
/// already contain an intercept column if one is wanted).
pub fn irls(x: &DMatrix<f64>, z: &[f64], names: Vec<String>) -> Result<PropensityModel> {
    let (n, p) = x.shape();
    let zv = DVector::from_column_slice(z);
    let mut beta = DVector::<f64>::zeros(p);
    let mut ll = log_likelihood(x, &zv, &beta);
    for iteration in 0..=MAX_ITERATIONS {
        let probs = (x * &beta).map(sigmoid);
        let score = x.transpose() * (&zv - &probs);
        let grad_norm = score.amax();
        if grad_norm <= SCORE_TOLERANCE {
            let fitted: Vec<f64> = probs.iter().copied().collect();
            if fitted.iter().any(|&e| e < BOUNDARY || e > 1.0 - BOUNDARY) {
                return Err(Error::Separation(
                    "fitted probabilities are numerically 0 or 1 (complete or quasi-complete separation)".into(),
                ));
            }
            return Ok(PropensityModel {
                names,
                coefficients: beta.iter().copied().collect(),
                iterations: iteration,
                gradient_norm: grad_norm,
                fitted,
            });
        }
        if iteration == MAX_ITERATIONS {
            break;
        }
        let weights = probs.map(|e| e * (1.0 - e));
        let mut xw = x.clone();
        for i in 0..n {
            xw.row_mut(i).scale_mut(weights[i]);
        }
        let hessian = x.transpose() * xw;
        let step = hessian
            .cholesky()
            .ok_or_else(|| Error::Separation("information matrix became singular (divergent coefficients)".into()))?
            .solve(&score);
        // Newton step with halving on likelihood decrease.
        let mut scale = 1.0;
        let mut candidate = &beta + &step;
        let mut cand_ll = log_likelihood(x, &zv, &candidate);
        while cand_ll < ll && scale > 1e-6 {
            scale *= 0.5;
            candidate = &beta + &step * scale;
            cand_ll = log_likelihood(x, &zv, &candidate);
        }
        beta = candidate;
        ll = cand_ll;
        if beta.iter().any(|b| !b.is_finite()) {
            break;
        }
    }
    Err(Error::Separation(format!(
        "no convergence within {MAX_ITERATIONS} iterations (divergent coefficients suggest separation)"
    )))
}

pub fn log_likelihood(x: &DMatrix<f64>, z: &DVector<f64>, beta: &DVector<f64>) -> f64 {
    let eta = x * beta;
    eta.iter()
        .zip(z.iter())
        .map(|(&e, &zi)| zi * e - softplus(e))
        .sum()
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^t) without overflow.
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// Finds columns that add nothing to the span of the columns before them.
fn check_rank(x: &DMatrix<f64>, names: &[String]) -> Result<()> {
    let mut kept: Vec<usize> = Vec::new();
    let mut collinear = Vec::new();
    for j in 0..x.ncols() {
        let mut cols = kept.clone();
        cols.push(j);
        let sub = x.select_columns(&cols);
        if numeric_rank(&sub) == cols.len() {
            kept.push(j);
        } else {
            collinear.push(names[j].clone());
        }
    }
    if collinear.is_empty() {
        Ok(())
    } else {
        Err(Error::RankDeficient(collinear))
    }
}

fn numeric_rank(m: &DMatrix<f64>) -> usize {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    let tol = max * 1e-10 * (m.nrows().max(m.ncols()) as f64);
    sv.iter().filter(|&&s| s > tol).count()
}
