//! Neymanian estimation of the local complier average treatment effect.
//!
//! Under complete randomization the estimate is the ratio of the
//! intention-to-treat effects on the outcome and on treatment receipt, with
//! a delta-method variance built from conservative Neyman component
//! variances. Under block randomization per-block estimates are pooled with
//! block-size weights. A sharp design is the special case w = z.

use serde::{Deserialize, Serialize};

use crate::assignment::{Blocking, Mechanism};
use crate::data::{Dataset, Window};
use crate::error::{Error, Result};

pub const DEFAULT_CI_ALPHA: f64 = 0.05;
pub const DEFAULT_WEAK_THRESHOLD: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimationOptions {
    /// Confidence level is 1 - alpha.
    pub alpha: f64,
    /// Minimum |itt_w| accepted as a usable first stage.
    pub weak_threshold: f64,
}

impl Default for EstimationOptions {
    fn default() -> Self {
        Self { alpha: DEFAULT_CI_ALPHA, weak_threshold: DEFAULT_WEAK_THRESHOLD }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IttEstimate {
    pub itt_y: f64,
    pub itt_w: f64,
    pub var_itt_y: f64,
    pub var_itt_w: f64,
    pub cov_itt: f64,
    pub n_t: usize,
    pub n_c: usize,
}

/// Intention-to-treat effects and their Neyman variances on a unit set.
pub fn itt_estimates(window: &Window, dataset: &Dataset) -> Result<IttEstimate> {
    let z = dataset.assignment()?;
    let y = dataset.outcome()?;
    let w = dataset.receipt()?;
    let (mut yt, mut wt, mut yc, mut wc) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for &i in &window.members {
        if z[i] == 1 {
            yt.push(y[i]);
            wt.push(f64::from(w[i]));
        } else {
            if w[i] == 1 {
                return Err(Error::NoncomplianceViolation { row: i + 1 });
            }
            yc.push(y[i]);
            wc.push(f64::from(w[i]));
        }
    }
    let (n_t, n_c) = (yt.len(), yc.len());
    if n_t < 2 || n_c < 2 {
        return Err(Error::Estimation(format!("need at least 2 units per arm, got n_t = {n_t}, n_c = {n_c}")));
    }
    let (myt, mwt, myc, mwc) = (mean(&yt), mean(&wt), mean(&yc), mean(&wc));
    let nt = n_t as f64;
    let nc = n_c as f64;
    let sq = |v: &[f64], m: f64| v.iter().map(|x| (x - m).powi(2)).sum::<f64>();
    let cross: f64 = yt.iter().zip(&wt).map(|(a, b)| (a - myt) * (b - mwt)).sum();
    Ok(IttEstimate {
        itt_y: myt - myc,
        itt_w: mwt - mwc,
        var_itt_y: sq(&yt, myt) / (nt * (nt - 1.0)) + sq(&yc, myc) / (nc * (nc - 1.0)),
        var_itt_w: sq(&wt, mwt) / (nt * (nt - 1.0)) + sq(&wc, mwc) / (nc * (nc - 1.0)),
        cov_itt: cross / (nt * (nt - 1.0)),
        n_t,
        n_c,
    })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// itt_y / itt_w, refusing first stages weaker than `weak_threshold`.
pub fn complier_ate(itt: &IttEstimate, weak_threshold: f64) -> Result<f64> {
    if !(itt.itt_w.abs() >= weak_threshold) || itt.itt_w == 0.0 {
        return Err(Error::WeakCompliance { itt_w: itt.itt_w, threshold: weak_threshold });
    }
    Ok(itt.itt_y / itt.itt_w)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeltaVariance {
    pub variance: f64,
    /// The plug-in value was negative and has been replaced by zero.
    pub floored: bool,
}

/// Delta-method variance of the ratio estimator.
pub fn var_complier_ate(itt: &IttEstimate) -> Result<DeltaVariance> {
    let w = itt.itt_w;
    if w == 0.0 {
        return Err(Error::Estimation("itt_w is zero; the complier effect is not identified".into()));
    }
    let y = itt.itt_y;
    let raw = itt.var_itt_y / (w * w) + y * y * itt.var_itt_w / w.powi(4) - 2.0 * y * itt.cov_itt / w.powi(3);
    Ok(if raw < 0.0 {
        DeltaVariance { variance: 0.0, floored: true }
    } else {
        DeltaVariance { variance: raw, floored: false }
    })
}

/// Inverse standard normal CDF: returns `q` with Φ(q) = p.
///
/// Wichura's AS 241 (PPND16) rational approximation, relative accuracy
/// about 1e-16 over (0, 1).
pub fn normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q
            * (((((((r * 2509.0809287301226727 + 33430.575583588128105) * r + 67265.770927008700853) * r
                + 45921.953931549871457)
                * r
                + 13731.693765509461125)
                * r
                + 1971.5909503065514427)
                * r
                + 133.14166789178437745)
                * r
                + 3.387132872796366608)
            / (((((((r * 5226.495278852545925 + 28729.085735721942674) * r + 39307.89580009271061) * r
                + 21213.794301586595867)
                * r
                + 5394.1960214247511077)
                * r
                + 687.1870074920579083)
                * r
                + 42.313330701600911252)
                * r
                + 1.0);
    }
    let mut r = if q < 0.0 { p } else { 1.0 - p };
    r = (-r.ln()).sqrt();
    let val = if r <= 5.0 {
        r -= 1.6;
        (((((((r * 7.7454501427834140764e-4 + 0.0227238449892691845833) * r + 0.24178072517745061177) * r
            + 1.27045825245236838258)
            * r
            + 3.64784832476320460504)
            * r
            + 5.7694972214606914055)
            * r
            + 4.6303378461565452959)
            * r
            + 1.42343711074968357734)
            / (((((((r * 1.05075007164441684324e-9 + 5.475938084995344946e-4) * r + 0.0151986665636164571966)
                * r
                + 0.14810397642748007459)
                * r
                + 0.68976733498510000455)
                * r
                + 1.6763848301838038494)
                * r
                + 2.05319162663775882187)
                * r
                + 1.0)
    } else {
        r -= 5.0;
        (((((((r * 2.01033439929228813265e-7 + 2.71155556874348757815e-5) * r + 0.0012426609473880784386) * r
            + 0.026532189526576123093)
            * r
            + 0.29656057182850489123)
            * r
            + 1.7848265399172913358)
            * r
            + 5.4637849111641143699)
            * r
            + 6.6579046435011037772)
            / (((((((r * 2.04426310338993978564e-15 + 1.4215117583164458887e-7) * r + 1.8463183175100546818e-5)
                * r
                + 7.868691311456132591e-4)
                * r
                + 0.0148753612908506148525)
                * r
                + 0.13692988092273580531)
                * r
                + 0.59983220655588793769)
                * r
                + 1.0)
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

/// point ± z_{α/2} · sqrt(variance).
pub fn confidence_interval(point: f64, variance: f64, alpha: f64) -> Result<(f64, f64)> {
    if !(variance >= 0.0) {
        return Err(Error::Argument(format!("variance must be nonnegative, got {variance}")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Argument(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let half = normal_quantile(1.0 - alpha / 2.0) * variance.sqrt();
    Ok((point - half, point + half))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimationMethod {
    Complete,
    Block,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComplierEstimate {
    pub point: f64,
    pub variance: f64,
    pub ci: (f64, f64),
    pub alpha: f64,
    pub method: EstimationMethod,
    pub window: Window,
    /// Window-level ITT summary; for block estimates these are the
    /// size-weighted block ITTs.
    pub itt: IttEstimate,
    pub warnings: Vec<String>,
}

/// Complete-randomization estimate on the window.
pub fn estimate_complete(window: &Window, dataset: &Dataset, options: &EstimationOptions) -> Result<ComplierEstimate> {
    let itt = itt_estimates(window, dataset)?;
    let point = complier_ate(&itt, options.weak_threshold)?;
    let var = var_complier_ate(&itt)?;
    let mut warnings = Vec::new();
    if var.floored {
        warnings.push("negative delta-method variance floored at zero".to_string());
    }
    Ok(ComplierEstimate {
        point,
        variance: var.variance,
        ci: confidence_interval(point, var.variance, options.alpha)?,
        alpha: options.alpha,
        method: EstimationMethod::Complete,
        window: window.clone(),
        itt,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockComponent {
    pub label: String,
    pub size: usize,
    pub n_t: usize,
    pub n_c: usize,
    pub point: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockEstimate {
    pub per_block: Vec<BlockComponent>,
    pub pooled: ComplierEstimate,
}

/// Size-weighted pooling of per-block complier estimates.
///
/// Every block must be estimable on its own; offending blocks are reported
/// together rather than dropped.
pub fn block_complier_ate(
    window: &Window,
    blocking: &Blocking,
    dataset: &Dataset,
    options: &EstimationOptions,
) -> Result<BlockEstimate> {
    if blocking.n_units() != window.len() {
        return Err(Error::Argument("blocking does not match the window".into()));
    }
    let mut components = Vec::new();
    let mut failures = Vec::new();
    let mut block_itts = Vec::new();
    let mut warnings = Vec::new();
    for block in &blocking.blocks {
        let members: Vec<usize> = block.positions.iter().map(|&k| window.members[k]).collect();
        let sub = Window::from_members(dataset, window.cutoff, window.bandwidth, window.inner_bandwidth, members)?;
        match estimate_complete(&sub, dataset, options) {
            Ok(est) => {
                warnings.extend(est.warnings.iter().map(|w| format!("block {}: {w}", block.label)));
                components.push(BlockComponent {
                    label: block.label.clone(),
                    size: sub.len(),
                    n_t: est.itt.n_t,
                    n_c: est.itt.n_c,
                    point: est.point,
                    variance: est.variance,
                });
                block_itts.push(est.itt);
            }
            Err(e) => failures.push(format!("{} ({e})", block.label)),
        }
    }
    if !failures.is_empty() {
        return Err(Error::Estimation(format!("blocks not estimable: {}", failures.join("; "))));
    }
    let total: usize = components.iter().map(|c| c.size).sum();
    let weights: Vec<f64> = components.iter().map(|c| c.size as f64 / total as f64).collect();
    let pool = |f: &dyn Fn(usize) -> f64| weights.iter().enumerate().map(|(j, wt)| wt * f(j)).sum::<f64>();
    let pool_sq = |f: &dyn Fn(usize) -> f64| weights.iter().enumerate().map(|(j, wt)| wt * wt * f(j)).sum::<f64>();
    let (point, variance) = pool_components(&components);
    let itt = IttEstimate {
        itt_y: pool(&|j| block_itts[j].itt_y),
        itt_w: pool(&|j| block_itts[j].itt_w),
        var_itt_y: pool_sq(&|j| block_itts[j].var_itt_y),
        var_itt_w: pool_sq(&|j| block_itts[j].var_itt_w),
        cov_itt: pool_sq(&|j| block_itts[j].cov_itt),
        n_t: window.n_treated,
        n_c: window.n_control,
    };
    Ok(BlockEstimate {
        per_block: components,
        pooled: ComplierEstimate {
            point,
            variance,
            ci: confidence_interval(point, variance, options.alpha)?,
            alpha: options.alpha,
            method: EstimationMethod::Block,
            window: window.clone(),
            itt,
            warnings,
        },
    })
}

/// Pooled point Σ|B_j|τ_j / Σ|B_j| and variance Σ|B_j|²V_j / (Σ|B_j|)².
///
/// Weights are formed as |B_j| / Σ|B_k| first, so a single block returns its
/// own point and variance unchanged.
pub fn pool_components(components: &[BlockComponent]) -> (f64, f64) {
    let total: usize = components.iter().map(|c| c.size).sum();
    components.iter().fold((0.0, 0.0), |(p, v), c| {
        let wt = c.size as f64 / total as f64;
        (p + wt * c.point, v + wt * wt * c.variance)
    })
}

/// Estimator matching a resolved mechanism.
///
/// Bernoulli mechanisms use the complete-randomization estimator, which
/// conditions on the realized number treated.
pub fn estimate_for_mechanism(
    window: &Window,
    dataset: &Dataset,
    mechanism: &Mechanism,
    options: &EstimationOptions,
) -> Result<ComplierEstimate> {
    match mechanism {
        Mechanism::Block { blocking, .. } => Ok(block_complier_ate(window, blocking, dataset, options)?.pooled),
        Mechanism::Complete { .. } => estimate_complete(window, dataset, options),
        Mechanism::Bernoulli { .. } => {
            let mut est = estimate_complete(window, dataset, options)?;
            est.warnings.push("bernoulli mechanism: estimated conditional on the realized N_T".into());
            Ok(est)
        }
    }
}
