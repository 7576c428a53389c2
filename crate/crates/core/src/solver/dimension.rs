//! Scree elbow by two-group Gaussian profile likelihood.
//!
//! For a split after position `q`, the leading `q` values and the trailing
//! values are modelled as Gaussians with their own means and a pooled
//! variance. The split with the highest log-likelihood wins.

use crate::error::{Error, Result};

/// Profile log-likelihood of splitting `values` after the first `q`.
/// Returns `+inf` when both groups are constant.
pub fn profile_log_likelihood(values: &[f64], q: usize) -> f64 {
    let p = values.len();
    assert!(q >= 1 && q < p, "split must leave both groups non-empty");
    let (head, tail) = values.split_at(q);
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let (m1, m2) = (mean(head), mean(tail));
    let ss: f64 =
        head.iter().map(|v| (v - m1).powi(2)).sum::<f64>() + tail.iter().map(|v| (v - m2).powi(2)).sum::<f64>();
    if ss == 0.0 {
        return f64::INFINITY;
    }
    let var = ss / p as f64;
    -0.5 * p as f64 * (2.0 * std::f64::consts::PI * var).ln() - ss / (2.0 * var)
}

/// Number of leading values to keep. Ties go to the smaller dimension.
pub fn select_dimension_elbow(eigenvalues: &[f64]) -> Result<usize> {
    if eigenvalues.len() < 2 {
        return Err(Error::TooFewValues { needed: 2, found: eigenvalues.len() });
    }
    if eigenvalues.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidParameter("scree values must be finite and nonnegative".into()));
    }
    if eigenvalues.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::InvalidParameter("scree values must be in descending order".into()));
    }
    let mut best = (1, f64::NEG_INFINITY);
    for q in 1..eigenvalues.len() {
        let ll = profile_log_likelihood(eigenvalues, q);
        if ll > best.1 {
            best = (q, ll);
        }
    }
    Ok(best.0)
}
