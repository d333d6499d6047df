//! Log-log rate fitting.
//!
//! The decay exponent of a mean-error sequence is estimated by ordinary
//! least squares on `(ln n, ln error)`: a slope near `-1` is the `1/n`
//! regime. Early checkpoints are contaminated by the warm-up transient, so
//! a burn-in rule discards them before fitting: everything inside an
//! explicit warm-up phase goes first, then — when enough points remain —
//! everything before four times the first checkpoint whose mean error
//! dropped below one half, a cheap proxy for where the contraction regime
//! begins.

use serde::{Deserialize, Serialize};

use crate::error::HarnessError;

/// Least-squares line through `(ln n, ln error)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    /// Decay exponent; `-1` is the `1/n` regime.
    pub slope: f64,
    /// `ln` of the fitted constant.
    pub intercept: f64,
    /// Coefficient of determination of the log-log line.
    pub r_squared: f64,
    /// Points that entered the fit.
    pub points_used: usize,
}

/// Fit a power law to `(checkpoint, mean error)` points. Requires at least
/// three points, every checkpoint at least 1, and every error positive and
/// finite.
pub fn fit_rate(points: &[(u64, f64)]) -> Result<RateFit, HarnessError> {
    if points.len() < 3 {
        return Err(HarnessError::TooFewPoints(points.len()));
    }
    for &(n, err) in points {
        if n == 0 {
            return Err(HarnessError::Validation(
                "checkpoint 0 cannot enter a log-log fit".into(),
            ));
        }
        if !(err.is_finite() && err > 0.0) {
            return Err(HarnessError::NonPositiveError { n, value: err });
        }
    }
    let m = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|&(n, _)| (n as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|&(_, e)| e.ln()).collect();
    let x_bar = xs.iter().sum::<f64>() / m;
    let y_bar = ys.iter().sum::<f64>() / m;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        let dx = x - x_bar;
        let dy = y - y_bar;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(HarnessError::Validation(
            "all checkpoints coincide; no slope to fit".into(),
        ));
    }
    let slope = sxy / sxx;
    let intercept = y_bar - slope * x_bar;
    let ss_res = syy - slope * sxy;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    };
    Ok(RateFit {
        slope,
        intercept,
        r_squared,
        points_used: points.len(),
    })
}

/// Apply the burn-in rule. Checkpoints at or below `warm_steps` (the
/// warm-up length of a two-phase schedule, 0 otherwise) are always
/// dropped; the four-times-first-contraction proxy is applied only when at
/// least three points would survive it.
pub fn burn_in(points: &[(u64, f64)], warm_steps: u64) -> Vec<(u64, f64)> {
    let survivors: Vec<(u64, f64)> = points
        .iter()
        .copied()
        .filter(|&(n, _)| n > warm_steps)
        .collect();
    let first_contracting = survivors
        .iter()
        .find(|&&(_, err)| err.is_finite() && err < 0.5)
        .map(|&(n, _)| n);
    if let Some(n1) = first_contracting {
        let cut = n1.saturating_mul(4);
        let trimmed: Vec<(u64, f64)> =
            survivors.iter().copied().filter(|&(n, _)| n >= cut).collect();
        if trimmed.len() >= 3 {
            return trimmed;
        }
    }
    survivors
}
