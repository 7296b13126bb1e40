//! Error measures, stability classification and summary statistics for
//! Monte-Carlo studies. Errors are fractions; callers format percentages.

use nalgebra::{DMatrix, DMatrixView};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::fit_ls;
use crate::linalg;
use crate::moments::{residual_forward, sample_moments, SampleMoments};

/// `‖F̂ - F‖ / ‖F‖` in Frobenius norm.
pub fn relative_estimation_error(f_hat: &DMatrix<f64>, f_true: &DMatrix<f64>) -> Result<f64> {
    if f_hat.shape() != f_true.shape() {
        return Err(Error::InvalidInput("estimate and reference differ in shape".into()));
    }
    let reference = f_true.norm();
    if reference == 0.0 {
        return Err(Error::ZeroReference);
    }
    Ok((f_hat - f_true).norm() / reference)
}

/// Excess one-step prediction residual of `F̂` over full-rank least squares:
/// `(‖Y1 - F̂ Y0‖ - ‖Y1 - F̂_LS Y0‖) / ‖Y1 - F̂_LS Y0‖`.
pub fn relative_prediction_error(
    f_hat: &DMatrix<f64>,
    y0: DMatrixView<'_, f64>,
    y1: DMatrixView<'_, f64>,
) -> Result<f64> {
    let s = sample_moments(y0, y1)?;
    linalg::check_same_dim("F", f_hat, s.n())?;
    let ls = fit_ls(&s)?;
    let baseline = (y1 - &ls.f_hat * y0).norm();
    let candidate = (y1 - f_hat * y0).norm();
    Ok((candidate - baseline) / baseline)
}

/// [`relative_prediction_error`] evaluated from sufficient statistics, using
/// `‖Y1 - F Y0‖² = T · trace S_wf(F)`. Avoids touching the data again when
/// `n` and `T` are large.
pub fn relative_prediction_error_from_moments(
    f_hat: &DMatrix<f64>,
    s: &SampleMoments,
    f_ls: &DMatrix<f64>,
) -> Result<f64> {
    let baseline = residual_forward(s, f_ls)?.trace().max(0.0).sqrt();
    let candidate = residual_forward(s, f_hat)?.trace().max(0.0).sqrt();
    Ok((candidate - baseline) / baseline)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stability {
    Stable,
    Unstable,
}

/// Stable iff `ρ(F̂) < 1`; the margin is `1 - ρ`.
pub fn classify_stability(f_hat: &DMatrix<f64>) -> Result<(Stability, f64)> {
    let rho = linalg::spectral_radius(f_hat)?;
    let class = if rho < 1.0 {
        Stability::Stable
    } else {
        Stability::Unstable
    };
    Ok((class, 1.0 - rho))
}

/// Type-7 (linear interpolation) sample quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], prob: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * prob;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    /// Fraction of spectral radii `>= 1`.
    pub unstable_rate: f64,
    pub count: usize,
}

pub fn summarize(values: &[f64], radii: &[f64]) -> Result<SummaryStats> {
    if values.is_empty() {
        return Err(Error::InvalidInput("cannot summarize an empty sample".into()));
    }
    if values.len() != radii.len() {
        return Err(Error::InvalidInput(format!(
            "{} values but {} spectral radii",
            values.len(),
            radii.len()
        )));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidInput("NaN in summarized values".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let unstable = radii.iter().filter(|&&r| r >= 1.0).count();
    Ok(SummaryStats {
        median: quantile_sorted(&sorted, 0.5),
        q25: quantile_sorted(&sorted, 0.25),
        q75: quantile_sorted(&sorted, 0.75),
        unstable_rate: unstable as f64 / values.len() as f64,
        count: values.len(),
    })
}

/// Median of an unsorted sample.
pub fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    quantile_sorted(&sorted, 0.5)
}
