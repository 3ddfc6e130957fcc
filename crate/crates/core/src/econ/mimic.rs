use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::ols::{ols_with_intercept, RegressionFit};

/// Returns to which the estimated weights are applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum MimicFrequency {
    Monthly,
    #[default]
    Daily,
}

/// Zero-cost portfolio of base assets tracking a non-traded series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MimickingPortfolio {
    pub assets: Vec<String>,
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub fit: RegressionFit,
    pub frequency: MimicFrequency,
    /// F = weightsᵀ X on the returns the weights were applied to.
    pub factor: Vec<f64>,
}

/// Regresses `innovations` on the base-asset returns observed over the same periods
/// (`estimation[j][t]` for asset j) and applies the slopes to `apply_to[j][s]`.
pub fn mimicking_portfolio(
    innovations: &[f64],
    assets: &[String],
    estimation: &[Vec<f64>],
    apply_to: &[Vec<f64>],
    frequency: MimicFrequency,
    lags: usize,
) -> Result<MimickingPortfolio> {
    if assets.is_empty() || assets.len() != estimation.len() || assets.len() != apply_to.len() {
        return Err(Error::Dimension("base asset names and return series differ".into()));
    }
    if estimation.iter().any(|c| c.len() != innovations.len()) {
        return Err(Error::Dimension("base asset returns and innovations differ in length".into()));
    }
    let len = apply_to[0].len();
    if apply_to.iter().any(|c| c.len() != len) {
        return Err(Error::Dimension("base asset return series differ in length".into()));
    }
    let cols: Vec<(&str, &[f64])> = assets.iter().map(String::as_str).zip(estimation.iter().map(Vec::as_slice)).collect();
    let fit = ols_with_intercept(innovations, &cols, lags)?;
    let weights = fit.coef[1..].to_vec();
    let factor = (0..len)
        .map(|s| weights.iter().zip(apply_to).map(|(b, x)| b * x[s]).sum())
        .collect();
    Ok(MimickingPortfolio {
        assets: assets.to_vec(),
        intercept: fit.coef[0],
        weights,
        fit,
        frequency,
        factor,
    })
}
