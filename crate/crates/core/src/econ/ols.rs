use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::linalg::{bartlett_sum, check_rank, least_squares, sample_std, spd_inverse, to_rows};

/// Name given to the intercept column.
pub const CONST: &str = "const";

/// An OLS fit with Newey-West standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionFit {
    pub names: Vec<String>,
    pub coef: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
    pub t_stats: Vec<f64>,
    pub r2: f64,
    pub n_obs: usize,
    /// Rows excluded because a required value was missing.
    pub dropped: usize,
    pub lags: usize,
    /// Sample standard deviation of each regressor; `None` for constant columns.
    pub regressor_std: Vec<Option<f64>>,
    /// Coefficient times regressor standard deviation; `None` for constant columns.
    pub scaled: Vec<Option<f64>>,
    #[serde(skip)]
    pub residuals: Vec<f64>,
}

impl RegressionFit {
    pub fn index(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Invalid(format!("fit has no regressor {name:?}")))
    }

    pub fn se(&self, j: usize) -> f64 {
        self.cov[j][j].sqrt()
    }

    pub fn coef_of(&self, name: &str) -> Result<f64> {
        Ok(self.coef[self.index(name)?])
    }

    pub fn t_of(&self, name: &str) -> Result<f64> {
        Ok(self.t_stats[self.index(name)?])
    }

    pub fn scaled_of(&self, name: &str) -> Result<Option<f64>> {
        Ok(self.scaled[self.index(name)?])
    }
}

/// OLS of `y` on the columns of `x` with the Bartlett-kernel HAC sandwich
/// (XᵀX)⁻¹ Ω (XᵀX)⁻¹ and no small-sample correction. R² is centred when `x` contains a constant
/// column and uncentred otherwise.
pub fn ols_hac(y: &[f64], x: &DMatrix<f64>, names: &[String], lags: usize) -> Result<RegressionFit> {
    let (n, k) = x.shape();
    if y.len() != n {
        return Err(Error::Dimension(format!("{} responses for {n} design rows", y.len())));
    }
    if !y.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("regression response"));
    }
    check_rank(x, names)?;
    let yv = DVector::from_column_slice(y);
    let beta = least_squares(x, &yv)?;
    let resid = &yv - x * &beta;

    let bread = spd_inverse(x.transpose() * x, "XᵀX")?;
    let mut scores = x.clone();
    for (r, &u) in resid.iter().enumerate() {
        scores.row_mut(r).scale_mut(u);
    }
    let omega = bartlett_sum(&scores, lags);
    let mut cov = &bread * omega * &bread;
    // symmetrise away rounding
    for a in 0..k {
        for b in 0..a {
            let m = 0.5 * (cov[(a, b)] + cov[(b, a)]);
            cov[(a, b)] = m;
            cov[(b, a)] = m;
        }
    }

    let constant: Vec<bool> = (0..k)
        .map(|j| {
            let c = x.column(j);
            c.iter().all(|&v| v == c[0])
        })
        .collect();
    let ssr = resid.norm_squared();
    let sst = if constant.iter().any(|&c| c) {
        let m = yv.mean();
        yv.iter().map(|v| (v - m) * (v - m)).sum::<f64>()
    } else {
        yv.norm_squared()
    };
    let r2 = if sst > 0.0 && !constant.iter().all(|&c| c) {
        1.0 - ssr / sst
    } else {
        0.0
    };

    let regressor_std: Vec<Option<f64>> = (0..k)
        .map(|j| (!constant[j]).then(|| sample_std(x.column(j).as_slice())))
        .collect();
    let scaled = regressor_std
        .iter()
        .zip(beta.iter())
        .map(|(s, b)| s.map(|s| s * b))
        .collect();
    let t_stats = (0..k).map(|j| beta[j] / cov[(j, j)].sqrt()).collect();

    Ok(RegressionFit {
        names: names.to_vec(),
        coef: beta.iter().copied().collect(),
        cov: to_rows(&cov),
        t_stats,
        r2,
        n_obs: n,
        dropped: 0,
        lags,
        regressor_std,
        scaled,
        residuals: resid.iter().copied().collect(),
    })
}

/// Convenience wrapper: regress `y` on named columns plus an intercept named [`CONST`].
pub fn ols_with_intercept(y: &[f64], columns: &[(&str, &[f64])], lags: usize) -> Result<RegressionFit> {
    let cols: Vec<&[f64]> = columns.iter().map(|c| c.1).collect();
    let x = super::linalg::design(y.len(), &cols, true)?;
    let names: Vec<String> = std::iter::once(CONST)
        .chain(columns.iter().map(|c| c.0))
        .map(String::from)
        .collect();
    ols_hac(y, &x, &names, lags)
}

/// Mean of a series with its Newey-West t-statistic.
pub fn hac_mean(xs: &[f64], lags: usize) -> Result<(f64, f64)> {
    let fit = ols_with_intercept(xs, &[], lags)?;
    Ok((fit.coef[0], fit.t_stats[0]))
}
