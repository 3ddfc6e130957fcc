use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::linalg::{bartlett_sum, check_rank, design, least_squares, mean, sample_std, to_rows};

/// Jointly estimated time-series betas and cross-sectional risk premia.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmEstimate {
    pub assets: Vec<String>,
    pub factors: Vec<String>,
    pub alpha: Vec<f64>,
    /// K×N: `beta[k][i]` is asset i's loading on factor k.
    pub beta: Vec<Vec<f64>>,
    pub lambda: Vec<f64>,
    /// Covariance of θ = (α_1, β_1, …, α_N, β_N, λ).
    pub cov: Vec<Vec<f64>>,
    pub lambda_se: Vec<f64>,
    pub lambda_t: Vec<f64>,
    /// Cross-sectional standard deviation of each factor's betas.
    pub beta_std: Vec<f64>,
    /// λ_k × beta_std_k.
    pub scaled_lambda: Vec<f64>,
    pub n_obs: usize,
    pub hac_lags: usize,
}

impl GmmEstimate {
    pub fn factor_index(&self, name: &str) -> Option<usize> {
        self.factors.iter().position(|f| f == name)
    }

    /// Sample means of every moment condition at the estimate.
    pub fn sample_moments(&self, returns: &[Vec<f64>], factors: &[Vec<f64>]) -> Vec<f64> {
        let g = moment_matrix(self, returns, factors);
        (0..g.ncols()).map(|c| g.column(c).mean()).collect()
    }
}

/// T×M matrix of per-period moments: for each asset e_it·(1, f_t), then Σ_i β_i (r_it − β_iᵀλ).
fn moment_matrix(est: &GmmEstimate, returns: &[Vec<f64>], factors: &[Vec<f64>]) -> DMatrix<f64> {
    let (n, k, t) = (returns.len(), factors.len(), returns[0].len());
    let m = n * (1 + k) + k;
    let mut g = DMatrix::zeros(t, m);
    for s in 0..t {
        for i in 0..n {
            let fitted: f64 = est.alpha[i] + (0..k).map(|j| est.beta[j][i] * factors[j][s]).sum::<f64>();
            let e = returns[i][s] - fitted;
            let base = i * (1 + k);
            g[(s, base)] = e;
            for j in 0..k {
                g[(s, base + 1 + j)] = e * factors[j][s];
            }
            let priced: f64 = (0..k).map(|j| est.beta[j][i] * est.lambda[j]).sum();
            let u = returns[i][s] - priced;
            for j in 0..k {
                g[(s, n * (1 + k) + j)] += est.beta[j][i] * u;
            }
        }
    }
    g
}

/// Time-series regressions of each asset on the factors with an intercept, then the
/// cross-sectional regression λ = (ββᵀ)⁻¹ β r̄ without a constant. The covariance is the
/// exactly identified GMM sandwich d⁻¹ S d⁻ᵀ / T with S Bartlett-weighted over `hac_lags`.
pub fn fama_macbeth_gmm(
    assets: &[String],
    returns: &[Vec<f64>],
    factor_names: &[String],
    factors: &[Vec<f64>],
    hac_lags: usize,
) -> Result<GmmEstimate> {
    let (n, k) = (returns.len(), factors.len());
    if n == 0 || k == 0 {
        return Err(Error::Empty("test assets or factors"));
    }
    if assets.len() != n || factor_names.len() != k {
        return Err(Error::Dimension("names do not match return series".into()));
    }
    let t = returns[0].len();
    if returns.iter().chain(factors).any(|c| c.len() != t) {
        return Err(Error::Dimension("returns and factors differ in length".into()));
    }
    if t <= k + 1 {
        return Err(Error::InsufficientHistory(format!("{t} periods for {k} factors")));
    }

    let fcols: Vec<&[f64]> = factors.iter().map(Vec::as_slice).collect();
    let z = design(t, &fcols, true)?;
    let mut znames = vec!["const".to_string()];
    znames.extend(factor_names.iter().cloned());
    check_rank(&z, &znames)?;
    let mut alpha = Vec::with_capacity(n);
    let mut beta = vec![Vec::with_capacity(n); k];
    for r in returns {
        let c = least_squares(&z, &nalgebra::DVector::from_column_slice(r))?;
        alpha.push(c[0]);
        for j in 0..k {
            beta[j].push(c[1 + j]);
        }
    }

    // second stage on the N×K loading matrix
    let b = DMatrix::from_fn(n, k, |i, j| beta[j][i]);
    if n < k {
        return Err(Error::RankDeficient { columns: factor_names.to_vec() });
    }
    let bbt = b.transpose() * &b;
    let svd = bbt.clone().svd(false, false);
    if svd.singular_values.min() <= 1e-10 * svd.singular_values.max() {
        return Err(Error::RankDeficient {
            columns: super::linalg::collinear_columns(&b).into_iter().map(|j| factor_names[j].clone()).collect(),
        });
    }
    let rbar: Vec<f64> = returns.iter().map(|r| mean(r)).collect();
    let rhs = b.transpose() * nalgebra::DVector::from_column_slice(&rbar);
    let lambda = bbt.clone().lu().solve(&rhs).ok_or(Error::Singular("ββᵀ"))?;

    let mut est = GmmEstimate {
        assets: assets.to_vec(),
        factors: factor_names.to_vec(),
        alpha,
        beta,
        lambda: lambda.iter().copied().collect(),
        cov: Vec::new(),
        lambda_se: Vec::new(),
        lambda_t: Vec::new(),
        beta_std: Vec::new(),
        scaled_lambda: Vec::new(),
        n_obs: t,
        hac_lags,
    };

    // Jacobian of the mean moments with respect to θ
    let m = n * (1 + k) + k;
    let lam_off = n * (1 + k);
    let ezz = (z.transpose() * &z) / t as f64;
    let mut d = DMatrix::zeros(m, m);
    for i in 0..n {
        let base = i * (1 + k);
        for a in 0..=k {
            for c in 0..=k {
                d[(base + a, base + c)] = -ezz[(a, c)];
            }
        }
        let pricing_error = rbar[i] - (0..k).map(|j| est.beta[j][i] * est.lambda[j]).sum::<f64>();
        for j in 0..k {
            let col = base + 1 + j;
            for r in 0..k {
                let mut v = -est.beta[r][i] * est.lambda[j];
                if r == j {
                    v += pricing_error;
                }
                d[(lam_off + r, col)] = v;
            }
        }
    }
    for r in 0..k {
        for c in 0..k {
            d[(lam_off + r, lam_off + c)] = -bbt[(r, c)];
        }
    }
    let g = moment_matrix(&est, returns, factors);
    let s = bartlett_sum(&g, hac_lags) / t as f64;
    let d_inv = d.lu().try_inverse().ok_or(Error::Singular("GMM Jacobian"))?;
    let cov = &d_inv * s * d_inv.transpose() / t as f64;

    est.lambda_se = (0..k).map(|j| cov[(lam_off + j, lam_off + j)].sqrt()).collect();
    est.lambda_t = est.lambda.iter().zip(&est.lambda_se).map(|(l, s)| l / s).collect();
    est.beta_std = est.beta.iter().map(|b| sample_std(b)).collect();
    est.scaled_lambda = est.lambda.iter().zip(&est.beta_std).map(|(l, s)| l * s).collect();
    est.cov = to_rows(&cov);
    Ok(est)
}
