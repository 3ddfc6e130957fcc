use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative singular-value tolerance below which a design is treated as rank deficient.
pub const RANK_TOL: f64 = 1e-10;

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation with the n − 1 denominator.
pub fn sample_std(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)).sqrt()
}

/// Builds an n×k design matrix from columns, optionally prepending a column of ones.
pub fn design(n: usize, columns: &[&[f64]], intercept: bool) -> Result<DMatrix<f64>> {
    if columns.is_empty() && !intercept {
        return Err(Error::Empty("design has no columns"));
    }
    if columns.iter().any(|c| c.len() != n) {
        return Err(Error::Dimension("design columns differ in length".into()));
    }
    let k = columns.len() + usize::from(intercept);
    let off = usize::from(intercept);
    Ok(DMatrix::from_fn(n, k, |r, c| {
        if intercept && c == 0 {
            1.0
        } else {
            columns[c - off][r]
        }
    }))
}

/// Errors unless `x` has full column rank, naming every column involved in a near-exact linear
/// dependence.
pub fn check_rank(x: &DMatrix<f64>, names: &[String]) -> Result<()> {
    let (n, k) = x.shape();
    if names.len() != k {
        return Err(Error::Dimension(format!("{} names for {k} columns", names.len())));
    }
    if n <= k {
        return Err(Error::InsufficientHistory(format!("{n} observations for {k} regressors")));
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("design matrix"));
    }
    let collinear = collinear_columns(x);
    if collinear.is_empty() {
        Ok(())
    } else {
        Err(Error::RankDeficient {
            columns: collinear.into_iter().map(|j| names[j].clone()).collect(),
        })
    }
}

/// Indices of columns with weight in the numerical null space of `x`, in column order.
pub fn collinear_columns(x: &DMatrix<f64>) -> Vec<usize> {
    let k = x.ncols();
    let svd = x.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested V");
    let smax = svd.singular_values.max();
    let tol = RANK_TOL * smax;
    let mut hit = vec![smax == 0.0; k];
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s <= tol {
            for j in 0..k {
                if v_t[(i, j)].abs() > 1e-6 {
                    hit[j] = true;
                }
            }
        }
    }
    (0..k).filter(|&j| hit[j]).collect()
}

/// Least-squares solution through a thin QR factorisation.
pub fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let qr = x.clone().qr();
    let qty = qr.q().transpose() * y;
    qr.r()
        .solve_upper_triangular(&qty)
        .ok_or(Error::Singular("least squares"))
}

/// Inverse of a symmetric positive-definite matrix.
pub fn spd_inverse(a: DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    a.cholesky().map(|c| c.inverse()).ok_or(Error::Singular(what))
}

/// Bartlett-weighted long-run sum Σ_t s_t s_tᵀ + Σ_l w_l Σ_t (s_t s_{t−l}ᵀ + s_{t−l} s_tᵀ) of the
/// rows of `scores`, with w_l = 1 − l/(lags + 1). Not divided by the number of rows.
pub fn bartlett_sum(scores: &DMatrix<f64>, lags: usize) -> DMatrix<f64> {
    let (n, k) = scores.shape();
    let mut omega = scores.transpose() * scores;
    for l in 1..=lags.min(n.saturating_sub(1)) {
        let w = 1.0 - l as f64 / (lags as f64 + 1.0);
        let cur = scores.rows(l, n - l);
        let prev = scores.rows(0, n - l);
        let gamma = cur.transpose() * prev;
        for a in 0..k {
            for b in 0..k {
                omega[(a, b)] += w * (gamma[(a, b)] + gamma[(b, a)]);
            }
        }
    }
    omega
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect()
}
