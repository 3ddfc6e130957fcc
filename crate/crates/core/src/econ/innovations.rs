use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::linalg::design;
use super::ols::{ols_hac, RegressionFit, CONST};
use super::panel::{PanelDate, TimeSeriesPanel};

/// Residuals of the BIC-selected autoregression of a state variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnovationSeries {
    pub p: usize,
    pub fit: RegressionFit,
    /// Residual for rows `start..n` of the input.
    pub residuals: Vec<f64>,
    pub start: usize,
    /// BIC for each candidate order on the common sample.
    pub bic: Vec<(usize, f64)>,
    /// Dates of the residuals when built from a panel.
    pub dates: Vec<PanelDate>,
}

/// Gaussian log-likelihood of an OLS fit with the variance set to RSS/n.
fn gaussian_loglik(rss: f64, n: usize) -> f64 {
    let n = n as f64;
    -0.5 * n * ((2.0 * std::f64::consts::PI).ln() + (rss / n).ln() + 1.0)
}

/// Fits x_t = c + Σ_{i≤p} β_i x_{t−i} (+ γ·control_{t−1}) and returns the fit over rows first..n.
fn fit_ar(x: &[f64], control: Option<&[f64]>, p: usize, first: usize, lags: usize) -> Result<RegressionFit> {
    let rows = first..x.len();
    let y: Vec<f64> = rows.clone().map(|t| x[t]).collect();
    let lagged: Vec<Vec<f64>> = (1..=p).map(|i| rows.clone().map(|t| x[t - i]).collect()).collect();
    let ctrl: Option<Vec<f64>> = control.map(|c| rows.clone().map(|t| c[t - 1]).collect());
    let mut cols: Vec<&[f64]> = lagged.iter().map(Vec::as_slice).collect();
    let mut names: Vec<String> = std::iter::once(CONST.to_string())
        .chain((1..=p).map(|i| format!("lag{i}")))
        .collect();
    if let Some(c) = &ctrl {
        cols.push(c);
        names.push("control_lag1".to_string());
    }
    let xm = design(y.len(), &cols, true)?;
    ols_hac(&y, &xm, &names, lags)
}

/// Selects the AR order in 1..=max_p by BIC on the rows usable at max_p, then refits the chosen
/// order on every usable row. `control`, if given, enters with a one-row lag.
pub fn ar_innovations(series: &[f64], control: Option<&[f64]>, max_p: usize) -> Result<InnovationSeries> {
    let n = series.len();
    if max_p == 0 {
        return Err(Error::Invalid("max_p must be at least 1".into()));
    }
    if n <= max_p + 3 {
        return Err(Error::InsufficientHistory(format!("{n} observations for AR order up to {max_p}")));
    }
    if let Some(c) = control {
        if c.len() != n {
            return Err(Error::Dimension("control and series differ in length".into()));
        }
    }
    let n_common = n - max_p;
    let mut bic = Vec::with_capacity(max_p);
    for p in 1..=max_p {
        let fit = fit_ar(series, control, p, max_p, 0)?;
        let rss: f64 = fit.residuals.iter().map(|e| e * e).sum();
        let k = fit.coef.len() as f64;
        bic.push((p, k * (n_common as f64).ln() - 2.0 * gaussian_loglik(rss, n_common)));
    }
    let p = bic
        .iter()
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .expect("at least one order")
        .0;
    let start = p.max(1);
    let fit = fit_ar(series, control, p, start, 0)?;
    Ok(InnovationSeries {
        p,
        residuals: fit.residuals.clone(),
        fit,
        start,
        bic,
        dates: Vec::new(),
    })
}

/// Bounds `lo..hi` of the longest stretch of consecutive values in sorted `rows`; the earliest
/// such stretch wins ties.
pub fn longest_run(rows: &[usize]) -> (usize, usize) {
    let (mut best, mut cur) = ((0, 0), 0);
    for i in 0..rows.len() {
        if i > 0 && rows[i] != rows[i - 1] + 1 {
            cur = i;
        }
        if i + 1 - cur > best.1 - best.0 {
            best = (cur, i + 1);
        }
    }
    best
}

/// [`ar_innovations`] on a panel column, using the longest run of consecutive complete rows.
pub fn panel_innovations(
    panel: &TimeSeriesPanel,
    column: &str,
    control: Option<&str>,
    max_p: usize,
) -> Result<InnovationSeries> {
    let mut names = vec![column];
    names.extend(control);
    let a = panel.aligned(&names)?;
    let (lo, hi) = longest_run(&a.rows);
    let x = &a.columns[0][lo..hi];
    let c = control.map(|_| &a.columns[1][lo..hi]);
    let mut out = ar_innovations(x, c, max_p)?;
    out.dates = a.rows[lo + out.start..hi].iter().map(|&r| panel.dates()[r]).collect();
    out.fit.dropped = a.rows.len() - (hi - lo) + a.dropped;
    Ok(out)
}
