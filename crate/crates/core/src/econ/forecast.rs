use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::month::Month;

use super::ols::{hac_mean, ols_with_intercept, RegressionFit};
use super::panel::{Frequency, PanelDate, TimeSeriesPanel, Unit};

/// Column holding the compounded market return over the twelve months after each row.
pub const TARGET: &str = "R_{t+1,t+12}";
/// Forecast horizon, in months, of [`TARGET`].
pub const HORIZON: usize = 12;

/// Compounded return Π(1 + r) − 1 over rows `first..=last`, or `None` if any is missing or out
/// of range. Inputs and output are in `unit`.
pub fn cumulative_window(returns: &[Option<f64>], first: i64, last: i64, unit: Unit) -> Option<f64> {
    if first < 0 || last >= returns.len() as i64 || first > last {
        return None;
    }
    let s = unit.scale();
    let gross = returns[first as usize..=last as usize]
        .iter()
        .try_fold(1.0, |g, r| r.map(|r| g * (1.0 + r / s)))?;
    Some((gross - 1.0) * s)
}

/// Compounded return over rows t+1..=t+horizon.
pub fn cumulative_return(returns: &[Option<f64>], t: usize, horizon: usize, unit: Unit) -> Option<f64> {
    cumulative_window(returns, t as i64 + 1, (t + horizon) as i64, unit)
}

fn monthly_only(panel: &TimeSeriesPanel) -> Result<()> {
    if panel.frequency() != Frequency::Monthly {
        return Err(Error::Invalid("operation needs a monthly panel".into()));
    }
    Ok(())
}

/// Adds the forecasting target and the past-return controls built from the market column:
/// `Return1` (this month), `Return12` (the eleven months before this one), `Return60` (the sixty
/// months ending this month), plus `{name}60` for each listed factor column.
pub fn add_return_columns(panel: &mut TimeSeriesPanel, market: &str, factors: &[&str]) -> Result<()> {
    monthly_only(panel)?;
    let unit = panel.unit(market);
    if !unit.is_return() {
        return Err(Error::Config(format!("column {market} has no return unit")));
    }
    let mkt = panel.column(market)?.to_vec();
    let n = mkt.len();
    let target = (0..n).map(|t| cumulative_return(&mkt, t, HORIZON, unit)).collect();
    let r12 = (0..n as i64).map(|t| cumulative_window(&mkt, t - 11, t - 1, unit)).collect();
    let r60 = (0..n as i64).map(|t| cumulative_window(&mkt, t - 59, t, unit)).collect();
    panel.insert(TARGET, target, unit)?;
    panel.insert("Return1", mkt, unit)?;
    panel.insert("Return12", r12, unit)?;
    panel.insert("Return60", r60, unit)?;
    for f in factors {
        let col = panel.column(f)?.to_vec();
        let u = panel.unit(f);
        let c60 = (0..n as i64).map(|t| cumulative_window(&col, t - 59, t, u)).collect();
        panel.insert(&format!("{f}60"), c60, u)?;
    }
    Ok(())
}

/// Optional restriction of the estimation sample.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleEnd {
    /// Last month any forecast target may reach: row t is used only if t + horizon ≤ cutoff.
    pub returns_end: Option<Month>,
}

/// In-sample forecasting regression of `target` on `regressors` (plus an intercept).
pub fn is_forecast(
    panel: &TimeSeriesPanel,
    target: &str,
    regressors: &[&str],
    lags: usize,
    sample_end: SampleEnd,
) -> Result<RegressionFit> {
    monthly_only(panel)?;
    let mut names = vec![target];
    names.extend_from_slice(regressors);
    let dates = panel.dates();
    let keep = |r: usize| match sample_end.returns_end {
        Some(end) => dates[r].month().offset(HORIZON as i64) <= end,
        None => true,
    };
    let a = panel.aligned_where(&names, keep)?;
    let cols: Vec<(&str, &[f64])> = regressors.iter().zip(&a.columns[1..]).map(|(n, c)| (*n, c.as_slice())).collect();
    let mut fit = ols_with_intercept(&a.columns[0], &cols, lags)?;
    fit.dropped = a.dropped;
    Ok(fit)
}

/// One evaluation month of a rolling out-of-sample forecast.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OosRecord {
    pub row: usize,
    pub date: Option<PanelDate>,
    pub actual: f64,
    pub forecast: f64,
    pub benchmark: f64,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    /// The predictor had no variance in the window, so the forecast is the benchmark.
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OosResult {
    pub h: usize,
    pub predictor: String,
    /// Out-of-sample R²; `None` with fewer than two evaluation points.
    pub r2: Option<f64>,
    pub mean_beta: Option<f64>,
    pub beta_t: Option<f64>,
    pub n_eval: usize,
    pub n_fallback: usize,
    pub records: Vec<OosRecord>,
}

impl OosResult {
    /// Out-of-sample R² recomputed from the stored forecasts.
    pub fn r2_from_records(&self) -> Option<f64> {
        oos_r2(self.records.iter().map(|r| (r.actual, r.forecast, r.benchmark)))
    }
}

/// 1 − Σ(y − ŷ)² / Σ(y − ȳ_bench)² over (actual, model, benchmark) triples.
pub fn oos_r2(points: impl Iterator<Item = (f64, f64, f64)>) -> Option<f64> {
    let (mut sse, mut ssb, mut n) = (0.0, 0.0, 0usize);
    for (y, f, b) in points {
        sse += (y - f) * (y - f);
        ssb += (y - b) * (y - b);
        n += 1;
    }
    (n >= 2 && ssb > 0.0).then(|| 1.0 - sse / ssb)
}

/// Rolling out-of-sample forecasts on raw series. `target[s]` is the return over the `horizon`
/// rows after s. At each t the slope is estimated on the h pairs (target[s], predictor[s]) for
/// s = t−horizon−h ..= t−horizon−1, all of which are realised by t, and the forecast for
/// target[t] is α̂ + β̂·predictor[t]. The benchmark is the mean of the same h targets. Months
/// whose window or evaluation pair is incomplete are skipped.
pub fn oos_forecast_series(
    target: &[Option<f64>],
    predictor: &[Option<f64>],
    h: usize,
    horizon: usize,
    lags: usize,
) -> Result<OosResult> {
    if target.len() != predictor.len() {
        return Err(Error::Dimension("target and predictor differ in length".into()));
    }
    if h < 2 {
        return Err(Error::Invalid(format!("window length {h} is too short")));
    }
    let mut records = Vec::new();
    let (mut sse, mut ssb) = (0.0, 0.0);
    for t in (h + horizon)..target.len() {
        let (Some(actual), Some(x_t)) = (target[t], predictor[t]) else {
            continue;
        };
        let window = t - horizon - h..t - horizon;
        let Some(pairs) = window
            .map(|s| target[s].zip(predictor[s]))
            .collect::<Option<Vec<(f64, f64)>>>()
        else {
            continue;
        };
        let n = h as f64;
        let ybar = pairs.iter().map(|p| p.0).sum::<f64>() / n;
        let xbar = pairs.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = pairs.iter().map(|p| (p.1 - xbar) * (p.1 - xbar)).sum();
        let sxy: f64 = pairs.iter().map(|p| (p.1 - xbar) * (p.0 - ybar)).sum();
        let scale: f64 = pairs.iter().map(|p| p.1 * p.1).sum();
        let fallback = sxx <= 1e-12 * scale || sxx == 0.0;
        let (alpha, beta, forecast) = if fallback {
            (None, None, ybar)
        } else {
            let b = sxy / sxx;
            let a = ybar - b * xbar;
            (Some(a), Some(b), a + b * x_t)
        };
        sse += (actual - forecast) * (actual - forecast);
        ssb += (actual - ybar) * (actual - ybar);
        records.push(OosRecord {
            row: t,
            date: None,
            actual,
            forecast,
            benchmark: ybar,
            alpha,
            beta,
            fallback,
        });
    }
    if records.is_empty() {
        return Err(Error::InsufficientHistory(format!(
            "no month has a complete {h}-month training window and a realised target"
        )));
    }
    let r2 = (records.len() >= 2 && ssb > 0.0).then(|| 1.0 - sse / ssb);
    let betas: Vec<f64> = records.iter().filter_map(|r| r.beta).collect();
    let (mean_beta, beta_t) = if betas.len() >= 2 {
        match hac_mean(&betas, lags) {
            Ok((m, t)) => (Some(m), t.is_finite().then_some(t)),
            Err(_) => (Some(betas.iter().sum::<f64>() / betas.len() as f64), None),
        }
    } else {
        (betas.first().copied(), None)
    };
    Ok(OosResult {
        h,
        predictor: String::new(),
        r2,
        mean_beta,
        beta_t,
        n_eval: records.len(),
        n_fallback: records.iter().filter(|r| r.fallback).count(),
        records,
    })
}

/// Rolling out-of-sample forecast of the twelve-month market return column `target` by
/// `predictor`, with window length `h`.
pub fn oos_forecast(
    panel: &TimeSeriesPanel,
    target: &str,
    predictor: &str,
    h: usize,
    lags: usize,
) -> Result<OosResult> {
    monthly_only(panel)?;
    let mut out = oos_forecast_series(panel.column(target)?, panel.column(predictor)?, h, HORIZON, lags)?;
    out.predictor = predictor.to_string();
    for r in &mut out.records {
        r.date = Some(panel.dates()[r.row]);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_percent_a_month() {
        let r = vec![Some(1.0); 13];
        let c = cumulative_return(&r, 0, 12, Unit::Percent).unwrap();
        assert!((c - (1.01f64.powi(12) - 1.0) * 100.0).abs() < 1e-12);
        let z = vec![Some(0.0); 13];
        assert_eq!(cumulative_return(&z, 0, 12, Unit::Decimal), Some(0.0));
        assert_eq!(cumulative_return(&r, 1, 12, Unit::Percent), None);
        let mut gap = r.clone();
        gap[5] = None;
        assert_eq!(cumulative_return(&gap, 0, 12, Unit::Percent), None);
    }

    #[test]
    fn return_controls_use_the_stated_windows() {
        let first: Month = "2000-01".parse().unwrap();
        let mut p = TimeSeriesPanel::monthly(first, first.offset(79));
        let r: Vec<f64> = (0..80).map(|i| (i as f64 * 0.37).sin()).collect();
        p.insert_full("MKT", &r, Unit::Percent).unwrap();
        add_return_columns(&mut p, "MKT", &[]).unwrap();
        let fold = |a: usize, b: usize| (r[a..=b].iter().fold(1.0, |g, x| g * (1.0 + x / 100.0)) - 1.0) * 100.0;
        let t = 70;
        assert!((p.column("Return12").unwrap()[t].unwrap() - fold(t - 11, t - 1)).abs() < 1e-12);
        assert!((p.column("Return60").unwrap()[t].unwrap() - fold(t - 59, t)).abs() < 1e-12);
        assert!((p.column(TARGET).unwrap()[t - 12].unwrap() - fold(t - 11, t)).abs() < 1e-12);
        assert_eq!(p.column("Return60").unwrap()[58], None);
        assert_eq!(p.column(TARGET).unwrap()[68], None);
    }

    #[test]
    fn constant_predictor_falls_back() {
        let y: Vec<Option<f64>> = (0..60).map(|i| Some((i as f64).sin())).collect();
        let x = vec![Some(2.0); 60];
        let out = oos_forecast_series(&y, &x, 12, 12, 4).unwrap();
        assert_eq!(out.n_fallback, out.n_eval);
        assert_eq!(out.r2, Some(0.0));
        assert_eq!(out.mean_beta, None);
    }
}
