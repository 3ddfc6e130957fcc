use rayon::prelude::*;

use crate::error::Result;

use super::ols::{ols_with_intercept, RegressionFit};
use super::panel::TimeSeriesPanel;

/// Default macroeconomic targets, used when they are present in the panel.
pub const MACRO_TARGETS: [&str; 9] = [
    "EPU",
    "UNRATE",
    "INDPRO_YOY",
    "CPI_YOY",
    "DGS10",
    "DGS2",
    "DGS10-2",
    "VIX",
    "EPS",
];

/// For each target Y, regresses Y_{t+horizon} on the entropy column, Y_t, and the current values
/// of the other targets. Regressor order in each fit is (const, entropy, Y, others…).
pub fn macro_forecast(
    panel: &TimeSeriesPanel,
    targets: &[&str],
    entropy: &str,
    horizon: usize,
    lags: usize,
) -> Result<Vec<RegressionFit>> {
    targets
        .par_iter()
        .map(|&y| {
            let lead = panel.shifted(y, horizon as i64)?;
            let mut work = panel.clone();
            let lead_name = format!("{y}_lead{horizon}");
            work.insert(&lead_name, lead, panel.unit(y))?;
            let mut names = vec![lead_name.as_str(), entropy, y];
            names.extend(targets.iter().copied().filter(|&o| o != y));
            let a = work.aligned(&names)?;
            let cols: Vec<(&str, &[f64])> = names[1..]
                .iter()
                .zip(&a.columns[1..])
                .map(|(n, c)| (*n, c.as_slice()))
                .collect();
            let mut fit = ols_with_intercept(&a.columns[0], &cols, lags)?;
            fit.dropped = a.dropped;
            Ok(fit)
        })
        .collect()
}
