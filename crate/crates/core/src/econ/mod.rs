//! Regression and asset-pricing machinery applied to the monthly entropy series.

mod forecast;
mod gmm;
mod innovations;
pub mod linalg;
mod macro_forecast;
mod mimic;
mod ols;
mod panel;
mod sign;
mod spanning;

pub use forecast::{
    add_return_columns, cumulative_return, cumulative_window, is_forecast, oos_forecast, oos_forecast_series,
    oos_r2, OosRecord, OosResult, SampleEnd, HORIZON, TARGET,
};
pub use gmm::{fama_macbeth_gmm, GmmEstimate};
pub use innovations::{ar_innovations, longest_run, panel_innovations, InnovationSeries};
pub use macro_forecast::{macro_forecast, MACRO_TARGETS};
pub use mimic::{mimicking_portfolio, MimicFrequency, MimickingPortfolio};
pub use ols::{hac_mean, ols_hac, ols_with_intercept, RegressionFit, CONST};
pub use panel::{Aligned, Frequency, PanelDate, TimeSeriesPanel, Unit};
pub use sign::{critical_value, icapm_sign_check, PremiumSign, Sign, SignReport, SignRow, Verdict};
pub use spanning::{spanning_r2, SpanningR2};
