use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

use super::gmm::GmmEstimate;
use super::ols::RegressionFit;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    #[serde(rename = "+")]
    Positive,
    #[serde(rename = "-")]
    Negative,
}

impl Sign {
    /// Sign of a statistically significant t-statistic, `None` otherwise.
    pub fn of(t: f64, critical: f64) -> Option<Sign> {
        if t > critical {
            Some(Sign::Positive)
        } else if t < -critical {
            Some(Sign::Negative)
        } else {
            None
        }
    }
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sign::Positive => "+",
            Sign::Negative => "-",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Satisfied,
    NotSatisfied,
    NotEvaluable,
    Unmapped,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Satisfied => "satisfied",
            Verdict::NotSatisfied => "not satisfied",
            Verdict::NotEvaluable => "not evaluable",
            Verdict::Unmapped => "unmapped",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PremiumSign {
    pub test_assets: String,
    /// `None` when the factor is absent from this set's estimate.
    pub t_stat: Option<f64>,
    pub sign: Option<Sign>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignRow {
    pub factor: String,
    pub forecaster: Option<String>,
    pub forecast_t: Option<f64>,
    pub forecast_sign: Option<Sign>,
    pub premia: Vec<PremiumSign>,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignReport {
    pub significance: f64,
    pub critical_value: f64,
    pub rows: Vec<SignRow>,
}

impl SignReport {
    pub fn row(&self, factor: &str) -> Option<&SignRow> {
        self.rows.iter().find(|r| r.factor == factor)
    }
}

/// Two-sided normal critical value at `significance`.
pub fn critical_value(significance: f64) -> Result<f64> {
    if !(significance > 0.0 && significance < 1.0) {
        return Err(Error::Invalid(format!("significance {significance} outside (0, 1)")));
    }
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(n.inverse_cdf(1.0 - significance / 2.0))
}

/// Compares, for every factor priced in `premia`, the sign of its risk premium in each set of
/// test assets with the sign with which its mapped state variable forecasts market returns in
/// `forecast`. A mapped factor is satisfied when its forecaster is significant, at least one
/// premium is significant, and every significant premium has the forecaster's sign. With an
/// insignificant forecaster the check is not evaluable.
pub fn icapm_sign_check(
    forecast: &RegressionFit,
    premia: &[(String, GmmEstimate)],
    mapping: &[(String, String)],
    significance: f64,
) -> Result<SignReport> {
    let critical = critical_value(significance)?;
    let mut factors: Vec<&str> = Vec::new();
    for (_, est) in premia {
        for f in &est.factors {
            if !factors.contains(&f.as_str()) {
                factors.push(f);
            }
        }
    }
    let mut rows = Vec::with_capacity(factors.len());
    for factor in factors {
        let premia_signs: Vec<PremiumSign> = premia
            .iter()
            .map(|(set, est)| {
                let t = est.factor_index(factor).map(|k| est.lambda_t[k]);
                PremiumSign {
                    test_assets: set.clone(),
                    t_stat: t,
                    sign: t.and_then(|t| Sign::of(t, critical)),
                }
            })
            .collect();
        let Some((_, forecaster)) = mapping.iter().find(|(f, _)| f == factor) else {
            rows.push(SignRow {
                factor: factor.to_string(),
                forecaster: None,
                forecast_t: None,
                forecast_sign: None,
                premia: premia_signs,
                verdict: Verdict::Unmapped,
            });
            continue;
        };
        let t = forecast.t_of(forecaster)?;
        let forecast_sign = Sign::of(t, critical);
        let significant: Vec<Sign> = premia_signs.iter().filter_map(|p| p.sign).collect();
        let verdict = match forecast_sign {
            None => Verdict::NotEvaluable,
            Some(s) if !significant.is_empty() && significant.iter().all(|&p| p == s) => Verdict::Satisfied,
            Some(_) => Verdict::NotSatisfied,
        };
        rows.push(SignRow {
            factor: factor.to_string(),
            forecaster: Some(forecaster.clone()),
            forecast_t: Some(t),
            forecast_sign,
            premia: premia_signs,
            verdict,
        });
    }
    Ok(SignReport {
        significance,
        critical_value: critical,
        rows,
    })
}
