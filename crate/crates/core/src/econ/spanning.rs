use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::linalg::{collinear_columns, design};
use super::ols::ols_with_intercept;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanningR2 {
    pub name: String,
    pub r2: f64,
    /// Regressors removed because they were exact linear combinations of the rest.
    pub dropped: Vec<String>,
}

/// R² of each series regressed on all others with an intercept, in ascending order.
pub fn spanning_r2(names: &[String], series: &[Vec<f64>]) -> Result<Vec<SpanningR2>> {
    if names.len() != series.len() {
        return Err(Error::Dimension("names do not match series".into()));
    }
    if series.len() < 2 {
        return Err(Error::Invalid("spanning needs at least two series".into()));
    }
    let n = series[0].len();
    if series.iter().any(|s| s.len() != n) {
        return Err(Error::Dimension("series differ in length".into()));
    }
    let mut out: Vec<SpanningR2> = (0..series.len())
        .into_par_iter()
        .map(|i| {
            let mut others: Vec<usize> = (0..series.len()).filter(|&j| j != i).collect();
            let mut dropped = Vec::new();
            loop {
                let cols: Vec<&[f64]> = others.iter().map(|&j| series[j].as_slice()).collect();
                let x = design(n, &cols, true)?;
                let bad = collinear_columns(&x);
                // column 0 is the intercept; drop the last offending series
                match bad.iter().rev().find(|&&c| c > 0) {
                    Some(&c) => {
                        let j = others.remove(c - 1);
                        log::warn!("spanning {}: dropping collinear regressor {}", names[i], names[j]);
                        dropped.push(names[j].clone());
                    }
                    None => break,
                }
            }
            let cols: Vec<(&str, &[f64])> = others.iter().map(|&j| (names[j].as_str(), series[j].as_slice())).collect();
            let fit = ols_with_intercept(&series[i], &cols, 0)?;
            Ok(SpanningR2 {
                name: names[i].clone(),
                r2: fit.r2,
                dropped,
            })
        })
        .collect::<Result<_>>()?;
    out.sort_by(|a, b| a.r2.total_cmp(&b.r2).then_with(|| a.name.cmp(&b.name)));
    Ok(out)
}
