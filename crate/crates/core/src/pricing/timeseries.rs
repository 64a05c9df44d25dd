use std::collections::BTreeMap;

use log::debug;
use nalgebra::{DMatrix, DVector};

use super::factors::{FactorModel, FactorPanel};
use super::ols::{design_with_intercept, ols, RegressionFit, StdErrors, SINGULAR_CONDITION};
use crate::error::{Error, Result};
use crate::portfolio::PortfolioSeries;
use crate::time::Month;

pub const DEFAULT_BETA_WINDOW: usize = 24;

/// Time-series regression of `returns` (aligned with `factors`) on a model's
/// factors plus an intercept; the intercept is named `alpha`.
pub fn ts_alpha(
    returns: &[f64],
    factors: &FactorPanel,
    model: FactorModel,
    se: StdErrors,
) -> Result<RegressionFit> {
    ts_regression(returns, factors, model.factors(), se)
}

/// [`ts_alpha`] for any factor list.
pub fn ts_regression(
    returns: &[f64],
    factors: &FactorPanel,
    names: &[&str],
    se: StdErrors,
) -> Result<RegressionFit> {
    if returns.len() != factors.len() {
        return Err(Error::Misaligned(format!(
            "{} returns against {} factor months",
            returns.len(),
            factors.len()
        )));
    }
    let cols = names
        .iter()
        .map(|n| factors.column(n))
        .collect::<Result<Vec<_>>>()?;
    let k = cols.len();
    if returns.len() <= k + 1 {
        return Err(Error::InsufficientSpan {
            t: returns.len(),
            nk: k + 1,
        });
    }
    let mut labels = vec!["alpha".to_string()];
    labels.extend(names.iter().map(|n| n.to_string()));
    ols(returns, &design_with_intercept(&cols), labels, se)
}

/// [`ts_alpha`] on a portfolio series, over the months it shares with `factors`.
pub fn ts_alpha_series(
    series: &PortfolioSeries,
    factors: &FactorPanel,
    model: FactorModel,
    se: StdErrors,
) -> Result<RegressionFit> {
    let (panel, y) = factors.align(&series.as_map())?;
    ts_alpha(&y, &panel, model, se)
}

/// Slopes of a small regression with intercept through the normal equations.
/// `None` when the design is numerically singular.
pub(crate) fn quick_slopes(y: &[f64], cols: &[&[f64]]) -> Option<Vec<f64>> {
    let p = cols.len() + 1;
    let n = y.len();
    let mut xtx = DMatrix::zeros(p, p);
    let mut xty = DVector::zeros(p);
    let mut row = vec![1.0; p];
    for t in 0..n {
        for (j, c) in cols.iter().enumerate() {
            row[j + 1] = c[t];
        }
        for a in 0..p {
            xty[a] += row[a] * y[t];
            for b in 0..=a {
                xtx[(a, b)] += row[a] * row[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            xtx[(b, a)] = xtx[(a, b)];
        }
    }
    let eig = xtx.clone().symmetric_eigenvalues();
    let (lo, hi): (f64, f64) = (eig.min(), eig.max());
    // the condition number of X'X is the square of that of X
    if lo.is_nan() || lo <= 0.0 || hi / lo > SINGULAR_CONDITION * SINGULAR_CONDITION {
        return None;
    }
    let beta = xtx.cholesky()?.solve(&xty);
    Some(beta.iter().skip(1).copied().collect())
}

/// Slopes on `names` from OLS over each run of `window` consecutive months
/// ending at month `T`, dated `T`. Months without a full window are skipped.
pub fn rolling_betas(
    asset: &BTreeMap<Month, f64>,
    factors: &FactorPanel,
    names: &[&str],
    window: usize,
) -> Result<BTreeMap<Month, Vec<f64>>> {
    if window <= names.len() + 1 {
        return Err(Error::invalid(format!(
            "window {window} too short for {} factors plus intercept",
            names.len()
        )));
    }
    let cols = names
        .iter()
        .map(|n| factors.column(n))
        .collect::<Result<Vec<_>>>()?;
    let months = factors.months();
    let present: Vec<Option<f64>> = months.iter().map(|m| asset.get(m).copied()).collect();
    let mut out = BTreeMap::new();
    let mut run = 0usize;
    for end in 0..months.len() {
        run = if present[end].is_some() { run + 1 } else { 0 };
        if run < window {
            continue;
        }
        let start = end + 1 - window;
        let y: Vec<f64> = present[start..=end]
            .iter()
            .map(|v| v.expect("inside a full run"))
            .collect();
        let x: Vec<&[f64]> = cols.iter().map(|c| &c[start..=end]).collect();
        match quick_slopes(&y, &x) {
            Some(b) => {
                out.insert(months[end], b);
            }
            None => debug!("singular beta window ending {}", months[end]),
        }
    }
    Ok(out)
}
