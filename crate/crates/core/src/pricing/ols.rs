use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Designs with a larger condition number are rejected as singular.
pub const SINGULAR_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum StdErrors {
    /// Homoskedastic `s^2 (X'X)^-1`.
    #[default]
    Ols,
    /// Newey-West with Bartlett weights over `lags` lags.
    NeweyWest { lags: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionFit {
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub t_stats: Vec<f64>,
    pub residuals: Vec<f64>,
    pub r_squared: f64,
    pub r_squared_adj: f64,
    pub n_obs: usize,
    pub condition_number: f64,
    /// Residuals vanish to rounding; standard errors are zero and t-stats
    /// are reported as 0 for zero coefficients and infinite otherwise.
    pub exact_fit: bool,
}

impl RegressionFit {
    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.position(name).map(|i| self.coefficients[i])
    }

    pub fn t_stat(&self, name: &str) -> Option<f64> {
        self.position(name).map(|i| self.t_stats[i])
    }

    pub fn std_error(&self, name: &str) -> Option<f64> {
        self.position(name).map(|i| self.std_errors[i])
    }

    fn position(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n.eq_ignore_ascii_case(name))
    }
}

/// Least-squares solution through the SVD; returns `(beta, (X'X)^-1, condition number)`.
pub(crate) fn solve(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>, f64)> {
    let p = x.ncols();
    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let cond = if smin > 0.0 {
        smax / smin
    } else {
        f64::INFINITY
    };
    if cond.is_nan() || cond > SINGULAR_CONDITION || smax == 0.0 {
        return Err(Error::SingularDesign(cond));
    }
    let u = svd.u.as_ref().expect("requested U");
    let v_t = svd.v_t.as_ref().expect("requested V^T");
    let uty = u.transpose() * y;
    let scaled = DVector::from_iterator(
        p,
        uty.iter()
            .zip(svd.singular_values.iter())
            .map(|(a, s)| a / s),
    );
    let beta = v_t.transpose() * scaled;
    let inv_s2 = DMatrix::from_diagonal(&svd.singular_values.map(|s| 1.0 / (s * s)));
    let xtx_inv = v_t.transpose() * inv_s2 * v_t;
    Ok((beta, xtx_inv, cond))
}

/// OLS of `y` on the columns of `x` (include a column of ones for an intercept).
pub fn ols(
    y: &[f64],
    x: &DMatrix<f64>,
    names: Vec<String>,
    se: StdErrors,
) -> Result<RegressionFit> {
    let (n, p) = x.shape();
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            left: y.len(),
            right: n,
        });
    }
    if names.len() != p {
        return Err(Error::DimensionMismatch {
            left: names.len(),
            right: p,
        });
    }
    if n <= p {
        return Err(Error::InsufficientSpan { t: n, nk: p });
    }
    let yv = DVector::from_column_slice(y);
    let (beta, xtx_inv, cond) = solve(&yv, x)?;
    let resid = &yv - x * &beta;
    let ssr = resid.norm_squared();
    let ybar = yv.mean();
    let sst: f64 = yv.iter().map(|v| (v - ybar).powi(2)).sum();
    let scale = yv.norm().max(f64::MIN_POSITIVE);
    let exact_fit = resid.norm() <= 1e-10 * scale;

    let cov = if exact_fit {
        DMatrix::zeros(p, p)
    } else {
        match se {
            StdErrors::Ols => &xtx_inv * (ssr / (n - p) as f64),
            StdErrors::NeweyWest { lags } => {
                let mut meat = DMatrix::zeros(p, p);
                let scores: Vec<DVector<f64>> =
                    (0..n).map(|t| x.row(t).transpose() * resid[t]).collect();
                for s in &scores {
                    meat += s * s.transpose();
                }
                for l in 1..=lags.min(n - 1) {
                    let w = 1.0 - l as f64 / (lags + 1) as f64;
                    for t in l..n {
                        let g = &scores[t] * scores[t - l].transpose();
                        meat += (&g + g.transpose()) * w;
                    }
                }
                &xtx_inv * meat * &xtx_inv
            }
        }
    };
    let std_errors: Vec<f64> = (0..p).map(|i| cov[(i, i)].max(0.0).sqrt()).collect();
    let t_stats = beta
        .iter()
        .zip(&std_errors)
        .map(|(&b, &s)| {
            if s > 0.0 {
                b / s
            } else if b.abs() <= 1e-12 * scale {
                0.0
            } else {
                b.signum() * f64::INFINITY
            }
        })
        .collect();
    let r_squared = if sst > 0.0 {
        1.0 - ssr / sst
    } else if exact_fit {
        1.0
    } else {
        0.0
    };
    let r_squared_adj = 1.0 - (1.0 - r_squared) * (n - 1) as f64 / (n - p) as f64;
    Ok(RegressionFit {
        names,
        coefficients: beta.iter().copied().collect(),
        std_errors,
        t_stats,
        residuals: resid.iter().copied().collect(),
        r_squared,
        r_squared_adj,
        n_obs: n,
        condition_number: cond,
        exact_fit,
    })
}

/// `[1, columns...]` as a `T x (1 + K)` design.
pub fn design_with_intercept(columns: &[&[f64]]) -> DMatrix<f64> {
    let t = columns.first().map_or(0, |c| c.len());
    DMatrix::from_fn(t, columns.len() + 1, |i, j| {
        if j == 0 {
            1.0
        } else {
            columns[j - 1][i]
        }
    })
}
