use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use super::ols::solve;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GRSResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
    pub t: usize,
    pub k: usize,
    pub mean_r_squared: f64,
    pub alphas: Vec<f64>,
}

/// Joint test that the intercepts of `portfolios` (N series) on `factors`
/// (K series) are zero. Residual and factor covariances use the divisor T.
pub fn grs_test<P: AsRef<[f64]>, F: AsRef<[f64]>>(
    portfolios: &[P],
    factors: &[F],
) -> Result<GRSResult> {
    let n = portfolios.len();
    let k = factors.len();
    let t = portfolios.first().map_or(0, |p| p.as_ref().len());
    if n == 0 || k == 0 {
        return Err(Error::invalid(
            "GRS needs at least one portfolio and one factor",
        ));
    }
    for s in portfolios
        .iter()
        .map(AsRef::as_ref)
        .chain(factors.iter().map(AsRef::as_ref))
    {
        if s.len() != t {
            return Err(Error::DimensionMismatch {
                left: s.len(),
                right: t,
            });
        }
    }
    if t <= n + k {
        return Err(Error::InsufficientSpan { t, nk: n + k });
    }
    let tf = t as f64;
    let x = DMatrix::from_fn(t, k + 1, |i, j| {
        if j == 0 {
            1.0
        } else {
            factors[j - 1].as_ref()[i]
        }
    });

    let mut alphas = DVector::zeros(n);
    let mut resid = DMatrix::zeros(t, n);
    let mut r2 = 0.0;
    for (p, series) in portfolios.iter().enumerate() {
        let y = DVector::from_column_slice(series.as_ref());
        let (beta, _, _) = solve(&y, &x)?;
        let e = &y - &x * beta.clone();
        alphas[p] = beta[0];
        let ybar = y.mean();
        let sst: f64 = y.iter().map(|v| (v - ybar).powi(2)).sum();
        r2 += if sst > 0.0 {
            1.0 - e.norm_squared() / sst
        } else {
            1.0
        };
        resid.set_column(p, &e);
    }
    let sigma = resid.transpose() * &resid / tf;

    let fm = DMatrix::from_fn(t, k, |i, j| factors[j].as_ref()[i]);
    let mu = DVector::from_iterator(k, (0..k).map(|j| fm.column(j).mean()));
    let centered = DMatrix::from_fn(t, k, |i, j| fm[(i, j)] - mu[j]);
    let omega = centered.transpose() * &centered / tf;

    let a_quad = quad_form(&sigma, &alphas, "residual covariance")?;
    let m_quad = quad_form(&omega, &mu, "factor covariance")?;
    let statistic = ((t - n - k) as f64 / n as f64) * a_quad / (1.0 + m_quad);
    let dist = FisherSnedecor::new(n as f64, (t - n - k) as f64)
        .map_err(|e| Error::invalid(e.to_string()))?;
    let p_value = if statistic <= 0.0 {
        1.0
    } else {
        dist.sf(statistic).clamp(0.0, 1.0)
    };
    Ok(GRSResult {
        statistic,
        p_value,
        n,
        t,
        k,
        mean_r_squared: r2 / n as f64,
        alphas: alphas.iter().copied().collect(),
    })
}

/// `v' M^-1 v` through a Cholesky factor of `M`.
pub(crate) fn quad_form(m: &DMatrix<f64>, v: &DVector<f64>, what: &str) -> Result<f64> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite(what.to_string()))?;
    let z = chol
        .l()
        .solve_lower_triangular(v)
        .ok_or_else(|| Error::NotPositiveDefinite(what.to_string()))?;
    Ok(z.norm_squared())
}
