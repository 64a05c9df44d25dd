//! Bayesian comparison of factor subsets through marginal likelihoods of
//! nested multivariate regressions, evaluated from a cumulative cross-product
//! matrix so that expanding-window paths stay cheap.

use std::fmt;
use std::str::FromStr;

use log::info;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::factors::FactorPanel;
use crate::error::{Error, Result};
use crate::time::Month;

pub const DEFAULT_PRIOR: f64 = 1.25;
pub const DEFAULT_MIN_WINDOW: usize = 24;

/// How the prior scale `k` is derived from the prior multiple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KMode {
    /// `k = Sh^2 (prior^2 - 1) / N`: the prior multiple scales the attainable Sharpe ratio.
    #[default]
    Original,
    /// `k = Sh^2 (1 - prior^2) / N`, negative for any multiple above one.
    AsPrinted,
}

impl fmt::Display for KMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KMode::Original => "original",
            KMode::AsPrinted => "as-printed",
        })
    }
}

impl FromStr for KMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "original" => Ok(KMode::Original),
            "as-printed" => Ok(KMode::AsPrinted),
            _ => Err(Error::invalid(format!(
                "unknown k mode {s:?} (original | as-printed)"
            ))),
        }
    }
}

/// `ln|A|` through a Cholesky factor.
fn log_det(a: &DMatrix<f64>, what: &str) -> Result<f64> {
    let chol = a
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite(what.to_string()))?;
    Ok(2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

fn sub(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

/// Residual cross-product `Y'Y - Y'X (X'X)^-1 X'Y` and the coefficients,
/// with every block read from the cumulative `Z'Z`.
fn residual_block(
    zz: &DMatrix<f64>,
    y: &[usize],
    x: &[usize],
    what: &str,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let xx = sub(zz, x, x);
    let xy = sub(zz, x, y);
    let chol = xx
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite(format!("{what} regressors")))?;
    let b = chol.solve(&xy);
    let s = sub(zz, y, y) - xy.transpose() * &b;
    Ok((s, b))
}

/// Cumulative moments of `Z = [1, market, candidates...]`.
#[derive(Debug, Clone)]
struct Moments {
    zz: DMatrix<f64>,
    t: usize,
}

impl Moments {
    fn new(width: usize) -> Self {
        Self {
            zz: DMatrix::zeros(width, width),
            t: 0,
        }
    }

    fn push(&mut self, row: &[f64]) {
        let w = row.len();
        for a in 0..w {
            for b in 0..w {
                self.zz[(a, b)] += row[a] * row[b];
            }
        }
        self.t += 1;
    }

    /// Restricted block: `Y` on `X` with no intercept.
    fn log_ml_restricted(&self, y: &[usize], x: &[usize]) -> Result<f64> {
        if y.is_empty() {
            return Ok(0.0);
        }
        let (n, k, t) = (y.len(), x.len(), self.t);
        if t <= n + k {
            return Err(Error::InsufficientSpan { t, nk: n + k });
        }
        let (s, _) = residual_block(&self.zz, y, x, "restricted")?;
        let ld_x = log_det(&sub(&self.zz, x, x), "restricted X'X")?;
        let ld_s = log_det(&s, "restricted residual cross-product")?;
        Ok(-(n as f64 / 2.0) * ld_x - ((t - k) as f64 / 2.0) * ld_s)
    }

    /// Unrestricted block: `Y` on `[1, X]`; `K` counts the columns of `X`.
    fn log_ml_unrestricted(
        &self,
        y: &[usize],
        x: &[usize],
        prior: f64,
        mode: KMode,
    ) -> Result<f64> {
        if y.is_empty() {
            return Ok(0.0);
        }
        let (n, k, t) = (y.len(), x.len(), self.t);
        if t <= n + k + 1 {
            return Err(Error::InsufficientSpan { t, nk: n + k + 1 });
        }
        let tf = t as f64;
        let mut x1 = vec![0];
        x1.extend_from_slice(x);
        let (s, b) = residual_block(&self.zz, y, &x1, "unrestricted")?;
        let ld_x = log_det(&sub(&self.zz, x, x), "unrestricted X'X")?;
        let ld_s = log_det(&s, "unrestricted residual cross-product")?;

        // squared Sharpe ratio of X from ML moments
        let mu = sub(&self.zz, &[0], x).transpose() / tf;
        let omega = sub(&self.zz, x, x) / tf - &mu * mu.transpose();
        let sh2 = quad(&omega, &mu, "factor covariance")?;
        let alpha = DMatrix::from_iterator(n, 1, b.row(0).iter().copied());
        let sigma = &s / tf;
        let w = tf * quad(&sigma, &alpha, "residual covariance")? / (1.0 + sh2);
        let a = (1.0 + sh2) / tf;
        let kk = match mode {
            KMode::Original => sh2 * (prior * prior - 1.0) / n as f64,
            KMode::AsPrinted => sh2 * (1.0 - prior * prior) / n as f64,
        };
        let inner = 1.0 + a / (a + kk) * (w / tf);
        if a + kk <= 0.0 || 1.0 + kk / a <= 0.0 || inner <= 0.0 {
            return Err(Error::invalid(format!(
                "prior scale k = {kk:.3e} leaves the marginal likelihood undefined ({mode} mode)"
            )));
        }
        let ln_q = -((t - k) as f64 / 2.0) * inner.ln() - (n as f64 / 2.0) * (1.0 + kk / a).ln();
        Ok(-(n as f64 / 2.0) * ld_x - ((t - k) as f64 / 2.0) * ld_s + ln_q)
    }

    /// Columns of `Z` are `0` (ones), `1` (market), `2..` (candidates).
    fn log_ml(&self, mask: u32, n_cand: usize, prior: f64, mode: KMode) -> Result<f64> {
        let (inc, exc): (Vec<usize>, Vec<usize>) = (0..n_cand)
            .map(|c| c + 2)
            .partition(|c| mask & (1 << (c - 2)) != 0);
        let mut x_r = vec![1];
        x_r.extend_from_slice(&inc);
        Ok(self.log_ml_unrestricted(&inc, &[1], prior, mode)?
            + self.log_ml_restricted(&exc, &x_r)?)
    }
}

fn quad(m: &DMatrix<f64>, v: &DMatrix<f64>, what: &str) -> Result<f64> {
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

fn moments_of(market: &[f64], included: &[&[f64]], excluded: &[&[f64]]) -> Result<Moments> {
    let t = market.len();
    let cols: Vec<&[f64]> = included.iter().chain(excluded).copied().collect();
    if let Some(c) = cols.iter().find(|c| c.len() != t) {
        return Err(Error::DimensionMismatch {
            left: c.len(),
            right: t,
        });
    }
    let mut m = Moments::new(cols.len() + 2);
    let mut row = vec![1.0; cols.len() + 2];
    for i in 0..t {
        row[1] = market[i];
        for (j, c) in cols.iter().enumerate() {
            row[j + 2] = c[i];
        }
        m.push(&row);
    }
    Ok(m)
}

/// Log marginal likelihood of the model whose pricing factors are the market
/// plus `subset`, with `excluded` the remaining candidates. The term shared by
/// every subset (test assets given all factors) is omitted.
pub fn bs_marginal_likelihood(
    subset: &[&[f64]],
    excluded: &[&[f64]],
    market: &[f64],
    prior: f64,
    mode: KMode,
) -> Result<f64> {
    check_prior(prior)?;
    let m = moments_of(market, subset, excluded)?;
    let n = subset.len() + excluded.len();
    if n > 31 {
        return Err(Error::invalid("too many candidate factors"));
    }
    m.log_ml((1u32 << subset.len()) - 1, n, prior, mode)
}

fn check_prior(prior: f64) -> Result<()> {
    if prior > 1.0 && prior.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "prior multiple must exceed 1, got {prior}"
        )))
    }
}

/// Normalized probabilities under equal prior model weights, in log space.
pub fn posteriors_from_log_ml(log_ml: &[f64]) -> Result<Vec<f64>> {
    let max = log_ml.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::invalid("no subset has a finite marginal likelihood"));
    }
    let w: Vec<f64> = log_ml.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    Ok(w.into_iter().map(|v| v / total).collect())
}

/// Posterior at one sample end.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PosteriorPoint {
    pub month: Month,
    pub log_ml: Vec<f64>,
    pub probabilities: Vec<f64>,
    /// Per candidate: total probability of the subsets containing it.
    pub cumulative: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelPosterior {
    pub market: String,
    pub candidates: Vec<String>,
    /// Subset `j` includes candidate `c` when bit `c` of `j` is set.
    pub subsets: Vec<u32>,
    pub prior: f64,
    pub mode: KMode,
    /// Full-sample result last; earlier entries form the expanding path.
    pub path: Vec<PosteriorPoint>,
}

impl ModelPosterior {
    pub fn subset_name(&self, mask: u32) -> String {
        let mut parts = vec![self.market.clone()];
        parts.extend(
            self.candidates
                .iter()
                .enumerate()
                .filter(|(c, _)| mask & (1 << c) != 0)
                .map(|(_, n)| n.clone()),
        );
        parts.join("+")
    }

    pub fn last(&self) -> &PosteriorPoint {
        self.path
            .last()
            .expect("a posterior has at least one point")
    }

    pub fn cumulative_path(&self, candidate: &str) -> Option<Vec<f64>> {
        let c = self
            .candidates
            .iter()
            .position(|n| n.eq_ignore_ascii_case(candidate))?;
        Some(self.path.iter().map(|p| p.cumulative[c]).collect())
    }
}

/// Posterior probabilities of all `2^C` subsets of `candidates`, each joined
/// with `market`. With `expanding = Some(min_window)` the scan is repeated on
/// every sample `[start, T]` with at least `min_window` months.
pub fn bs_posteriors(
    factors: &FactorPanel,
    market: &str,
    candidates: &[&str],
    prior: f64,
    mode: KMode,
    expanding: Option<usize>,
) -> Result<ModelPosterior> {
    check_prior(prior)?;
    if candidates.len() > 16 {
        return Err(Error::invalid("at most 16 candidate factors"));
    }
    if candidates.iter().any(|c| c.eq_ignore_ascii_case(market)) {
        return Err(Error::invalid(
            "the market is always included and cannot be a candidate",
        ));
    }
    info!("Bayesian factor scan: prior {prior}, k mode {mode}");
    let mkt = factors.column(market)?;
    let cols: Vec<&[f64]> = candidates
        .iter()
        .map(|c| factors.column(c))
        .collect::<Result<_>>()?;
    let n_cand = candidates.len();
    let subsets: Vec<u32> = (0..1u32 << n_cand).collect();
    let min_window = expanding.unwrap_or(factors.len());
    if min_window == 0 || min_window > factors.len() {
        return Err(Error::InsufficientSpan {
            t: factors.len(),
            nk: min_window,
        });
    }

    let mut moments = Moments::new(n_cand + 2);
    let mut row = vec![1.0; n_cand + 2];
    let mut path = Vec::new();
    for (i, &month) in factors.months().iter().enumerate() {
        row[1] = mkt[i];
        for (j, c) in cols.iter().enumerate() {
            row[j + 2] = c[i];
        }
        moments.push(&row);
        if i + 1 < min_window {
            continue;
        }
        let log_ml = subsets
            .iter()
            .map(|&s| moments.log_ml(s, n_cand, prior, mode))
            .collect::<Result<Vec<_>>>()?;
        let probabilities = posteriors_from_log_ml(&log_ml)?;
        let cumulative = (0..n_cand)
            .map(|c| {
                subsets
                    .iter()
                    .zip(&probabilities)
                    .filter(|(s, _)| *s & (1 << c) != 0)
                    .map(|(_, p)| p)
                    .sum()
            })
            .collect();
        path.push(PosteriorPoint {
            month,
            log_ml,
            probabilities,
            cumulative,
        });
    }
    Ok(ModelPosterior {
        market: market.to_string(),
        candidates: candidates.iter().map(|c| c.to_string()).collect(),
        subsets,
        prior,
        mode,
        path,
    })
}
