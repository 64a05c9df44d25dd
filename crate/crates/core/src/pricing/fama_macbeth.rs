use std::collections::BTreeMap;

use log::{info, warn};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::factors::FactorPanel;
use super::ols::{ols, StdErrors};
use super::timeseries::{rolling_betas, DEFAULT_BETA_WINDOW};
use crate::error::{Error, Result};
use crate::portfolio::{quantile_sort, CapTiming, ReturnsPanel};
use crate::score::ScoreHistory;
use crate::stats::{mean, mean_test, MeanTest};
use crate::time::Month;

/// Cross-sectional condition number above which a month is flagged as collinear.
pub const COLLINEAR_CONDITION: f64 = 1e8;

/// Name given to the aggregated score exposure.
pub const SCORE_PREMIUM: &str = "Cyber";

pub const DEFAULT_FM_PORTFOLIOS: usize = 20;

/// One month of the second pass: portfolio returns and their lagged exposures
/// (`exposures[p][j]`, without the intercept).
#[derive(Debug, Clone, PartialEq)]
pub struct CrossSection {
    pub month: Month,
    pub returns: Vec<f64>,
    pub exposures: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FmResult {
    /// `Constant` followed by the exposure names.
    pub names: Vec<String>,
    /// Months that entered the averages.
    pub months: Vec<Month>,
    /// `premia[t][j]`, aligned with `months` and `names`.
    pub premia: Vec<Vec<f64>>,
    pub tests: Vec<MeanTest>,
    pub mean_r_squared_adj: f64,
    /// Mean absolute cross-sectional residual.
    pub mape: f64,
    /// Included months whose design was nearly collinear.
    pub collinear: Vec<Month>,
    /// Months dropped because the design was singular or too small.
    pub skipped: Vec<Month>,
}

impl FmResult {
    pub fn test(&self, name: &str) -> Option<&MeanTest> {
        self.names
            .iter()
            .position(|n| n.eq_ignore_ascii_case(name))
            .map(|i| &self.tests[i])
    }

    pub fn series(&self, name: &str) -> Option<Vec<f64>> {
        let j = self
            .names
            .iter()
            .position(|n| n.eq_ignore_ascii_case(name))?;
        Some(self.premia.iter().map(|row| row[j]).collect())
    }
}

/// Monthly cross-sectional OLS of returns on `[1, exposures]`, then a t-test
/// of each premium's time-series mean.
pub fn fm_second_pass(sections: &[CrossSection], names: &[String]) -> Result<FmResult> {
    let k = names.len();
    let mut labels = vec!["Constant".to_string()];
    labels.extend(names.iter().cloned());
    let mut out = FmResult {
        names: labels.clone(),
        months: Vec::new(),
        premia: Vec::new(),
        tests: Vec::new(),
        mean_r_squared_adj: f64::NAN,
        mape: f64::NAN,
        collinear: Vec::new(),
        skipped: Vec::new(),
    };
    let mut r2 = Vec::new();
    let mut abs_err = Vec::new();
    for cs in sections {
        let n = cs.returns.len();
        if cs.exposures.len() != n {
            return Err(Error::DimensionMismatch {
                left: n,
                right: cs.exposures.len(),
            });
        }
        if let Some(bad) = cs.exposures.iter().find(|e| e.len() != k) {
            return Err(Error::DimensionMismatch {
                left: bad.len(),
                right: k,
            });
        }
        let x = DMatrix::from_fn(
            n,
            k + 1,
            |i, j| if j == 0 { 1.0 } else { cs.exposures[i][j - 1] },
        );
        let fit = match ols(&cs.returns, &x, labels.clone(), StdErrors::Ols) {
            Ok(fit) => fit,
            Err(Error::SingularDesign(_) | Error::InsufficientSpan { .. }) => {
                warn!("cross-section {} skipped: singular or too small", cs.month);
                out.skipped.push(cs.month);
                continue;
            }
            Err(e) => return Err(e),
        };
        if fit.condition_number > COLLINEAR_CONDITION {
            warn!(
                "cross-section {} nearly collinear (condition {:.3e})",
                cs.month, fit.condition_number
            );
            out.collinear.push(cs.month);
        }
        r2.push(fit.r_squared_adj);
        abs_err.push(mean(
            &fit.residuals.iter().map(|e| e.abs()).collect::<Vec<_>>(),
        ));
        out.months.push(cs.month);
        out.premia.push(fit.coefficients);
    }
    if out.months.len() < 2 {
        return Err(Error::InsufficientSpan {
            t: out.months.len(),
            nk: 2,
        });
    }
    out.tests = (0..=k)
        .map(|j| mean_test(&out.premia.iter().map(|row| row[j]).collect::<Vec<_>>()))
        .collect::<Result<_>>()?;
    out.mean_r_squared_adj = mean(&r2);
    out.mape = mean(&abs_err);
    Ok(out)
}

/// Which exposures enter the second pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FmConfig {
    /// Factors whose rolling betas are aggregated to portfolios.
    pub factors: Vec<String>,
    /// Include the portfolio-weighted score as an exposure.
    pub include_score: bool,
    pub n_portfolios: usize,
    pub window: usize,
    pub timing: CapTiming,
}

impl FmConfig {
    pub fn new(factors: &[&str], include_score: bool) -> Self {
        Self {
            factors: factors.iter().map(|f| f.to_string()).collect(),
            include_score,
            n_portfolios: DEFAULT_FM_PORTFOLIOS,
            window: DEFAULT_BETA_WINDOW,
            timing: CapTiming::default(),
        }
    }

    /// The five specifications of the standard table: market, score alone,
    /// market plus score, and the four- and five-factor sets plus score.
    pub fn standard_models() -> Vec<(String, FmConfig)> {
        vec![
            ("M.1".into(), FmConfig::new(&["Mkt"], false)),
            ("M.2".into(), FmConfig::new(&[], true)),
            ("M.3".into(), FmConfig::new(&["Mkt"], true)),
            (
                "M.4".into(),
                FmConfig::new(&["Mkt", "HML", "SMB", "UMD"], true),
            ),
            (
                "M.5".into(),
                FmConfig::new(&["Mkt", "HML", "SMB", "RMW", "CMA"], true),
            ),
        ]
    }

    pub fn exposure_names(&self) -> Vec<String> {
        let mut names = self.factors.clone();
        if self.include_score {
            names.push(SCORE_PREMIUM.to_string());
        }
        names
    }
}

/// Full two-pass procedure: rolling firm betas, score-sorted portfolios with
/// weights at `t`, exposures aggregated from betas dated `t-1` and the latest
/// score filed before `t`, then [`fm_second_pass`].
pub fn fama_macbeth(
    panel: &ReturnsPanel,
    scores: &ScoreHistory,
    factors: &FactorPanel,
    config: &FmConfig,
) -> Result<FmResult> {
    if config.factors.is_empty() && !config.include_score {
        return Err(Error::invalid(
            "a Fama-MacBeth model needs at least one exposure",
        ));
    }
    let names: Vec<&str> = config.factors.iter().map(String::as_str).collect();
    for n in &names {
        factors.column(n)?;
    }
    let assets: Vec<&str> = panel.assets().collect();
    let betas: BTreeMap<&str, BTreeMap<Month, Vec<f64>>> = if names.is_empty() {
        BTreeMap::new()
    } else {
        assets
            .par_iter()
            .map(|&a| {
                let series: BTreeMap<Month, f64> = panel
                    .series(a)
                    .into_iter()
                    .flatten()
                    .map(|(m, o)| (*m, o.excess_return))
                    .collect();
                rolling_betas(&series, factors, &names, config.window).map(|b| (a, b))
            })
            .collect::<Result<_>>()?
    };

    let portfolios = quantile_sort(panel, scores, config.n_portfolios, config.timing)?;
    let Some(first) = portfolios.first() else {
        return Err(Error::invalid("no portfolios formed"));
    };
    let mut sections = Vec::new();
    let mut incomplete = 0usize;
    'month: for (idx, &month) in first.months.iter().enumerate() {
        let prior = month.prev();
        let cutoff = month.first_day();
        let mut returns = Vec::with_capacity(portfolios.len());
        let mut exposures = Vec::with_capacity(portfolios.len());
        for p in &portfolios {
            debug_assert_eq!(p.months[idx], month);
            let mut acc = vec![0.0; names.len()];
            let mut covered = 0.0;
            let mut score = 0.0;
            for (asset, w) in &p.holdings[idx] {
                if !names.is_empty() {
                    let Some(b) = betas.get(asset.as_str()).and_then(|m| m.get(&prior)) else {
                        continue;
                    };
                    for (a, v) in acc.iter_mut().zip(b) {
                        *a += w * v;
                    }
                }
                let Some((_, s)) = scores.latest_before(asset, cutoff) else {
                    continue;
                };
                covered += w;
                score += w * s;
            }
            if covered <= 0.0 {
                incomplete += 1;
                continue 'month;
            }
            // renormalize over constituents with a beta history
            let mut e: Vec<f64> = acc.iter().map(|a| a / covered).collect();
            if config.include_score {
                e.push(score / covered);
            }
            returns.push(p.returns[idx]);
            exposures.push(e);
        }
        sections.push(CrossSection {
            month,
            returns,
            exposures,
        });
    }
    if incomplete > 0 {
        info!("{incomplete} months lacked lagged betas for some portfolio and were left out");
    }
    fm_second_pass(&sections, &config.exposure_names())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn m(i: i64) -> Month {
        Month::new(2001, 1).unwrap().offset(i)
    }

    fn sections(seed: u64, gamma: f64, noise: f64, t: usize) -> Vec<CrossSection> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lam: Vec<f64> = (0..20).map(|p| 0.1 + 0.04 * p as f64).collect();
        (0..t)
            .map(|i| {
                let g0 = 0.005 + 0.01 * rng.sample::<f64, _>(StandardNormal);
                let returns = lam
                    .iter()
                    .map(|l| g0 + gamma * l + noise * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                CrossSection {
                    month: m(i as i64),
                    returns,
                    exposures: lam.iter().map(|&l| vec![l]).collect(),
                }
            })
            .collect()
    }

    #[test]
    fn exact_pricing_recovers_premium() {
        let secs = sections(1, 0.0004, 0.0, 60);
        let fit = fm_second_pass(&secs, &["Cyber".into()]).unwrap();
        assert!(fit
            .series("Cyber")
            .unwrap()
            .iter()
            .all(|g| (g - 0.0004).abs() < 1e-14));
        assert!(fit.mape < 1e-15);
        assert_eq!(fit.months.len(), 60);
    }

    #[test]
    fn permutation_invariant() {
        let secs = sections(2, 0.001, 0.002, 36);
        let names = vec!["Cyber".to_string()];
        let a = fm_second_pass(&secs, &names).unwrap();
        let permuted: Vec<CrossSection> = secs
            .iter()
            .map(|cs| {
                let order: Vec<usize> = (0..20).rev().collect();
                CrossSection {
                    month: cs.month,
                    returns: order.iter().map(|&i| cs.returns[i]).collect(),
                    exposures: order.iter().map(|&i| cs.exposures[i].clone()).collect(),
                }
            })
            .collect();
        let b = fm_second_pass(&permuted, &names).unwrap();
        for (x, y) in a.premia.iter().flatten().zip(b.premia.iter().flatten()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_months_skipped_and_flagged() {
        let mut secs = sections(3, 0.001, 0.002, 10);
        for e in &mut secs[4].exposures {
            e[0] = 0.5;
        }
        let fit = fm_second_pass(&secs, &["Cyber".into()]).unwrap();
        assert_eq!(fit.skipped, vec![m(4)]);
        assert_eq!(fit.months.len(), 9);
    }

    #[test]
    fn zero_premium_rarely_rejected() {
        let rejections = (0..200)
            .filter(|&s| {
                let fit =
                    fm_second_pass(&sections(100 + s, 0.0, 0.01, 60), &["Cyber".into()]).unwrap();
                fit.test("Cyber").unwrap().t_stat.abs() >= 1.96
            })
            .count();
        assert!(rejections <= 20, "{rejections} of 200");
    }

    #[test]
    fn full_two_pass_on_simulated_panel() {
        use crate::portfolio::ReturnObs;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let t = 96;
        let months: Vec<Month> = (0..t).map(|i| m(i as i64)).collect();
        let mkt: Vec<f64> = (0..t)
            .map(|_| 0.006 + 0.04 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let factors =
            FactorPanel::new(months.clone(), vec!["Mkt".into()], vec![mkt.clone()], None).unwrap();
        let mut panel = ReturnsPanel::new();
        let mut rows = Vec::new();
        for f in 0..120 {
            let firm = format!("F{f:03}");
            let beta = 0.6 + 0.8 * rng.random::<f64>();
            let score: f64 = rng.random::<f64>() * 0.8;
            for year in 0..9 {
                rows.push((
                    firm.clone(),
                    chrono::NaiveDate::from_ymd_opt(2000 + year, 12, 15).unwrap(),
                    score,
                ));
            }
            for (i, &mo) in months.iter().enumerate() {
                let r = 0.002 * score + beta * mkt[i] + 0.03 * rng.sample::<f64, _>(StandardNormal);
                panel
                    .insert(
                        firm.clone(),
                        mo,
                        ReturnObs::new(r, Some(1.0 + rng.random::<f64>())),
                    )
                    .unwrap();
            }
        }
        let scores = ScoreHistory::from_rows(rows);
        let fit = fama_macbeth(&panel, &scores, &factors, &FmConfig::new(&["Mkt"], true)).unwrap();
        assert_eq!(fit.names, vec!["Constant", "Mkt", "Cyber"]);
        // first usable month: window of 24 ending at t-1, t a sort month
        assert_eq!(fit.months[0], m(24));
        let g = fit.test("Cyber").unwrap();
        assert!((g.mean - 0.002).abs() < 2.5 * g.std_error, "{g:?}");
    }
}
