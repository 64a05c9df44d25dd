//! Score-sorted portfolios, rebalanced quarterly and value-weighted.
//!
//! At the start of each quarter every firm with a score dated strictly
//! before the quarter and a market cap at the end of the previous quarter is
//! ranked; the ranking fixes membership and weights for the three months
//! that follow. A constituent without a return in some month (delisted) drops
//! out of that month and the remaining weights are rescaled.

mod panel;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::score::ScoreHistory;
use crate::stats;
use crate::time::Month;

pub use panel::{ReturnObs, ReturnsPanel};

/// Largest drop between adjacent inner-sort means still treated as monotone
/// (three basis points, in decimal return units).
pub const MONOTONE_TOLERANCE: f64 = 0.0003;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CapTiming {
    /// Weights fixed at formation from the cap at the previous quarter end.
    #[default]
    PriorQuarterEnd,
    /// Sensitivity variant: each month reweights by the previous month's cap.
    PriorMonthEnd,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioSeries {
    pub name: String,
    pub months: Vec<Month>,
    pub returns: Vec<f64>,
    /// Effective weights per month, summing to one.
    pub holdings: Vec<Vec<(String, f64)>>,
}

impl PortfolioSeries {
    pub fn len(&self) -> usize {
        self.months.len()
    }

    pub fn is_empty(&self) -> bool {
        self.months.is_empty()
    }

    pub fn mean(&self) -> f64 {
        stats::mean(&self.returns)
    }

    pub fn get(&self, month: Month) -> Option<f64> {
        self.months
            .binary_search(&month)
            .ok()
            .map(|i| self.returns[i])
    }

    pub fn as_map(&self) -> BTreeMap<Month, f64> {
        self.months
            .iter()
            .copied()
            .zip(self.returns.iter().copied())
            .collect()
    }
}

/// Positional bins after sorting by (key, id); a run of tied keys that would
/// straddle a boundary is placed wholly in the lowest bin it touches.
pub fn assign_bins<S: AsRef<str>>(items: &[(f64, S)], n_bins: usize) -> Vec<usize> {
    let n = items.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        items[a]
            .0
            .total_cmp(&items[b].0)
            .then_with(|| items[a].1.as_ref().cmp(items[b].1.as_ref()))
    });
    let mut bins = vec![0; n];
    let mut pos = 0;
    while pos < n {
        let key = items[order[pos]].0;
        let mut end = pos;
        while end < n && items[order[end]].0 == key {
            end += 1;
        }
        let bin = pos * n_bins / n;
        for &i in &order[pos..end] {
            bins[i] = bin;
        }
        pos = end;
    }
    bins
}

/// A firm eligible at one formation date.
#[derive(Debug, Clone)]
struct Candidate {
    asset: String,
    score: f64,
    cap: f64,
    characteristic: f64,
}

fn quarter_starts(months: &[Month]) -> Vec<Month> {
    let (Some(&first), Some(&last)) = (months.first(), months.last()) else {
        return Vec::new();
    };
    Month::range(first.quarter_start(), last)
        .filter(|m| m.is_quarter_start())
        .collect()
}

fn candidates(
    panel: &ReturnsPanel,
    scores: &ScoreHistory,
    q: Month,
    characteristic: Option<&str>,
) -> Vec<Candidate> {
    let formation = q.first_day();
    let prior = q.prev();
    scores
        .firms()
        .filter_map(|firm| {
            let (date, score) = scores.latest_before(firm, formation)?;
            debug_assert!(date < formation);
            let obs = panel.get(firm, prior)?;
            let cap = obs.market_cap?;
            let characteristic = match characteristic {
                Some(name) => *obs.characteristics.get(name)?,
                None => 0.0,
            };
            Some(Candidate {
                asset: firm.to_owned(),
                score,
                cap,
                characteristic,
            })
        })
        .collect()
}

/// Monthly returns for `groups` (formed at quarter `q`) over the quarter's months.
fn hold_quarter(
    panel: &ReturnsPanel,
    q: Month,
    last: Month,
    groups: &[Vec<&Candidate>],
    timing: CapTiming,
    series: &mut [PortfolioSeries],
) -> Result<()> {
    for month in Month::range(q, q.offset(2).min(last)) {
        for (g, members) in groups.iter().enumerate() {
            let mut weighted = Vec::with_capacity(members.len());
            for c in members {
                let Some(obs) = panel.get(&c.asset, month) else {
                    continue;
                };
                let w = match timing {
                    CapTiming::PriorQuarterEnd => Some(c.cap),
                    CapTiming::PriorMonthEnd => {
                        panel.get(&c.asset, month.prev()).and_then(|o| o.market_cap)
                    }
                };
                if let Some(w) = w {
                    weighted.push((c.asset.clone(), w, obs.excess_return));
                }
            }
            let total: f64 = weighted.iter().map(|x| x.1).sum();
            if weighted.is_empty() || total <= 0.0 {
                return Err(Error::DegenerateSort(format!(
                    "portfolio {} has no constituent with a return in {month}",
                    series[g].name
                )));
            }
            let ret = weighted.iter().map(|(_, w, r)| w * r).sum::<f64>() / total;
            let s = &mut series[g];
            s.months.push(month);
            s.returns.push(ret);
            s.holdings.push(
                weighted
                    .into_iter()
                    .map(|(a, w, _)| (a, w / total))
                    .collect(),
            );
        }
    }
    Ok(())
}

fn new_series(names: impl IntoIterator<Item = String>) -> Vec<PortfolioSeries> {
    names
        .into_iter()
        .map(|name| PortfolioSeries {
            name,
            months: Vec::new(),
            returns: Vec::new(),
            holdings: Vec::new(),
        })
        .collect()
}

/// Sorts firms into `n_bins` score portfolios each quarter; `P{n_bins}` holds
/// the highest scores. Quarters with no eligible firm are skipped.
pub fn quantile_sort(
    panel: &ReturnsPanel,
    scores: &ScoreHistory,
    n_bins: usize,
    timing: CapTiming,
) -> Result<Vec<PortfolioSeries>> {
    if n_bins < 2 {
        return Err(Error::invalid("a sort needs at least two bins"));
    }
    let months = panel.months();
    let mut series = new_series((1..=n_bins).map(|b| format!("P{b}")));
    let Some(&last) = months.last() else {
        return Ok(series);
    };
    for q in quarter_starts(&months) {
        let cands = candidates(panel, scores, q, None);
        if cands.is_empty() {
            continue;
        }
        if cands.len() < n_bins {
            return Err(Error::DegenerateSort(format!(
                "{} eligible firms for {n_bins} bins in quarter {q}",
                cands.len()
            )));
        }
        let keys: Vec<(f64, &str)> = cands.iter().map(|c| (c.score, c.asset.as_str())).collect();
        let bins = assign_bins(&keys, n_bins);
        let mut groups = vec![Vec::new(); n_bins];
        for (c, &b) in cands.iter().zip(&bins) {
            groups[b].push(c);
        }
        if let Some(empty) = groups.iter().position(Vec::is_empty) {
            return Err(Error::DegenerateSort(format!(
                "bin P{} empty in quarter {q} (tied scores)",
                empty + 1
            )));
        }
        hold_quarter(panel, q, last, &groups, timing, &mut series)?;
    }
    Ok(series)
}

/// `top - bottom`, month by month.
pub fn long_short(top: &PortfolioSeries, bottom: &PortfolioSeries) -> Result<PortfolioSeries> {
    if top.months != bottom.months {
        return Err(Error::Misaligned(format!(
            "{} and {} cover different months",
            top.name, bottom.name
        )));
    }
    Ok(PortfolioSeries {
        name: format!("{}-{}", top.name, bottom.name),
        months: top.months.clone(),
        returns: top
            .returns
            .iter()
            .zip(&bottom.returns)
            .map(|(a, b)| a - b)
            .collect(),
        holdings: Vec::new(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DoubleSort {
    pub characteristic: String,
    /// `series[i][j]`: characteristic group `i`, score group `j` within it.
    pub series: Vec<Vec<PortfolioSeries>>,
    pub means: Vec<Vec<f64>>,
    /// Whether the score-sorted means of characteristic group `i` fail to be
    /// non-decreasing beyond [`MONOTONE_TOLERANCE`].
    pub flags: Vec<bool>,
}

/// Whether `means` drops by more than `tolerance` anywhere.
pub fn violates_monotone(means: &[f64], tolerance: f64) -> bool {
    means.windows(2).any(|w| w[1] < w[0] - tolerance)
}

/// Characteristic groups first, score groups within each.
pub fn double_sort(
    panel: &ReturnsPanel,
    scores: &ScoreHistory,
    characteristic: &str,
    n_outer: usize,
    n_inner: usize,
    timing: CapTiming,
) -> Result<DoubleSort> {
    if n_outer < 2 || n_inner < 2 {
        return Err(Error::invalid(
            "a double sort needs at least two groups per dimension",
        ));
    }
    let months = panel.months();
    let mut flat =
        new_series((1..=n_outer).flat_map(|o| (1..=n_inner).map(move |i| format!("Q{o}P{i}"))));
    if let Some(&last) = months.last() {
        for q in quarter_starts(&months) {
            let cands = candidates(panel, scores, q, Some(characteristic));
            if cands.is_empty() {
                continue;
            }
            let outer_keys: Vec<(f64, &str)> = cands
                .iter()
                .map(|c| (c.characteristic, c.asset.as_str()))
                .collect();
            let outer = assign_bins(&outer_keys, n_outer);
            let mut groups: Vec<Vec<&Candidate>> = vec![Vec::new(); n_outer * n_inner];
            for o in 0..n_outer {
                let members: Vec<&Candidate> = cands
                    .iter()
                    .zip(&outer)
                    .filter(|(_, &b)| b == o)
                    .map(|(c, _)| c)
                    .collect();
                if members.len() < n_inner {
                    return Err(Error::DegenerateSort(format!(
                        "characteristic group Q{} has {} firms for {n_inner} score groups in quarter {q}",
                        o + 1,
                        members.len()
                    )));
                }
                let inner_keys: Vec<(f64, &str)> = members
                    .iter()
                    .map(|c| (c.score, c.asset.as_str()))
                    .collect();
                for (c, i) in members.iter().zip(assign_bins(&inner_keys, n_inner)) {
                    groups[o * n_inner + i].push(c);
                }
            }
            if let Some(empty) = groups.iter().position(Vec::is_empty) {
                return Err(Error::DegenerateSort(format!(
                    "cell {} empty in quarter {q}",
                    flat[empty].name
                )));
            }
            hold_quarter(panel, q, last, &groups, timing, &mut flat)?;
        }
    }
    let mut series = Vec::with_capacity(n_outer);
    let mut it = flat.into_iter();
    for _ in 0..n_outer {
        series.push(it.by_ref().take(n_inner).collect::<Vec<_>>());
    }
    let means: Vec<Vec<f64>> = series
        .iter()
        .map(|row| row.iter().map(PortfolioSeries::mean).collect())
        .collect();
    let flags = means
        .iter()
        .map(|m| violates_monotone(m, MONOTONE_TOLERANCE))
        .collect();
    Ok(DoubleSort {
        characteristic: characteristic.to_owned(),
        series,
        means,
        flags,
    })
}

/// Annualized Sharpe ratio of monthly returns: `12 mean / (sqrt(12) sd)`.
pub fn sharpe(returns: &[f64]) -> Result<f64> {
    if returns.len() < 12 {
        return Err(Error::invalid(format!(
            "Sharpe ratio needs 12 months, got {}",
            returns.len()
        )));
    }
    let sd = stats::std_dev(returns);
    if stats::is_constant(returns) || sd.is_nan() || sd <= 0.0 {
        return Err(Error::ZeroVariance(
            "Sharpe ratio of a constant series".into(),
        ));
    }
    Ok(stats::mean(returns) * 12.0 / (sd * 12f64.sqrt()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesSummary {
    pub name: String,
    pub n: usize,
    pub mean: f64,
    pub std_dev: f64,
    pub t_stat: f64,
    pub sharpe: Option<f64>,
}

pub fn summarize(series: &PortfolioSeries) -> Result<SeriesSummary> {
    let t = stats::mean_test(&series.returns)?;
    Ok(SeriesSummary {
        name: series.name.clone(),
        n: series.len(),
        mean: t.mean,
        std_dev: stats::std_dev(&series.returns),
        t_stat: t.t_stat,
        sharpe: sharpe(&series.returns).ok(),
    })
}
