//! Per-filing cyber scores.
//!
//! Each filing paragraph is matched against the knowledgebase and keeps its
//! best cosine similarity; a filing's score is the mean of the largest
//! paragraph maxima. Restricting the knowledgebase to one tactic, or to the
//! tactics of one super-tactic, gives the sub-scores.

mod dictionary;
mod panel;

use std::collections::{BTreeMap, BTreeSet};

use chrono::{Datelike, NaiveDate};
use log::{info, warn};
use rayon::prelude::*;

use crate::embed::{dot, unit};
use crate::error::{Error, Result};
use crate::portfolio::ReturnsPanel;
use crate::stats;
use crate::tactic::{SuperTacticMap, Tactic};
use crate::textprep::Paragraph;
use crate::time::Month;

pub use dictionary::RISK_WORDS;
pub use panel::{ScoreHistory, ScoreKind, ScorePanel, ScoreRow};

pub const DEFAULT_TRIM: f64 = 0.99;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RiskDictionary {
    words: BTreeSet<String>,
}

impl RiskDictionary {
    pub fn new<I, S>(words: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let words: BTreeSet<String> = words
            .into_iter()
            .map(|w| w.as_ref().trim().to_lowercase())
            .filter(|w| !w.is_empty())
            .collect();
        if words.is_empty() {
            return Err(Error::invalid("empty risk dictionary"));
        }
        Ok(Self { words })
    }

    pub fn reference() -> Self {
        Self::new(RISK_WORDS).expect("built-in list is nonempty")
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn matches<S: AsRef<str>>(&self, tokens: &[S]) -> bool {
        tokens.iter().any(|t| self.contains(t.as_ref()))
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Knowledgebase paragraph vectors (normalized once) with their tactics.
#[derive(Debug, Clone)]
pub struct KnowledgeBase {
    units: Vec<Vec<f64>>,
    tactics: Vec<Tactic>,
}

impl KnowledgeBase {
    pub fn new<V: AsRef<[f64]>>(vectors: &[V], tactics: Vec<Tactic>) -> Result<Self> {
        if vectors.is_empty() {
            return Err(Error::invalid("empty knowledgebase"));
        }
        if vectors.len() != tactics.len() {
            return Err(Error::DimensionMismatch {
                left: vectors.len(),
                right: tactics.len(),
            });
        }
        let units = unit_rows(vectors)?;
        Ok(Self { units, tactics })
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.units[0].len()
    }

    pub fn tactics(&self) -> &[Tactic] {
        &self.tactics
    }

    /// Tactics with at least one paragraph.
    pub fn present_tactics(&self) -> BTreeSet<Tactic> {
        self.tactics.iter().copied().collect()
    }
}

fn unit_rows<V: AsRef<[f64]>>(vectors: &[V]) -> Result<Vec<Vec<f64>>> {
    let dim = vectors.first().map_or(0, |v| v.as_ref().len());
    vectors
        .iter()
        .map(|v| {
            let v = v.as_ref();
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    left: dim,
                    right: v.len(),
                });
            }
            unit(v)
        })
        .collect()
}

fn max_cosines(filing_units: &[Vec<f64>], kb_units: &[Vec<f64>]) -> Vec<f64> {
    filing_units
        .iter()
        .map(|p| {
            kb_units
                .iter()
                .map(|k| dot(p, k))
                .fold(f64::NEG_INFINITY, f64::max)
                .clamp(-1.0, 1.0)
        })
        .collect()
}

/// Highest cosine similarity of each filing paragraph to any paragraph of `kb`.
pub fn paragraph_maxima<V: AsRef<[f64]>, W: AsRef<[f64]>>(
    filing: &[V],
    kb: &[W],
) -> Result<Vec<f64>> {
    if kb.is_empty() {
        return Err(Error::invalid("empty knowledgebase subset"));
    }
    if filing.is_empty() {
        return Err(Error::invalid("filing has no paragraphs"));
    }
    let f = unit_rows(filing)?;
    let k = unit_rows(kb)?;
    if f[0].len() != k[0].len() {
        return Err(Error::DimensionMismatch {
            left: f[0].len(),
            right: k[0].len(),
        });
    }
    Ok(max_cosines(&f, &k))
}

/// Mean of the `ceil(trim * n)` largest maxima.
pub fn cyber_score(maxima: &[f64], trim: f64) -> Result<f64> {
    if maxima.is_empty() {
        return Err(Error::invalid("no paragraph maxima to score"));
    }
    if !(trim > 0.0 && trim <= 1.0) {
        return Err(Error::invalid(format!("trim {trim} must lie in (0, 1]")));
    }
    let mut sorted = maxima.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    // the small slack keeps 0.99 * 100 from rounding up to 100
    let keep = ((trim * sorted.len() as f64 - 1e-9).ceil() as usize).clamp(1, sorted.len());
    Ok(sorted[..keep].iter().sum::<f64>() / keep as f64)
}

/// Paragraph maxima with paragraphs lacking any dictionary word set to zero.
pub fn sentiment_maxima<V: AsRef<[f64]>, W: AsRef<[f64]>>(
    paragraphs: &[Paragraph],
    vectors: &[V],
    kb: &[W],
    dict: &RiskDictionary,
) -> Result<Vec<f64>> {
    if dict.is_empty() {
        return Err(Error::invalid("empty risk dictionary"));
    }
    if paragraphs.len() != vectors.len() {
        return Err(Error::DimensionMismatch {
            left: paragraphs.len(),
            right: vectors.len(),
        });
    }
    let maxima = paragraph_maxima(vectors, kb)?;
    Ok(gate(&maxima, paragraphs, dict))
}

fn gate(maxima: &[f64], paragraphs: &[Paragraph], dict: &RiskDictionary) -> Vec<f64> {
    maxima
        .iter()
        .zip(paragraphs)
        .map(|(&m, p)| if dict.matches(&p.tokens) { m } else { 0.0 })
        .collect()
}

/// A filing's paragraphs and their vectors, aligned.
#[derive(Debug, Clone)]
pub struct Filing {
    pub firm_id: String,
    pub filing_date: NaiveDate,
    pub paragraphs: Vec<Paragraph>,
    pub vectors: Vec<Vec<f64>>,
}

/// Overall, per-tactic, per-super-tactic and sentiment scores of one filing.
///
/// Tactics absent from `kb` get no row. Sub-score maxima are computed per
/// tactic once; coarser subsets take the pointwise max, which is exactly the
/// maximum over the union of their paragraphs.
pub fn score_filing(
    filing: &Filing,
    kb: &KnowledgeBase,
    groups: &SuperTacticMap,
    dict: &RiskDictionary,
    trim: f64,
) -> Result<Vec<ScoreRow>> {
    if filing.paragraphs.len() != filing.vectors.len() {
        return Err(Error::DimensionMismatch {
            left: filing.paragraphs.len(),
            right: filing.vectors.len(),
        });
    }
    if filing.vectors.is_empty() {
        return Err(Error::invalid(format!(
            "filing of {} on {} has no paragraphs",
            filing.firm_id, filing.filing_date
        )));
    }
    let units = unit_rows(&filing.vectors)?;
    if units[0].len() != kb.dim() {
        return Err(Error::DimensionMismatch {
            left: units[0].len(),
            right: kb.dim(),
        });
    }
    // per_tactic[t][p]: best match of paragraph p among tactic t's paragraphs
    let mut per_tactic = vec![vec![f64::NEG_INFINITY; units.len()]; Tactic::ALL.len()];
    for (p, u) in units.iter().enumerate() {
        for (k, t) in kb.units.iter().zip(&kb.tactics) {
            let c = dot(u, k).clamp(-1.0, 1.0);
            let slot = &mut per_tactic[t.index()][p];
            if c > *slot {
                *slot = c;
            }
        }
    }
    let present = kb.present_tactics();
    let pointwise_max = |tactics: &[Tactic]| -> Option<Vec<f64>> {
        let members: Vec<&Vec<f64>> = tactics
            .iter()
            .filter(|t| present.contains(t))
            .map(|t| &per_tactic[t.index()])
            .collect();
        if members.is_empty() {
            return None;
        }
        Some(
            (0..units.len())
                .map(|p| {
                    members
                        .iter()
                        .map(|m| m[p])
                        .fold(f64::NEG_INFINITY, f64::max)
                })
                .collect(),
        )
    };

    let row = |kind: ScoreKind, value: f64| ScoreRow {
        firm_id: filing.firm_id.clone(),
        filing_date: filing.filing_date,
        kind,
        value,
    };
    let overall = pointwise_max(&Tactic::ALL).expect("knowledgebase is nonempty");
    let mut rows = vec![row(ScoreKind::Overall, cyber_score(&overall, trim)?)];
    for t in Tactic::ALL {
        if present.contains(&t) {
            rows.push(row(
                ScoreKind::Tactic(t),
                cyber_score(&per_tactic[t.index()], trim)?,
            ));
        }
    }
    for g in 0..groups.len() {
        if let Some(m) = pointwise_max(&groups.members(g)) {
            rows.push(row(
                ScoreKind::SuperTactic(groups.name(g).to_owned()),
                cyber_score(&m, trim)?,
            ));
        }
    }
    let gated = gate(&overall, &filing.paragraphs, dict);
    rows.push(row(ScoreKind::Sentiment, cyber_score(&gated, trim)?));
    Ok(rows)
}

/// Scores every filing in parallel and merges them into one panel.
pub fn score_filings(
    filings: &[Filing],
    kb: &KnowledgeBase,
    groups: &SuperTacticMap,
    dict: &RiskDictionary,
    trim: f64,
) -> Result<ScorePanel> {
    let rows = filings
        .par_iter()
        .map(|f| score_filing(f, kb, groups, dict, trim))
        .collect::<Result<Vec<_>>>()?;
    let mut panel = ScorePanel::new();
    for r in rows {
        panel.extend(r)?;
    }
    Ok(panel)
}

#[derive(Debug, Clone, PartialEq)]
pub struct YearlyRow {
    pub year: i32,
    pub kind: ScoreKind,
    pub n: usize,
    pub mean: f64,
    /// Values at the requested percentiles, in request order.
    pub percentiles: Vec<f64>,
}

/// Cross-firm mean and percentiles per filing year and kind. `percentiles`
/// are fractions in [0, 1].
pub fn aggregate_yearly(panel: &ScorePanel, percentiles: &[f64]) -> Result<Vec<YearlyRow>> {
    if panel.is_empty() {
        return Err(Error::invalid("empty score panel"));
    }
    if let Some(p) = percentiles.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::invalid(format!("percentile {p} must lie in [0, 1]")));
    }
    let mut groups: BTreeMap<(i32, ScoreKind), Vec<f64>> = BTreeMap::new();
    for r in panel.rows() {
        groups
            .entry((r.filing_date.year(), r.kind))
            .or_default()
            .push(r.value);
    }
    Ok(groups
        .into_iter()
        .map(|((year, kind), values)| YearlyRow {
            year,
            kind,
            n: values.len(),
            mean: stats::mean(&values),
            percentiles: percentiles
                .iter()
                .map(|&p| stats::quantile(&values, p))
                .collect(),
        })
        .collect())
}

/// `var(r) - cov(r, m)^2 / var(m)`, floored at zero.
pub fn idiosyncratic_variance(asset: &[f64], market: &[f64]) -> Result<f64> {
    if asset.len() != market.len() {
        return Err(Error::DimensionMismatch {
            left: asset.len(),
            right: market.len(),
        });
    }
    let vm = stats::variance(market);
    if vm.is_nan() || vm <= 0.0 {
        return Err(Error::ZeroVariance("market returns".into()));
    }
    let c = stats::covariance(asset, market);
    Ok((stats::variance(asset) - c * c / vm).max(0.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdiosyncraticRow {
    pub kind: ScoreKind,
    pub n: usize,
    pub covariance: f64,
    pub correlation: f64,
}

pub const IDIOSYNCRATIC_WINDOW: usize = 60;

/// Covariance and correlation, per score kind, between filing scores and the
/// filer's idiosyncratic volatility over the `window` months before the filing
/// month. Filings without a full window are skipped.
pub fn idiosyncratic_stats(
    panel: &ScorePanel,
    returns: &ReturnsPanel,
    market: &BTreeMap<Month, f64>,
    window: usize,
) -> Result<Vec<IdiosyncraticRow>> {
    if window < 3 {
        return Err(Error::invalid(
            "idiosyncratic window must be at least 3 months",
        ));
    }
    let mut vol: BTreeMap<(String, NaiveDate), Option<f64>> = BTreeMap::new();
    let mut skipped = BTreeSet::new();
    for r in panel.rows() {
        let key = (r.firm_id.clone(), r.filing_date);
        if vol.contains_key(&key) {
            continue;
        }
        let end = Month::of_date(r.filing_date).prev();
        let start = end.offset(1 - window as i64);
        let mut a = Vec::with_capacity(window);
        let mut m = Vec::with_capacity(window);
        for month in Month::range(start, end) {
            match (returns.get(&r.firm_id, month), market.get(&month)) {
                (Some(obs), Some(&mk)) => {
                    a.push(obs.excess_return);
                    m.push(mk);
                }
                _ => break,
            }
        }
        let v = if a.len() == window {
            Some(idiosyncratic_variance(&a, &m)?.sqrt())
        } else {
            skipped.insert(r.firm_id.clone());
            None
        };
        vol.insert(key, v);
    }
    if !skipped.is_empty() {
        info!(
            "idiosyncratic volatility: {} firms lack a full {window}-month window for some filings",
            skipped.len()
        );
    }
    let mut pairs: BTreeMap<ScoreKind, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in panel.rows() {
        if let Some(Some(v)) = vol.get(&(r.firm_id.clone(), r.filing_date)) {
            let e = pairs.entry(r.kind).or_default();
            e.0.push(r.value);
            e.1.push(*v);
        }
    }
    Ok(pairs
        .into_iter()
        .map(|(kind, (s, v))| {
            let correlation = stats::correlation(&s, &v).unwrap_or_else(|| {
                warn!("correlation for {kind} undefined (zero variance); reported as 0");
                0.0
            });
            IdiosyncraticRow {
                n: s.len(),
                covariance: if s.len() > 1 {
                    stats::covariance(&s, &v)
                } else {
                    0.0
                },
                correlation,
                kind,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::portfolio::ReturnObs;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn d(s: &str) -> NaiveDate {
        crate::time::parse_date(s).unwrap()
    }

    fn para(tokens: &[&str]) -> Paragraph {
        Paragraph::new("f", 0, tokens.iter().map(|s| s.to_string()).collect())
    }

    #[test]
    fn maxima_examples() {
        let kb = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let m = paragraph_maxima(&[vec![0.0, 2.0]], &kb).unwrap();
        assert!((m[0] - 1.0).abs() < 1e-15);
        let single = paragraph_maxima(&[vec![1.0, 1.0], vec![1.0, 0.0]], &kb[..1]).unwrap();
        assert!((single[0] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert!(paragraph_maxima::<Vec<f64>, Vec<f64>>(&[vec![1.0, 0.0]], &[]).is_err());
    }

    #[test]
    fn maxima_match_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut rand_vecs = |n: usize| -> Vec<Vec<f64>> {
            (0..n)
                .map(|_| (0..4).map(|_| rng.random::<f64>() - 0.5).collect())
                .collect()
        };
        let f = rand_vecs(5);
        let k = rand_vecs(7);
        let m = paragraph_maxima(&f, &k).unwrap();
        for (i, fi) in f.iter().enumerate() {
            let mut best = f64::NEG_INFINITY;
            for kj in &k {
                let c = fi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>()
                    / (fi.iter().map(|a| a * a).sum::<f64>().sqrt()
                        * kj.iter().map(|a| a * a).sum::<f64>().sqrt());
                best = best.max(c);
            }
            assert!((m[i] - best).abs() < 1e-12);
        }
    }

    #[test]
    fn cyber_score_examples() {
        assert!((cyber_score(&[0.5, 0.5, 0.5], 0.99).unwrap() - 0.5).abs() < 1e-15);
        let mut v = vec![0.5; 100];
        v.push(0.99);
        // ceil(0.99 * 101) = 100 keeps the outlier and 99 of the 0.5s
        assert!((cyber_score(&v, 0.99).unwrap() - 0.5049).abs() < 1e-12);
        let w = [0.1, 0.4, 0.7];
        assert!((cyber_score(&w, 1.0).unwrap() - 0.4).abs() < 1e-15);
        // 0.99 * 100 is 99 exactly: drops one value
        let hundred: Vec<f64> = (0..100).map(|i| i as f64 / 100.0).collect();
        let expected = (1..100).map(|i| i as f64 / 100.0).sum::<f64>() / 99.0;
        assert!((cyber_score(&hundred, 0.99).unwrap() - expected).abs() < 1e-12);
        assert!(cyber_score(&[], 0.99).is_err());
        assert!(cyber_score(&[0.1], 0.0).is_err());
    }

    #[test]
    fn sentiment_gate() {
        let dict = RiskDictionary::reference();
        assert!(dict.contains("uncertainty"));
        let kb = vec![vec![1.0, 0.0]];
        let paras = [
            para(&["uncertainty", "breach"]),
            para(&["revenue", "growth"]),
        ];
        let vecs = vec![vec![1.0, 0.5], vec![1.0, 0.0]];
        let m = sentiment_maxima(&paras, &vecs, &kb, &dict).unwrap();
        assert!((m[0] - paragraph_maxima(&vecs[..1], &kb).unwrap()[0]).abs() < 1e-15);
        assert_eq!(m[1], 0.0);
        let none = sentiment_maxima(&paras[1..], &vecs[1..], &kb, &dict).unwrap();
        assert_eq!(cyber_score(&none, 0.99).unwrap(), 0.0);
        assert!(RiskDictionary::new(Vec::<String>::new()).is_err());
    }

    #[test]
    fn dictionary_is_lowercase_and_complete() {
        assert_eq!(RISK_WORDS.len(), 123);
        assert_eq!(RISK_WORDS.first(), Some(&"risk"));
        assert_eq!(RISK_WORDS.last(), Some(&"dubious"));
        assert!(RISK_WORDS
            .iter()
            .all(|w| w.chars().all(|c| c.is_ascii_lowercase())));
    }

    fn sample_kb(rng: &mut ChaCha8Rng) -> KnowledgeBase {
        let mut vectors = Vec::new();
        let mut tactics = Vec::new();
        for t in Tactic::ALL {
            for _ in 0..3 {
                vectors.push(
                    (0..8)
                        .map(|_| rng.random::<f64>() - 0.3)
                        .collect::<Vec<f64>>(),
                );
                tactics.push(t);
            }
        }
        KnowledgeBase::new(&vectors, tactics).unwrap()
    }

    #[test]
    fn overall_dominates_sub_scores() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let kb = sample_kb(&mut rng);
        let groups = SuperTacticMap::reference_grouping();
        let dict = RiskDictionary::reference();
        for f in 0..20 {
            let n = rng.random_range(1..12);
            let paragraphs: Vec<Paragraph> = (0..n)
                .map(|i| {
                    para(if i % 3 == 0 {
                        &["risk", "cyber"]
                    } else {
                        &["cyber"]
                    })
                })
                .collect();
            let vectors = (0..n)
                .map(|_| (0..8).map(|_| rng.random::<f64>() - 0.3).collect())
                .collect();
            let filing = Filing {
                firm_id: format!("F{f}"),
                filing_date: d("2020-02-01"),
                paragraphs,
                vectors,
            };
            let rows = score_filing(&filing, &kb, &groups, &dict, DEFAULT_TRIM).unwrap();
            assert_eq!(rows.len(), 1 + 14 + 4 + 1);
            let overall = rows[0].value;
            for r in &rows {
                assert!((-1.0..=1.0).contains(&r.value));
                assert!(r.value <= overall + 1e-15, "{} > overall", r.kind);
            }
        }
    }

    #[test]
    fn single_tactic_kb_equals_overall() {
        let kb =
            KnowledgeBase::new(&[vec![1.0, 0.2], vec![0.3, 1.0]], vec![Tactic::Impact; 2]).unwrap();
        let filing = Filing {
            firm_id: "A".into(),
            filing_date: d("2020-01-01"),
            paragraphs: vec![para(&["x"]), para(&["y"])],
            vectors: vec![vec![1.0, 0.0], vec![0.5, 0.5]],
        };
        let rows = score_filing(
            &filing,
            &kb,
            &SuperTacticMap::reference_grouping(),
            &RiskDictionary::reference(),
            0.99,
        )
        .unwrap();
        let overall = rows[0].value;
        let impact = rows
            .iter()
            .find(|r| r.kind == ScoreKind::Tactic(Tactic::Impact))
            .unwrap();
        assert_eq!(impact.value, overall);
        assert_eq!(
            rows.iter()
                .filter(|r| matches!(r.kind, ScoreKind::Tactic(_)))
                .count(),
            1
        );
    }

    #[test]
    fn duplicate_filings_rejected() {
        let kb = KnowledgeBase::new(&[vec![1.0, 0.0]], vec![Tactic::Impact]).unwrap();
        let f = Filing {
            firm_id: "A".into(),
            filing_date: d("2020-01-01"),
            paragraphs: vec![para(&["x"])],
            vectors: vec![vec![1.0, 1.0]],
        };
        let err = score_filings(
            &[f.clone(), f],
            &kb,
            &SuperTacticMap::reference_grouping(),
            &RiskDictionary::reference(),
            0.99,
        );
        assert!(matches!(err, Err(Error::DuplicateFiling { .. })));
    }

    #[test]
    fn yearly_means() {
        let mut p = ScorePanel::new();
        for (firm, v) in [("A", 0.4), ("B", 0.6)] {
            p.insert(ScoreRow {
                firm_id: firm.into(),
                filing_date: d("2019-03-01"),
                kind: ScoreKind::Overall,
                value: v,
            })
            .unwrap();
        }
        for (i, year) in (2020..2025).enumerate() {
            p.insert(ScoreRow {
                firm_id: "A".into(),
                filing_date: d(&format!("{year}-03-01")),
                kind: ScoreKind::Overall,
                value: 0.5 + 0.01 * i as f64,
            })
            .unwrap();
        }
        let rows = aggregate_yearly(&p, &[0.5]).unwrap();
        assert!((rows[0].mean - 0.5).abs() < 1e-15);
        assert!((rows[1].mean - 0.5).abs() < 1e-15);
        assert!(rows[1..].windows(2).all(|w| w[1].mean > w[0].mean));
    }

    #[test]
    fn idiosyncratic_variance_of_pure_beta_is_zero() {
        let m: Vec<f64> = (0..60)
            .map(|i| ((i * 7) % 11) as f64 / 100.0 - 0.05)
            .collect();
        let a: Vec<f64> = m.iter().map(|x| 1.3 * x).collect();
        assert!(idiosyncratic_variance(&a, &m).unwrap() < 1e-18);
    }

    #[test]
    fn planted_volatility_link_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let start = Month::new(2010, 1).unwrap();
        let months: Vec<Month> = Month::range(start, start.offset(71)).collect();
        let market: BTreeMap<Month, f64> = months
            .iter()
            .map(|&m| (m, rng.random::<f64>() * 0.1 - 0.05))
            .collect();
        let mut returns = ReturnsPanel::new();
        let mut panel = ScorePanel::new();
        for f in 0..40 {
            let score = 0.3 + 0.01 * f as f64;
            let vol = 0.01 + 0.002 * f as f64;
            for &m in &months {
                let r = market[&m] + vol * (rng.random::<f64>() - 0.5) * 3.4;
                returns
                    .insert(format!("F{f}"), m, ReturnObs::new(r, Some(1.0)))
                    .unwrap();
            }
            for kind in [ScoreKind::Overall, ScoreKind::Sentiment] {
                let value = if kind == ScoreKind::Overall {
                    score
                } else {
                    0.2
                };
                panel
                    .insert(ScoreRow {
                        firm_id: format!("F{f}"),
                        filing_date: d("2015-03-15"),
                        kind,
                        value,
                    })
                    .unwrap();
            }
            // a filing too early for a full window
            panel
                .insert(ScoreRow {
                    firm_id: format!("F{f}"),
                    filing_date: d("2011-03-15"),
                    kind: ScoreKind::Overall,
                    value: score,
                })
                .unwrap();
        }
        let rows = idiosyncratic_stats(&panel, &returns, &market, IDIOSYNCRATIC_WINDOW).unwrap();
        let overall = rows.iter().find(|r| r.kind == ScoreKind::Overall).unwrap();
        assert_eq!(overall.n, 40);
        assert!(overall.correlation > 0.8 && overall.covariance > 0.0);
        let flat = rows
            .iter()
            .find(|r| r.kind == ScoreKind::Sentiment)
            .unwrap();
        assert_eq!(flat.correlation, 0.0);
    }
}
