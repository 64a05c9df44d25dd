use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::ols::solve;
use crate::error::{Error, Result};
use crate::score::{ScoreKind, ScorePanel};
use crate::stats::two_sided_t_p;

const DEMEAN_TOL: f64 = 1e-13;
const DEMEAN_MAX_ITER: usize = 100_000;
const ABSORBED: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeSpec {
    #[default]
    FirmYear,
    IndustryYear,
}

impl std::fmt::Display for FeSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FeSpec::FirmYear => "firm-year",
            FeSpec::IndustryYear => "industry-year",
        })
    }
}

impl std::str::FromStr for FeSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "firm-year" => Ok(FeSpec::FirmYear),
            "industry-year" => Ok(FeSpec::IndustryYear),
            _ => Err(Error::invalid(format!(
                "unknown fixed-effects spec {s:?} (firm-year | industry-year)"
            ))),
        }
    }
}

/// Long-format firm-year observations: a dependent value and named regressors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeData {
    pub firms: Vec<String>,
    pub years: Vec<i32>,
    pub industries: Vec<String>,
    pub y: Vec<f64>,
    pub names: Vec<String>,
    /// `x[j][i]`: regressor `j` for observation `i`.
    pub x: Vec<Vec<f64>>,
}

impl FeData {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    fn validate(&self) -> Result<()> {
        let n = self.y.len();
        for len in [self.firms.len(), self.years.len(), self.industries.len()]
            .into_iter()
            .chain(self.x.iter().map(Vec::len))
        {
            if len != n {
                return Err(Error::DimensionMismatch {
                    left: len,
                    right: n,
                });
            }
        }
        if self.names.len() != self.x.len() {
            return Err(Error::DimensionMismatch {
                left: self.names.len(),
                right: self.x.len(),
            });
        }
        if self
            .y
            .iter()
            .chain(self.x.iter().flatten())
            .any(|v| !v.is_finite())
        {
            return Err(Error::invalid("non-finite value in the regression panel"));
        }
        Ok(())
    }

    /// Joins firm-year scores of `kind` (mean over the firm's filings that
    /// year) with the characteristics table.
    pub fn from_scores(
        scores: &ScorePanel,
        kind: &ScoreKind,
        chars: &FirmYearTable,
    ) -> Result<Self> {
        let mut acc: BTreeMap<(String, i32), (f64, usize)> = BTreeMap::new();
        for row in scores.rows().filter(|r| &r.kind == kind) {
            use chrono::Datelike;
            let e = acc
                .entry((row.firm_id.clone(), row.filing_date.year()))
                .or_insert((0.0, 0));
            e.0 += row.value;
            e.1 += 1;
        }
        let mut data = FeData {
            names: chars.names.clone(),
            x: vec![Vec::new(); chars.names.len()],
            ..Default::default()
        };
        for ((firm, year), (sum, count)) in acc {
            let Some((industry, values)) = chars.rows.get(&(firm.clone(), year)) else {
                continue;
            };
            data.firms.push(firm);
            data.years.push(year);
            data.industries.push(industry.clone());
            data.y.push(sum / count as f64);
            for (col, v) in data.x.iter_mut().zip(values) {
                col.push(*v);
            }
        }
        if data.is_empty() {
            return Err(Error::Misaligned(
                "no firm-year has both a score and characteristics".into(),
            ));
        }
        Ok(data)
    }
}

/// Firm-year characteristics: `firm_id, year, industry, <numeric columns...>`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FirmYearTable {
    pub names: Vec<String>,
    pub rows: BTreeMap<(String, i32), (String, Vec<f64>)>,
}

impl FirmYearTable {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file, &path.display().to_string())
    }

    pub fn from_reader(reader: impl Read, source: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() < 4
            || &headers[0] != "firm_id"
            || &headers[1] != "year"
            || &headers[2] != "industry"
        {
            return Err(Error::parse(
                source,
                "expected columns firm_id, year, industry, then characteristics",
            ));
        }
        let names: Vec<String> = headers.iter().skip(3).map(str::to_owned).collect();
        let mut rows = BTreeMap::new();
        for (line, record) in rdr.records().enumerate() {
            let record = record?;
            let at = |msg: String| Error::parse(source, format!("row {}: {msg}", line + 2));
            if record.len() != headers.len() {
                return Err(at(format!(
                    "expected {} fields, found {}",
                    headers.len(),
                    record.len()
                )));
            }
            let year: i32 = record[1]
                .parse()
                .map_err(|_| at(format!("bad year {:?}", &record[1])))?;
            let values = record
                .iter()
                .skip(3)
                .map(|c| c.parse::<f64>().map_err(|_| at(format!("bad value {c:?}"))))
                .collect::<Result<Vec<_>>>()?;
            let key = (record[0].to_owned(), year);
            if rows.insert(key, (record[2].to_owned(), values)).is_some() {
                return Err(Error::DuplicateKey(format!("{} {year}", &record[0])));
            }
        }
        Ok(Self { names, rows })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("firm_id,year,industry");
        for n in &self.names {
            out.push(',');
            out.push_str(n);
        }
        out.push('\n');
        for ((firm, year), (industry, values)) in &self.rows {
            out.push_str(&format!("{firm},{year},{industry}"));
            for v in values {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeFit {
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    /// Clustered by firm, CR0 scaled by `G/(G-1)`.
    pub std_errors: Vec<f64>,
    pub t_stats: Vec<f64>,
    pub p_values: Vec<f64>,
    /// Homoskedastic errors with the absorbed degrees of freedom removed.
    pub std_errors_unclustered: Vec<f64>,
    pub r_squared_within: f64,
    pub n_obs: usize,
    pub n_clusters: usize,
    /// Regressors constant within the fixed-effect groups.
    pub dropped: Vec<String>,
}

fn group_ids<T: Ord + Clone>(keys: &[T]) -> (Vec<usize>, usize) {
    let mut map = BTreeMap::new();
    let ids = keys
        .iter()
        .map(|k| {
            let next = map.len();
            *map.entry(k.clone()).or_insert(next)
        })
        .collect();
    (ids, map.len())
}

fn demean_once(v: &mut [f64], ids: &[usize], n_groups: usize) {
    let mut sum = vec![0.0; n_groups];
    let mut cnt = vec![0usize; n_groups];
    for (x, &g) in v.iter().zip(ids) {
        sum[g] += x;
        cnt[g] += 1;
    }
    for (x, &g) in v.iter_mut().zip(ids) {
        *x -= sum[g] / cnt[g] as f64;
    }
}

/// Removes both sets of group means by alternating projections.
fn demean(v: &[f64], a: &(Vec<usize>, usize), b: &(Vec<usize>, usize)) -> Vec<f64> {
    let mut out = v.to_vec();
    let scale = 1.0 + v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    for _ in 0..DEMEAN_MAX_ITER {
        let before = out.clone();
        demean_once(&mut out, &a.0, a.1);
        demean_once(&mut out, &b.0, b.1);
        let change = out
            .iter()
            .zip(&before)
            .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        if change <= DEMEAN_TOL * scale {
            return out;
        }
    }
    warn!("fixed-effect demeaning stopped before reaching tolerance");
    out
}

/// Regression of `y` on the regressors after absorbing two-way fixed effects.
pub fn fe_determinants(data: &FeData, spec: FeSpec) -> Result<FeFit> {
    data.validate()?;
    let n = data.len();
    let first = match spec {
        FeSpec::FirmYear => group_ids(&data.firms),
        FeSpec::IndustryYear => group_ids(&data.industries),
    };
    let years = group_ids(&data.years);
    let clusters = group_ids(&data.firms);

    let y = demean(&data.y, &first, &years);
    let mut names = Vec::new();
    let mut cols = Vec::new();
    let mut dropped = Vec::new();
    for (name, x) in data.names.iter().zip(&data.x) {
        let d = demean(x, &first, &years);
        let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm(&d) <= ABSORBED * norm(x).max(f64::MIN_POSITIVE) {
            warn!("regressor {name} is absorbed by the fixed effects and dropped");
            dropped.push(name.clone());
        } else {
            names.push(name.clone());
            cols.push(d);
        }
    }
    let p = cols.len();
    if p == 0 {
        return Err(Error::invalid(
            "every regressor is absorbed by the fixed effects",
        ));
    }
    let dof_fe = first.1 + years.1 - 1;
    if n <= p + dof_fe {
        return Err(Error::InsufficientSpan {
            t: n,
            nk: p + dof_fe,
        });
    }
    let x = DMatrix::from_fn(n, p, |i, j| cols[j][i]);
    let yv = DVector::from_column_slice(&y);
    let (beta, xtx_inv, _) = solve(&yv, &x)?;
    let e = &yv - &x * &beta;
    let ssr = e.norm_squared();
    let sst = yv.norm_squared();

    let g = clusters.1;
    let mut meat = DMatrix::zeros(p, p);
    let mut score = vec![DVector::<f64>::zeros(p); g];
    for i in 0..n {
        score[clusters.0[i]] += x.row(i).transpose() * e[i];
    }
    for s in &score {
        meat += s * s.transpose();
    }
    let correction = if g > 1 {
        g as f64 / (g - 1) as f64
    } else {
        f64::NAN
    };
    let v_cl = &xtx_inv * meat * &xtx_inv * correction;
    let s2 = ssr / (n - p - dof_fe) as f64;
    let std_errors: Vec<f64> = (0..p).map(|j| v_cl[(j, j)].max(0.0).sqrt()).collect();
    let std_errors_unclustered = (0..p).map(|j| (xtx_inv[(j, j)] * s2).sqrt()).collect();
    let t_stats: Vec<f64> = beta.iter().zip(&std_errors).map(|(b, s)| b / s).collect();
    // clustered inference uses G - 1 degrees of freedom
    let p_values = t_stats
        .iter()
        .map(|&t| two_sided_t_p(t, (g.max(2) - 1) as f64))
        .collect();
    Ok(FeFit {
        names,
        coefficients: beta.iter().copied().collect(),
        std_errors,
        t_stats,
        p_values,
        std_errors_unclustered,
        r_squared_within: if sst > 0.0 { 1.0 - ssr / sst } else { f64::NAN },
        n_obs: n,
        n_clusters: g,
        dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_by_three() -> FeData {
        let firms = ["a", "a", "a", "b", "b", "b", "c", "c", "c"];
        let years = [1, 2, 3, 1, 2, 3, 1, 2, 3];
        FeData {
            firms: firms.iter().map(|s| s.to_string()).collect(),
            years: years.to_vec(),
            industries: firms.iter().map(|_| "x".to_string()).collect(),
            y: vec![1.0, 2.5, 2.0, 0.3, 1.9, 4.0, 2.2, 0.1, 3.3],
            names: vec!["size".into(), "age".into()],
            x: vec![
                vec![0.5, 1.1, 2.0, -0.3, 0.8, 1.7, 0.0, 0.4, 2.9],
                vec![3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0, 5.0],
            ],
        }
    }

    /// Balanced two-way demeaning in closed form: v - firm mean - year mean + grand mean.
    fn by_hand(v: &[f64]) -> Vec<f64> {
        let grand = v.iter().sum::<f64>() / 9.0;
        (0..9)
            .map(|i| {
                let (f, t) = (i / 3, i % 3);
                let fm = (0..3).map(|k| v[f * 3 + k]).sum::<f64>() / 3.0;
                let tm = (0..3).map(|k| v[k * 3 + t]).sum::<f64>() / 3.0;
                v[i] - fm - tm + grand
            })
            .collect()
    }

    #[test]
    fn matches_manual_two_step() {
        let d = three_by_three();
        let fit = fe_determinants(&d, FeSpec::FirmYear).unwrap();
        let (y, x1, x2) = (by_hand(&d.y), by_hand(&d.x[0]), by_hand(&d.x[1]));
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
        let (a11, a12, a22) = (dot(&x1, &x1), dot(&x1, &x2), dot(&x2, &x2));
        let (b1, b2) = (dot(&x1, &y), dot(&x2, &y));
        let det = a11 * a22 - a12 * a12;
        let c1 = (a22 * b1 - a12 * b2) / det;
        let c2 = (a11 * b2 - a12 * b1) / det;
        assert!((fit.coefficients[0] - c1).abs() < 1e-10);
        assert!((fit.coefficients[1] - c2).abs() < 1e-10);
        assert_eq!(fit.n_clusters, 3);
    }

    #[test]
    fn firm_dummy_absorbed() {
        let mut d = three_by_three();
        d.names.push("is_a".into());
        d.x.push(
            d.firms
                .iter()
                .map(|f| if f == "a" { 1.0 } else { 0.0 })
                .collect(),
        );
        let fit = fe_determinants(&d, FeSpec::FirmYear).unwrap();
        assert_eq!(fit.dropped, vec!["is_a"]);
        assert_eq!(fit.names, vec!["size", "age"]);
    }

    #[test]
    fn table_join() {
        let text =
            "firm_id,year,industry,size\nA,2020,Tech,1.5\nA,2021,Tech,1.7\nB,2020,Shops,0.2\n";
        let t = FirmYearTable::from_reader(text.as_bytes(), "t").unwrap();
        let mut scores = ScorePanel::new();
        for (firm, date, v) in [
            ("A", "2020-03-01", 0.4),
            ("A", "2021-03-01", 0.5),
            ("B", "2020-02-01", 0.1),
            ("C", "2020-02-01", 0.3),
        ] {
            scores
                .insert(crate::score::ScoreRow {
                    firm_id: firm.into(),
                    filing_date: crate::time::parse_date(date).unwrap(),
                    kind: ScoreKind::Overall,
                    value: v,
                })
                .unwrap();
        }
        let d = FeData::from_scores(&scores, &ScoreKind::Overall, &t).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.x[0], vec![1.5, 1.7, 0.2]);
        let dup = "firm_id,year,industry,size\nA,2020,Tech,1.5\nA,2020,Tech,1.7\n";
        assert!(FirmYearTable::from_reader(dup.as_bytes(), "t").is_err());
    }
}
