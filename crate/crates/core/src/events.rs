//! Market-model event studies and Welch mean-difference tests.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{mean, two_sided_t_p, variance};
use crate::time::parse_date;

pub const DEFAULT_ESTIMATION_DAYS: usize = 252;
pub const DEFAULT_WINDOWS: [(i32, i32); 2] = [(-1, 1), (-1, 3)];

/// Sorted, unique trading days.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TradingCalendar {
    days: Vec<NaiveDate>,
}

impl TradingCalendar {
    pub fn new(mut days: Vec<NaiveDate>) -> Result<Self> {
        days.sort();
        if let Some(w) = days.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::DuplicateKey(format!("trading day {}", w[0])));
        }
        Ok(Self { days })
    }

    /// One ISO-8601 date per line; blank lines and `#` lines are ignored.
    pub fn from_text(text: &str) -> Result<Self> {
        let days = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(parse_date)
            .collect::<Result<Vec<_>>>()?;
        Self::new(days)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text).map_err(|e| Error::parse(path.display().to_string(), e.to_string()))
    }

    pub fn days(&self) -> &[NaiveDate] {
        &self.days
    }

    pub fn position(&self, day: NaiveDate) -> Option<usize> {
        self.days.binary_search(&day).ok()
    }

    pub fn to_text(&self) -> String {
        self.days.iter().map(|d| format!("{d}\n")).collect()
    }
}

/// Daily returns per asset, read from `asset_id, date, return`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DailyReturns {
    series: BTreeMap<String, BTreeMap<NaiveDate, f64>>,
}

impl DailyReturns {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, asset: impl Into<String>, date: NaiveDate, value: f64) -> Result<()> {
        let asset = asset.into();
        if !value.is_finite() {
            return Err(Error::invalid(format!(
                "non-finite return for {asset} on {date}"
            )));
        }
        if self
            .series
            .entry(asset.clone())
            .or_default()
            .insert(date, value)
            .is_some()
        {
            return Err(Error::DuplicateKey(format!("{asset} {date}")));
        }
        Ok(())
    }

    pub fn get(&self, asset: &str) -> Result<&BTreeMap<NaiveDate, f64>> {
        self.series
            .get(asset)
            .ok_or_else(|| Error::invalid(format!("no daily returns for {asset:?}")))
    }

    pub fn assets(&self) -> impl Iterator<Item = &str> {
        self.series.keys().map(String::as_str)
    }

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
        if headers.iter().collect::<Vec<_>>() != ["asset_id", "date", "return"] {
            return Err(Error::parse(
                source,
                "expected columns asset_id, date, return",
            ));
        }
        let mut out = Self::new();
        for (line, record) in rdr.records().enumerate() {
            let record = record?;
            let at = |msg: String| Error::parse(source, format!("row {}: {msg}", line + 2));
            let date = parse_date(&record[1]).map_err(|e| at(e.to_string()))?;
            let v: f64 = record[2]
                .parse()
                .map_err(|_| at(format!("bad return {:?}", &record[2])))?;
            out.insert(&record[0], date, v)
                .map_err(|e| at(e.to_string()))?;
        }
        Ok(out)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("asset_id,date,return\n");
        for (asset, s) in &self.series {
            for (d, v) in s {
                out.push_str(&format!("{asset},{d},{v}\n"));
            }
        }
        out
    }
}

/// Event-study settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventConfig {
    pub event_date: NaiveDate,
    #[serde(default = "default_windows")]
    pub windows: Vec<(i32, i32)>,
    #[serde(default = "default_estimation_days")]
    pub estimation_days: usize,
}

fn default_windows() -> Vec<(i32, i32)> {
    DEFAULT_WINDOWS.to_vec()
}

fn default_estimation_days() -> usize {
    DEFAULT_ESTIMATION_DAYS
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventWindowResult {
    pub window: (i32, i32),
    pub car: f64,
    /// `CAR / (sigma * sqrt(L))` with sigma the estimation-residual standard deviation.
    pub t_stat: f64,
    pub p_value: f64,
    pub days: usize,
}

fn aligned(
    asset: &BTreeMap<NaiveDate, f64>,
    market: &BTreeMap<NaiveDate, f64>,
    day: NaiveDate,
) -> Result<(f64, f64)> {
    match (asset.get(&day), market.get(&day)) {
        (Some(&a), Some(&m)) => Ok((a, m)),
        _ => Err(Error::Misaligned(format!(
            "missing asset or market return on trading day {day}"
        ))),
    }
}

/// Cumulative abnormal returns around `event_date` (offset 0) for each
/// `(start, end)` window of trading-day offsets. The market model is fitted
/// with an intercept over the `estimation_days` trading days before the
/// earliest window day.
pub fn car(
    asset: &BTreeMap<NaiveDate, f64>,
    market: &BTreeMap<NaiveDate, f64>,
    calendar: &TradingCalendar,
    event_date: NaiveDate,
    windows: &[(i32, i32)],
    estimation_days: usize,
) -> Result<Vec<EventWindowResult>> {
    let zero = calendar.position(event_date).ok_or_else(|| {
        Error::NotTradingDay(format!(
            "{event_date} is not in the trading calendar; resolve t=0 explicitly"
        ))
    })? as i64;
    if windows.is_empty() {
        return Err(Error::invalid("no event windows"));
    }
    if let Some(w) = windows.iter().find(|w| w.0 > w.1) {
        return Err(Error::invalid(format!(
            "window [{}, {}] has start after end",
            w.0, w.1
        )));
    }
    if estimation_days < 3 {
        return Err(Error::invalid(
            "the estimation span needs at least three days",
        ));
    }
    let earliest = zero + windows.iter().map(|w| w.0 as i64).min().expect("nonempty");
    let latest = zero + windows.iter().map(|w| w.1 as i64).max().expect("nonempty");
    let est_start = earliest - estimation_days as i64;
    if est_start < 0 || latest >= calendar.days.len() as i64 {
        return Err(Error::InsufficientSpan {
            t: calendar.days.len(),
            nk: estimation_days + (latest - earliest + 1) as usize,
        });
    }

    let (mut ys, mut xs) = (
        Vec::with_capacity(estimation_days),
        Vec::with_capacity(estimation_days),
    );
    for i in est_start..earliest {
        let (a, m) = aligned(asset, market, calendar.days[i as usize])?;
        ys.push(a);
        xs.push(m);
    }
    let (mx, my) = (mean(&xs), mean(&ys));
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::ZeroVariance(
            "market returns over the estimation span".into(),
        ));
    }
    let beta = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum::<f64>()
        / sxx;
    let alpha = my - beta * mx;
    let n = ys.len();
    let ssr: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - alpha - beta * x).powi(2))
        .sum();
    let sigma = (ssr / (n - 2) as f64).sqrt();

    windows
        .iter()
        .map(|&(s, e)| {
            let mut total = 0.0;
            for i in (zero + s as i64)..=(zero + e as i64) {
                let (a, m) = aligned(asset, market, calendar.days[i as usize])?;
                total += a - (alpha + beta * m);
            }
            let len = (e - s + 1) as usize;
            let t_stat = if sigma > 0.0 {
                total / (sigma * (len as f64).sqrt())
            } else if total == 0.0 {
                0.0
            } else {
                total.signum() * f64::INFINITY
            };
            Ok(EventWindowResult {
                window: (s, e),
                car: total,
                t_stat,
                p_value: two_sided_t_p(t_stat, (n - 2) as f64),
                days: len,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WelchResult {
    pub mean_difference: f64,
    pub t_stat: f64,
    pub df: f64,
    pub p_value: f64,
}

/// Unequal-variance two-sample t-test of `mean(a) - mean(b)` with
/// Welch-Satterthwaite degrees of freedom.
pub fn welch_test(a: &[f64], b: &[f64]) -> Result<WelchResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::invalid(
            "each series needs at least two observations",
        ));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let va = if crate::stats::is_constant(a) {
        0.0
    } else {
        variance(a)
    };
    let vb = if crate::stats::is_constant(b) {
        0.0
    } else {
        variance(b)
    };
    let (qa, qb) = (va / na, vb / nb);
    if qa + qb <= 0.0 {
        return Err(Error::ZeroVariance("both series are constant".into()));
    }
    let diff = mean(a) - mean(b);
    let t_stat = diff / (qa + qb).sqrt();
    let df = (qa + qb).powi(2) / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0));
    Ok(WelchResult {
        mean_difference: diff,
        t_stat,
        df,
        p_value: two_sided_t_p(t_stat, df),
    })
}
