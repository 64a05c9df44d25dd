use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::tactic::Tactic;
use crate::time::parse_date;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ScoreKind {
    Overall,
    Tactic(Tactic),
    SuperTactic(String),
    Sentiment,
}

impl fmt::Display for ScoreKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScoreKind::Overall => f.write_str("overall"),
            ScoreKind::Tactic(t) => f.write_str(t.name()),
            ScoreKind::SuperTactic(name) => f.write_str(name),
            ScoreKind::Sentiment => f.write_str("sentiment"),
        }
    }
}

impl FromStr for ScoreKind {
    type Err = Error;

    /// `overall`, `sentiment`, a tactic name, or anything else as a super-tactic name.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        Ok(match s.to_ascii_lowercase().as_str() {
            "" => return Err(Error::invalid("empty score kind")),
            "overall" => ScoreKind::Overall,
            "sentiment" => ScoreKind::Sentiment,
            _ => match s.parse::<Tactic>() {
                Ok(t) => ScoreKind::Tactic(t),
                Err(_) => ScoreKind::SuperTactic(s.to_owned()),
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub firm_id: String,
    pub filing_date: NaiveDate,
    pub kind: ScoreKind,
    pub value: f64,
}

type Key = (String, NaiveDate, ScoreKind);

/// Scores keyed by (firm, filing date, kind); values in [-1, 1].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScorePanel {
    values: BTreeMap<Key, f64>,
}

impl ScorePanel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, row: ScoreRow) -> Result<()> {
        if !(-1.0..=1.0).contains(&row.value) {
            return Err(Error::invalid(format!(
                "score {} for {} on {} lies outside [-1, 1]",
                row.value, row.firm_id, row.filing_date
            )));
        }
        let key = (row.firm_id, row.filing_date, row.kind);
        if self.values.contains_key(&key) {
            return Err(Error::DuplicateFiling {
                firm: key.0,
                date: key.1.to_string(),
            });
        }
        self.values.insert(key, row.value);
        Ok(())
    }

    pub fn extend(&mut self, rows: impl IntoIterator<Item = ScoreRow>) -> Result<()> {
        rows.into_iter().try_for_each(|r| self.insert(r))
    }

    pub fn get(&self, firm: &str, date: NaiveDate, kind: &ScoreKind) -> Option<f64> {
        self.values
            .get(&(firm.to_owned(), date, kind.clone()))
            .copied()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn rows(&self) -> impl Iterator<Item = ScoreRow> + '_ {
        self.values
            .iter()
            .map(|((firm, date, kind), &value)| ScoreRow {
                firm_id: firm.clone(),
                filing_date: *date,
                kind: kind.clone(),
                value,
            })
    }

    pub fn kinds(&self) -> Vec<ScoreKind> {
        let set: BTreeSet<&ScoreKind> = self.values.keys().map(|k| &k.2).collect();
        set.into_iter().cloned().collect()
    }

    /// Per-firm dated values of one kind.
    pub fn history(&self, kind: &ScoreKind) -> ScoreHistory {
        let mut by_firm: BTreeMap<String, Vec<(NaiveDate, f64)>> = BTreeMap::new();
        for ((firm, date, k), &v) in &self.values {
            if k == kind {
                by_firm.entry(firm.clone()).or_default().push((*date, v));
            }
        }
        ScoreHistory { by_firm }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file, &path.display().to_string())
    }

    /// Reads `firm_id, filing_date, score_kind, value`; `#` lines are comments.
    pub fn from_reader(reader: impl Read, source: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["firm_id", "filing_date", "score_kind", "value"] {
            return Err(Error::parse(
                source,
                "expected columns firm_id,filing_date,score_kind,value",
            ));
        }
        let mut panel = Self::new();
        for (line, record) in rdr.records().enumerate() {
            let record = record?;
            let at = |msg: String| Error::parse(source, format!("row {}: {msg}", line + 2));
            let row = ScoreRow {
                firm_id: record[0].to_owned(),
                filing_date: parse_date(&record[1]).map_err(|e| at(e.to_string()))?,
                kind: record[2].parse().map_err(|e: Error| at(e.to_string()))?,
                value: record[3]
                    .parse()
                    .map_err(|_| at(format!("bad value {:?}", &record[3])))?,
            };
            panel.insert(row).map_err(|e| at(e.to_string()))?;
        }
        Ok(panel)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("firm_id,filing_date,score_kind,value\n");
        for r in self.rows() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.firm_id, r.filing_date, r.kind, r.value
            ));
        }
        out
    }
}

/// Dated scores per firm, ascending by date.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreHistory {
    by_firm: BTreeMap<String, Vec<(NaiveDate, f64)>>,
}

impl ScoreHistory {
    pub fn from_rows(rows: impl IntoIterator<Item = (String, NaiveDate, f64)>) -> Self {
        let mut by_firm: BTreeMap<String, Vec<(NaiveDate, f64)>> = BTreeMap::new();
        for (firm, date, v) in rows {
            by_firm.entry(firm).or_default().push((date, v));
        }
        for v in by_firm.values_mut() {
            v.sort_by_key(|x| x.0);
        }
        Self { by_firm }
    }

    /// Most recent score dated strictly before `date`.
    pub fn latest_before(&self, firm: &str, date: NaiveDate) -> Option<(NaiveDate, f64)> {
        let v = self.by_firm.get(firm)?;
        let idx = v.partition_point(|(d, _)| *d < date);
        idx.checked_sub(1).map(|i| v[i])
    }

    pub fn firms(&self) -> impl Iterator<Item = &str> {
        self.by_firm.keys().map(String::as_str)
    }

    pub fn get(&self, firm: &str) -> &[(NaiveDate, f64)] {
        self.by_firm.get(firm).map_or(&[], Vec::as_slice)
    }
}
