use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::time::Month;

/// Monthly factor returns on a gap-free month index, plus an optional risk-free rate.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorPanel {
    months: Vec<Month>,
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
    rf: Option<Vec<f64>>,
}

impl FactorPanel {
    pub fn new(
        months: Vec<Month>,
        names: Vec<String>,
        columns: Vec<Vec<f64>>,
        rf: Option<Vec<f64>>,
    ) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::DimensionMismatch {
                left: names.len(),
                right: columns.len(),
            });
        }
        if let Some(w) = months.windows(2).find(|w| w[1] != w[0].next()) {
            return Err(Error::invalid(format!(
                "factor months jump from {} to {}",
                w[0], w[1]
            )));
        }
        for (i, name) in names.iter().enumerate() {
            if names[..i].iter().any(|n| n.eq_ignore_ascii_case(name)) {
                return Err(Error::DuplicateKey(format!("factor {name}")));
            }
        }
        let named = names.iter().map(String::as_str).zip(&columns);
        for (name, col) in named.chain(rf.iter().map(|r| (RF, r))) {
            if col.len() != months.len() {
                return Err(Error::invalid(format!(
                    "factor {name} has {} values for {} months",
                    col.len(),
                    months.len()
                )));
            }
            if col.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!(
                    "factor {name} has a non-finite value"
                )));
            }
        }
        Ok(Self {
            months,
            names,
            columns,
            rf,
        })
    }

    pub fn months(&self) -> &[Month] {
        &self.months
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.months.len()
    }

    pub fn is_empty(&self) -> bool {
        self.months.is_empty()
    }

    pub fn rf(&self) -> Option<&[f64]> {
        self.rf.as_deref()
    }

    pub fn has(&self, name: &str) -> bool {
        self.position(name).is_some()
    }

    fn position(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n.eq_ignore_ascii_case(name))
    }

    /// Column by case-insensitive name.
    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.position(name)
            .map(|i| self.columns[i].as_slice())
            .ok_or_else(|| Error::invalid(format!("unknown factor {name:?}")))
    }

    pub fn index_of(&self, month: Month) -> Option<usize> {
        let first = *self.months.first()?;
        let i = month.ordinal() - first.ordinal();
        (0..self.months.len() as i64)
            .contains(&i)
            .then_some(i as usize)
    }

    /// Rows `from..=to` (clipped to the panel).
    pub fn slice(&self, from: Month, to: Month) -> Self {
        let keep: Vec<usize> = (0..self.len())
            .filter(|&i| self.months[i] >= from && self.months[i] <= to)
            .collect();
        let pick = |v: &Vec<f64>| keep.iter().map(|&i| v[i]).collect();
        Self {
            months: keep.iter().map(|&i| self.months[i]).collect(),
            names: self.names.clone(),
            columns: self.columns.iter().map(pick).collect(),
            rf: self.rf.as_ref().map(pick),
        }
    }

    /// Restricts to the months covered by `series` and returns the aligned
    /// values. The overlap must be gap-free.
    pub fn align(&self, series: &BTreeMap<Month, f64>) -> Result<(Self, Vec<f64>)> {
        let from = self.months.iter().find(|m| series.contains_key(m)).copied();
        let to = self
            .months
            .iter()
            .rev()
            .find(|m| series.contains_key(m))
            .copied();
        let (Some(from), Some(to)) = (from, to) else {
            return Err(Error::Misaligned(
                "series and factors share no month".into(),
            ));
        };
        let panel = self.slice(from, to);
        let values = panel
            .months
            .iter()
            .map(|m| {
                series
                    .get(m)
                    .copied()
                    .ok_or_else(|| Error::Misaligned(format!("series has no value for {m}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((panel, values))
    }

    /// Adds a factor, restricting the panel to the months the new series covers.
    pub fn with_factor(&self, name: &str, series: &BTreeMap<Month, f64>) -> Result<Self> {
        let (mut panel, values) = self.align(series)?;
        if panel.has(name) {
            return Err(Error::DuplicateKey(format!("factor {name}")));
        }
        panel.names.push(name.to_owned());
        panel.columns.push(values);
        Ok(panel)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file, &path.display().to_string())
    }

    /// Reads `month, <factor columns...>[, rf]` in decimal units; `#` lines are comments.
    pub fn from_reader(reader: impl Read, source: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.get(0) != Some("month") {
            return Err(Error::parse(source, "first column must be month"));
        }
        let cols: Vec<String> = headers.iter().skip(1).map(str::to_owned).collect();
        let rf_at = cols.iter().position(|c| c.eq_ignore_ascii_case(RF));
        let mut months = Vec::new();
        let mut values: Vec<Vec<f64>> = vec![Vec::new(); cols.len()];
        for (line, record) in rdr.records().enumerate() {
            let record = record?;
            let at = |msg: String| Error::parse(source, format!("row {}: {msg}", line + 2));
            if record.len() != cols.len() + 1 {
                return Err(at(format!(
                    "expected {} fields, found {}",
                    cols.len() + 1,
                    record.len()
                )));
            }
            months.push(record[0].parse::<Month>().map_err(|e| at(e.to_string()))?);
            for (j, cell) in record.iter().skip(1).enumerate() {
                let v: f64 = cell
                    .parse()
                    .map_err(|_| at(format!("bad {} value {cell:?}", cols[j])))?;
                values[j].push(v);
            }
        }
        let rf = rf_at.map(|i| values[i].clone());
        let (names, columns): (Vec<String>, Vec<Vec<f64>>) = cols
            .into_iter()
            .zip(values)
            .enumerate()
            .filter(|(i, _)| Some(*i) != rf_at)
            .map(|(_, x)| x)
            .unzip();
        Self::new(months, names, columns, rf).map_err(|e| Error::parse(source, e.to_string()))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("month");
        for n in &self.names {
            out.push(',');
            out.push_str(n);
        }
        if self.rf.is_some() {
            out.push_str(",rf");
        }
        out.push('\n');
        for (i, m) in self.months.iter().enumerate() {
            out.push_str(&m.to_string());
            for c in &self.columns {
                out.push_str(&format!(",{}", c[i]));
            }
            if let Some(rf) = &self.rf {
                out.push_str(&format!(",{}", rf[i]));
            }
            out.push('\n');
        }
        out
    }
}

const RF: &str = "rf";

/// Standard factor sets for time-series alphas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FactorModel {
    Capm,
    Ffc,
    Ff5,
}

impl FactorModel {
    pub const ALL: [FactorModel; 3] = [FactorModel::Capm, FactorModel::Ffc, FactorModel::Ff5];

    pub fn factors(self) -> &'static [&'static str] {
        match self {
            FactorModel::Capm => &["Mkt"],
            FactorModel::Ffc => &["Mkt", "SMB", "HML", "UMD"],
            FactorModel::Ff5 => &["Mkt", "SMB", "HML", "RMW", "CMA"],
        }
    }
}

impl fmt::Display for FactorModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FactorModel::Capm => "CAPM",
            FactorModel::Ffc => "FFC",
            FactorModel::Ff5 => "FF5",
        })
    }
}

impl FromStr for FactorModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "capm" => Ok(FactorModel::Capm),
            "ffc" | "carhart" => Ok(FactorModel::Ffc),
            "ff5" => Ok(FactorModel::Ff5),
            _ => Err(Error::invalid(format!("unknown factor model {s:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TEXT: &str = "month,Mkt,SMB,rf\n2020-01,0.01,0.002,0.001\n2020-02,-0.02,0.001,0.001\n2020-03,0.03,-0.004,0.0\n";

    #[test]
    fn load_and_lookup() {
        let p = FactorPanel::from_reader(TEXT.as_bytes(), "t").unwrap();
        assert_eq!(p.names(), &["Mkt", "SMB"]);
        assert_eq!(p.column("mkt").unwrap(), &[0.01, -0.02, 0.03]);
        assert_eq!(p.rf().unwrap().len(), 3);
        assert_eq!(
            FactorPanel::from_reader(p.to_csv().as_bytes(), "t").unwrap(),
            p
        );
        assert!(p.column("HML").is_err());
        assert_eq!(p.index_of(Month::new(2020, 3).unwrap()), Some(2));
        assert_eq!(p.index_of(Month::new(2020, 4).unwrap()), None);
    }

    #[test]
    fn gaps_rejected() {
        let text = "month,Mkt\n2020-01,0.01\n2020-03,0.02\n";
        assert!(FactorPanel::from_reader(text.as_bytes(), "t").is_err());
    }

    #[test]
    fn align_and_extend() {
        let p = FactorPanel::from_reader(TEXT.as_bytes(), "t").unwrap();
        let s: BTreeMap<Month, f64> = [
            (Month::new(2020, 2).unwrap(), 0.5),
            (Month::new(2020, 3).unwrap(), 0.7),
        ]
        .into();
        let q = p.with_factor("Cyber", &s).unwrap();
        assert_eq!(q.len(), 2);
        assert_eq!(q.column("cyber").unwrap(), &[0.5, 0.7]);
        assert_eq!(q.column("Mkt").unwrap(), &[-0.02, 0.03]);
        let gap: BTreeMap<Month, f64> = [
            (Month::new(2020, 1).unwrap(), 0.5),
            (Month::new(2020, 3).unwrap(), 0.7),
        ]
        .into();
        assert!(matches!(p.align(&gap), Err(Error::Misaligned(_))));
    }
}
