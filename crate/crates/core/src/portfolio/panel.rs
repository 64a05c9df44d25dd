use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::time::Month;

/// One asset-month observation.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnObs {
    pub excess_return: f64,
    pub market_cap: Option<f64>,
    pub characteristics: BTreeMap<String, f64>,
}

impl ReturnObs {
    pub fn new(excess_return: f64, market_cap: Option<f64>) -> Self {
        Self {
            excess_return,
            market_cap,
            characteristics: BTreeMap::new(),
        }
    }

    pub fn with(mut self, name: impl Into<String>, value: f64) -> Self {
        self.characteristics.insert(name.into(), value);
        self
    }
}

/// Monthly excess returns, market caps and characteristics per asset.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReturnsPanel {
    assets: BTreeMap<String, BTreeMap<Month, ReturnObs>>,
    characteristic_names: BTreeSet<String>,
}

const FIXED_COLUMNS: [&str; 4] = ["asset_id", "month", "excess_return", "market_cap"];

impl ReturnsPanel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, asset: impl Into<String>, month: Month, obs: ReturnObs) -> Result<()> {
        let asset = asset.into();
        if !obs.excess_return.is_finite() {
            return Err(Error::invalid(format!(
                "non-finite return for {asset} in {month}"
            )));
        }
        if let Some(cap) = obs.market_cap {
            if !(cap > 0.0 && cap.is_finite()) {
                return Err(Error::invalid(format!(
                    "market cap of {asset} in {month} must be positive, got {cap}"
                )));
            }
        }
        self.characteristic_names
            .extend(obs.characteristics.keys().cloned());
        let series = self.assets.entry(asset.clone()).or_default();
        if series.contains_key(&month) {
            return Err(Error::DuplicateKey(format!("{asset} {month}")));
        }
        series.insert(month, obs);
        Ok(())
    }

    pub fn get(&self, asset: &str, month: Month) -> Option<&ReturnObs> {
        self.assets.get(asset)?.get(&month)
    }

    pub fn assets(&self) -> impl Iterator<Item = &str> {
        self.assets.keys().map(String::as_str)
    }

    pub fn n_assets(&self) -> usize {
        self.assets.len()
    }

    pub fn series(&self, asset: &str) -> Option<&BTreeMap<Month, ReturnObs>> {
        self.assets.get(asset)
    }

    pub fn characteristic_names(&self) -> impl Iterator<Item = &str> {
        self.characteristic_names.iter().map(String::as_str)
    }

    /// Every month with at least one observation, ascending.
    pub fn months(&self) -> Vec<Month> {
        let set: BTreeSet<Month> = self
            .assets
            .values()
            .flat_map(|s| s.keys().copied())
            .collect();
        set.into_iter().collect()
    }

    pub fn is_empty(&self) -> bool {
        self.assets.is_empty()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file, &path.display().to_string())
    }

    /// Reads `asset_id, month, excess_return, market_cap, <characteristics...>`.
    /// Lines starting with `#` are ignored; an empty cell means missing.
    pub fn from_reader(reader: impl Read, source: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        for (i, name) in FIXED_COLUMNS.iter().enumerate() {
            if headers.get(i) != Some(name) {
                return Err(Error::parse(
                    source,
                    format!("column {} must be {name}", i + 1),
                ));
            }
        }
        let extra: Vec<String> = headers
            .iter()
            .skip(FIXED_COLUMNS.len())
            .map(str::to_owned)
            .collect();
        let mut panel = Self::new();
        for (line, record) in rdr.records().enumerate() {
            let record = record?;
            let at = |msg: String| Error::parse(source, format!("row {}: {msg}", line + 2));
            let month: Month = record[1].parse().map_err(|e: Error| at(e.to_string()))?;
            let ret =
                parse_f64(&record[2]).ok_or_else(|| at(format!("bad return {:?}", &record[2])))?;
            let cap =
                parse_optional(&record[3]).map_err(|v| at(format!("bad market cap {v:?}")))?;
            let mut obs = ReturnObs::new(ret, cap);
            for (name, cell) in extra.iter().zip(record.iter().skip(FIXED_COLUMNS.len())) {
                if let Some(v) =
                    parse_optional(cell).map_err(|v| at(format!("bad {name} {v:?}")))?
                {
                    obs.characteristics.insert(name.clone(), v);
                }
            }
            panel
                .insert(&record[0], month, obs)
                .map_err(|e| at(e.to_string()))?;
        }
        panel.characteristic_names.extend(extra);
        Ok(panel)
    }

    pub fn to_csv(&self) -> String {
        let names: Vec<&String> = self.characteristic_names.iter().collect();
        let mut out = FIXED_COLUMNS.join(",");
        for n in &names {
            out.push(',');
            out.push_str(n);
        }
        out.push('\n');
        for (asset, series) in &self.assets {
            for (month, obs) in series {
                out.push_str(&format!("{asset},{month},{}", obs.excess_return));
                out.push(',');
                if let Some(c) = obs.market_cap {
                    out.push_str(&c.to_string());
                }
                for n in &names {
                    out.push(',');
                    if let Some(v) = obs.characteristics.get(*n) {
                        out.push_str(&v.to_string());
                    }
                }
                out.push('\n');
            }
        }
        out
    }
}

fn parse_f64(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Empty or `NA` cells are missing; anything else must parse as a finite real.
fn parse_optional(s: &str) -> std::result::Result<Option<f64>, String> {
    let t = s.trim();
    if t.is_empty() || t.eq_ignore_ascii_case("na") {
        return Ok(None);
    }
    parse_f64(t).map(Some).ok_or_else(|| t.to_owned())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let text = "asset_id,month,excess_return,market_cap,beta,size\n\
                    A,2020-01,0.01,100,1.1,4.6\n\
                    A,2020-02,-0.02,,1.2,\n\
                    B,2020-01,0.005,50,,3.9\n";
        let p = ReturnsPanel::from_reader(text.as_bytes(), "t").unwrap();
        assert_eq!(p.n_assets(), 2);
        let a2 = p.get("A", Month::new(2020, 2).unwrap()).unwrap();
        assert_eq!(a2.market_cap, None);
        assert_eq!(a2.characteristics.get("size"), None);
        let again = ReturnsPanel::from_reader(p.to_csv().as_bytes(), "t").unwrap();
        assert_eq!(p, again);
    }

    #[test]
    fn rejects_duplicates_and_bad_caps() {
        let dup = "asset_id,month,excess_return,market_cap\nA,2020-01,0.01,1\nA,2020-01,0.02,1\n";
        let err = ReturnsPanel::from_reader(dup.as_bytes(), "t").unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
        let neg = "asset_id,month,excess_return,market_cap\nA,2020-01,0.01,-3\n";
        assert!(ReturnsPanel::from_reader(neg.as_bytes(), "t").is_err());
        let header = "asset,month,excess_return,market_cap\n";
        assert!(ReturnsPanel::from_reader(header.as_bytes(), "t").is_err());
    }
}
