//! Output tables with a provenance comment line naming the producing
//! subcommand and a hash of its configuration and inputs.

use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const PROGRAM: &str = "cyberscore";

/// Identifies one run of one subcommand.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub subcommand: String,
    pub config_hash: String,
}

impl Provenance {
    /// Hashes the canonical JSON of `config` followed by the name and bytes of
    /// every input file, in the given order.
    pub fn new<C: Serialize, P: AsRef<Path>>(
        subcommand: &str,
        config: &C,
        inputs: &[P],
    ) -> Result<Self> {
        let mut h = Sha256::new();
        h.update(subcommand.as_bytes());
        h.update([0]);
        h.update(
            serde_json::to_vec(config)
                .map_err(|e| Error::invalid(format!("config does not serialize: {e}")))?,
        );
        for p in inputs {
            let p = p.as_ref();
            let bytes = std::fs::read(p).map_err(|e| Error::io(p, e))?;
            h.update([0]);
            if let Some(name) = p.file_name() {
                h.update(name.to_string_lossy().as_bytes());
            }
            h.update([0]);
            h.update((bytes.len() as u64).to_le_bytes());
            h.update(&bytes);
        }
        Ok(Self {
            subcommand: subcommand.to_string(),
            config_hash: hex::encode(h.finalize()),
        })
    }

    pub fn header_line(&self) -> String {
        format!(
            "# produced-by: {PROGRAM} {} config-hash: {}\n",
            self.subcommand, self.config_hash
        )
    }

    /// Writes `body` preceded by the provenance line.
    pub fn write(&self, path: impl AsRef<Path>, body: &str) -> Result<()> {
        let path = path.as_ref();
        let mut text = self.header_line();
        text.push_str(body);
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn write_table(&self, path: impl AsRef<Path>, table: &Table) -> Result<()> {
        self.write(path, &table.to_csv())
    }
}

/// A rectangular table of already formatted cells.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Self {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    /// Appends a row; panics if its width differs from the header, which is
    /// always a programming error.
    pub fn push<S: Into<String>>(&mut self, row: impl IntoIterator<Item = S>) {
        let row: Vec<String> = row.into_iter().map(Into::into).collect();
        assert_eq!(
            row.len(),
            self.columns.len(),
            "row width must match the header"
        );
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("cells are utf-8")
    }
}

/// Formats a float for a table cell; non-finite values become `NA`.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else {
        "NA".to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_quoting() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in.txt");
        std::fs::write(&input, "abc").unwrap();
        let p = Provenance::new("sort", &serde_json::json!({"n_bins": 5}), &[&input]).unwrap();
        assert_eq!(p.config_hash.len(), 64);
        let mut t = Table::new(["name", "value"]);
        t.push(["a,b", "1"]);
        let out = dir.path().join("t.csv");
        p.write_table(&out, &t).unwrap();
        let text = std::fs::read_to_string(&out).unwrap();
        assert!(text.starts_with(&format!(
            "# produced-by: cyberscore sort config-hash: {}\n",
            p.config_hash
        )));
        assert!(text.ends_with("name,value\n\"a,b\",1\n"));
    }

    #[test]
    fn hash_tracks_config_and_inputs() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in.txt");
        std::fs::write(&input, "abc").unwrap();
        let a = Provenance::new("fm", &1, &[&input]).unwrap();
        assert_eq!(a, Provenance::new("fm", &1, &[&input]).unwrap());
        assert_ne!(a, Provenance::new("fm", &2, &[&input]).unwrap());
        assert_ne!(a, Provenance::new("grs", &1, &[&input]).unwrap());
        std::fs::write(&input, "abd").unwrap();
        assert_ne!(a, Provenance::new("fm", &1, &[&input]).unwrap());
    }

    #[test]
    fn missing_input_names_the_path() {
        let err = Provenance::new("fm", &1, &["/nonexistent/x.csv"]).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/x.csv"));
    }

    #[test]
    fn non_finite_cells() {
        assert_eq!(num(f64::NAN), "NA");
        assert_eq!(num(0.5), "0.5");
    }
}
