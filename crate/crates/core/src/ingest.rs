//! Parsers and validators for external inputs: EDGAR full-index lines, the
//! attack knowledgebase, and SIC-to-industry tables.

use std::fmt;
use std::io::Read;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tactic::Tactic;
use crate::textprep::{RawDocument, SourceKind};
use crate::time::parse_date;

pub const EDGAR_HEADER: &str = "CIK|Company Name|Form Type|Date Filed|Filename";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgarIndexRow {
    pub cik: String,
    pub company_name: String,
    pub form_type: String,
    pub date_filed: NaiveDate,
    pub filename: String,
}

impl fmt::Display for EdgarIndexRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}|{}|{}|{}|{}",
            self.cik,
            self.company_name,
            self.form_type,
            self.date_filed.format("%Y-%m-%d"),
            self.filename
        )
    }
}

impl EdgarIndexRow {
    pub fn parse(line: &str) -> std::result::Result<Self, String> {
        let fields: Vec<&str> = line.split('|').collect();
        if fields.len() != 5 {
            return Err(format!(
                "expected 5 pipe-delimited fields, found {}",
                fields.len()
            ));
        }
        let cik = fields[0];
        if cik.is_empty() || !cik.bytes().all(|b| b.is_ascii_digit()) {
            return Err(format!("CIK {cik:?} is not a digit string"));
        }
        let date_filed = parse_date(fields[3]).map_err(|e| e.to_string())?;
        if date_filed.format("%Y-%m-%d").to_string() != fields[3] {
            return Err(format!("date {:?} is not in YYYY-MM-DD form", fields[3]));
        }
        Ok(Self {
            cik: cik.to_string(),
            company_name: fields[1].to_string(),
            form_type: fields[2].to_string(),
            date_filed,
            filename: fields[4].to_string(),
        })
    }

    pub fn is_annual_report(&self, include_amendments: bool) -> bool {
        self.form_type == "10-K" || (include_amendments && self.form_type == "10-K/A")
    }
}

/// A line that could not be parsed, kept for the error report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RejectedLine {
    pub line_number: usize,
    pub line: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct IndexParse {
    pub rows: Vec<EdgarIndexRow>,
    pub rejected: Vec<RejectedLine>,
    /// Well-formed rows dropped by the form-type filter.
    pub filtered: usize,
}

/// Parses full-index lines, keeping `10-K` rows (and `10-K/A` when
/// `include_amendments`). Any preamble up to a dashed separator and the
/// column-header line are skipped; malformed lines go to the report.
pub fn parse_edgar_index(text: &str, include_amendments: bool) -> Result<IndexParse> {
    let lines: Vec<&str> = text.lines().collect();
    let start = lines
        .iter()
        .position(|l| l.len() >= 3 && l.bytes().all(|b| b == b'-'))
        .map_or(0, |i| i + 1);
    let mut out = IndexParse::default();
    let mut parsed = 0usize;
    for (i, raw) in lines.iter().enumerate().skip(start) {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line == EDGAR_HEADER {
            continue;
        }
        match EdgarIndexRow::parse(line) {
            Ok(row) => {
                parsed += 1;
                if row.is_annual_report(include_amendments) {
                    out.rows.push(row);
                } else {
                    out.filtered += 1;
                }
            }
            Err(reason) => out.rejected.push(RejectedLine {
                line_number: i + 1,
                line: line.to_string(),
                reason,
            }),
        }
    }
    if parsed == 0 {
        return Err(Error::NoParseableLines);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgebaseEntry {
    pub tactic: String,
    pub technique: String,
    #[serde(default)]
    pub sub_technique: String,
    pub description: String,
}

impl KnowledgebaseEntry {
    pub fn label(&self) -> String {
        if self.sub_technique.is_empty() {
            self.technique.clone()
        } else {
            format!("{}: {}", self.technique, self.sub_technique)
        }
    }

    pub fn tactic(&self) -> Result<Tactic> {
        self.tactic.parse().map_err(|_| Error::UnknownTactic {
            entry: self.label(),
            name: self.tactic.clone(),
        })
    }
}

/// Knowledgebase entries with their tactic validated.
#[derive(Debug, Clone, PartialEq)]
pub struct Knowledgebase {
    pub entries: Vec<KnowledgebaseEntry>,
    pub tactics: Vec<Tactic>,
}

impl Knowledgebase {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// One document per entry, with ids `kb-00000`, `kb-00001`, ...
    pub fn documents(&self) -> Vec<RawDocument> {
        self.entries
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let mut meta = std::collections::BTreeMap::new();
                meta.insert("tactic".to_string(), self.tactics[i].name().to_string());
                meta.insert("technique".to_string(), e.label());
                RawDocument::new(
                    format!("kb-{i:05}"),
                    SourceKind::Knowledgebase,
                    e.description.clone(),
                    meta,
                )
                .expect("tactic already validated")
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.entries).expect("entries serialize")
    }
}

pub fn parse_knowledgebase(text: &str, source: &str) -> Result<Knowledgebase> {
    let entries: Vec<KnowledgebaseEntry> =
        serde_json::from_str(text).map_err(|e| Error::parse(source, e.to_string()))?;
    let mut tactics = Vec::with_capacity(entries.len());
    for (i, e) in entries.iter().enumerate() {
        if e.description.trim().is_empty() {
            return Err(Error::parse(
                source,
                format!("entry {i} ({}) has an empty description", e.label()),
            ));
        }
        tactics.push(e.tactic()?);
    }
    log::info!("knowledgebase {source}: {} entries", entries.len());
    Ok(Knowledgebase { entries, tactics })
}

pub fn load_knowledgebase(path: impl AsRef<Path>) -> Result<Knowledgebase> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_knowledgebase(&text, &path.display().to_string())
}

/// One annual report as plain text, the unit of the filings JSON-lines file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilingText {
    pub firm_id: String,
    pub filing_date: NaiveDate,
    pub text: String,
}

impl FilingText {
    /// Document id used for the filing's paragraphs.
    pub fn doc_id(&self) -> String {
        format!("{}_{}", self.firm_id, self.filing_date)
    }
}

/// Reads one JSON object per line; blank lines are skipped. Duplicate
/// (firm, date) pairs are rejected.
pub fn parse_filings(text: &str, source: &str) -> Result<Vec<FilingText>> {
    let mut out = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: FilingText = serde_json::from_str(line)
            .map_err(|e| Error::parse(source, format!("line {}: {e}", i + 1)))?;
        if !seen.insert((f.firm_id.clone(), f.filing_date)) {
            return Err(Error::DuplicateFiling {
                firm: f.firm_id,
                date: f.filing_date.to_string(),
            });
        }
        out.push(f);
    }
    Ok(out)
}

pub fn load_filings(path: impl AsRef<Path>) -> Result<Vec<FilingText>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_filings(&text, &path.display().to_string())
}

pub fn filings_to_jsonl(filings: &[FilingText]) -> String {
    let mut out = String::new();
    for f in filings {
        out.push_str(&serde_json::to_string(f).expect("filing serializes"));
        out.push('\n');
    }
    out
}

/// Static firm attributes: `firm_id, company_name, sic`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FirmRecord {
    pub firm_id: String,
    pub company_name: String,
    pub sic: u32,
}

pub fn load_firms(path: impl AsRef<Path>) -> Result<Vec<FirmRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let source = path.display().to_string();
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut out: Vec<FirmRecord> = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for (i, rec) in rdr.deserialize().enumerate() {
        let rec: FirmRecord =
            rec.map_err(|e| Error::parse(&source, format!("row {}: {e}", i + 2)))?;
        if !seen.insert(rec.firm_id.clone()) {
            return Err(Error::DuplicateKey(rec.firm_id));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn firms_to_csv(firms: &[FirmRecord]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for f in firms {
        w.serialize(f).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

pub const OTHER_INDUSTRY: &str = "Other";

/// Inclusive SIC ranges mapped to industry names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SicMap {
    ranges: Vec<(u32, u32, String)>,
}

impl SicMap {
    pub fn new(ranges: Vec<(u32, u32, String)>) -> Result<Self> {
        if let Some(r) = ranges.iter().find(|r| r.0 > r.1) {
            return Err(Error::invalid(format!(
                "SIC range {}-{} is reversed",
                r.0, r.1
            )));
        }
        let mut sorted: Vec<&(u32, u32, String)> = ranges.iter().collect();
        sorted.sort();
        if let Some(w) = sorted.windows(2).find(|w| w[1].0 <= w[0].1) {
            return Err(Error::OverlappingRanges(format!(
                "{}-{} ({}) and {}-{} ({})",
                w[0].0, w[0].1, w[0].2, w[1].0, w[1].1, w[1].2
            )));
        }
        Ok(Self { ranges })
    }

    /// Reads `sic_start, sic_end, industry` rows.
    pub fn from_reader(reader: impl Read, source: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["sic_start", "sic_end", "industry"] {
            return Err(Error::parse(
                source,
                "expected columns sic_start, sic_end, industry",
            ));
        }
        let mut ranges = Vec::new();
        for (line, record) in rdr.records().enumerate() {
            let record = record?;
            let at = |msg: String| Error::parse(source, format!("row {}: {msg}", line + 2));
            let lo: u32 = record[0]
                .parse()
                .map_err(|_| at(format!("bad SIC {:?}", &record[0])))?;
            let hi: u32 = record[1]
                .parse()
                .map_err(|_| at(format!("bad SIC {:?}", &record[1])))?;
            ranges.push((lo, hi, record[2].to_string()));
        }
        Self::new(ranges)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file, &path.display().to_string())
    }

    /// The industry of the first range containing `sic`, else [`OTHER_INDUSTRY`].
    pub fn industry(&self, sic: u32) -> &str {
        self.ranges
            .iter()
            .find(|r| r.0 <= sic && sic <= r.1)
            .map_or(OTHER_INDUSTRY, |r| r.2.as_str())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("sic_start,sic_end,industry\n");
        for (lo, hi, name) in &self.ranges {
            out.push_str(&format!("{lo},{hi},{name}\n"));
        }
        out
    }
}

pub fn map_sic_to_industry(sic: u32, table: &SicMap) -> &str {
    table.industry(sic)
}
