//! Seeded synthetic inputs in every file format the pipeline reads, with
//! planted structure and a manifest of the planted truths.
//!
//! Words are pronounceable pseudo-words drawn from disjoint vocabularies: one
//! shared cyber pool, one pool per super-tactic group, one per tactic and a
//! business pool. A knowledgebase description mixes its group, tactic and
//! shared pools; a filing paragraph is either business text or a cyber
//! paragraph resembling a description, with probability equal to the firm's
//! planted exposure that year. Returns carry a premium linear in exposure and
//! the daily panel a shock on the event date scaled by exposure.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::{DailyReturns, TradingCalendar};
use crate::ingest::{
    filings_to_jsonl, firms_to_csv, EdgarIndexRow, FilingText, FirmRecord, Knowledgebase,
    KnowledgebaseEntry, SicMap, EDGAR_HEADER,
};
use crate::portfolio::{ReturnObs, ReturnsPanel};
use crate::pricing::{FactorPanel, FirmYearTable};
use crate::score::RISK_WORDS;
use crate::tactic::{SuperTacticMap, Tactic};
use crate::textprep::WordList;
use crate::time::Month;

/// Relative sizes of the tactics in the generated knowledgebase.
const TACTIC_WEIGHTS: [f64; 14] = [
    10.0, 8.0, 9.0, 12.0, 20.0, 13.0, 40.0, 17.0, 30.0, 9.0, 17.0, 16.0, 9.0, 13.0,
];

const STOP_WORDS: &[&str] = &[
    "the", "a", "an", "and", "or", "of", "to", "in", "for", "on", "with", "by", "may", "be", "is",
    "are", "as", "at", "from", "that", "this", "these", "it", "its", "their", "can", "will",
    "which", "such", "our", "we", "us",
];
const COMMON_WORDS: &[&str] = &["company", "business", "operations", "results", "including"];

const FACTOR_NAMES: [&str; 6] = ["Mkt", "SMB", "HML", "UMD", "RMW", "CMA"];
const FACTOR_MEANS: [f64; 6] = [0.006, 0.002, 0.002, 0.004, 0.003, 0.002];
const FACTOR_SDS: [f64; 6] = [0.045, 0.03, 0.03, 0.04, 0.02, 0.02];

/// Representative SIC codes; the last two fall outside the mapping table.
const SIC_CODES: &[u32] = &[
    2011, 2531, 2810, 2834, 3571, 3674, 4813, 4911, 5311, 6021, 7372, 8062, 1311, 9995,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_firms: usize,
    pub start: Month,
    pub n_months: usize,
    pub kb_entries: usize,
    /// Monthly excess return per unit of cyber exposure.
    pub premium: f64,
    /// Yearly upward drift of every firm's exposure.
    pub exposure_trend: f64,
    pub event_date: NaiveDate,
    /// Daily abnormal return per unit of exposure on event days 0 and +1.
    pub event_shock: f64,
    /// Trading days in the daily panel before the event date.
    pub days_before_event: usize,
    pub days_after_event: usize,
}

impl SynthConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            n_firms: 200,
            start: Month::new(2009, 1).expect("valid month"),
            n_months: 180,
            kb_entries: 785,
            premium: 0.02,
            exposure_trend: 0.01,
            event_date: NaiveDate::from_ymd_opt(2020, 12, 14).expect("valid date"),
            event_shock: -0.02,
            days_before_event: 300,
            days_after_event: 10,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_firms < 20 {
            return Err(Error::invalid(format!(
                "need at least 20 firms, got {}",
                self.n_firms
            )));
        }
        if self.n_months < 36 {
            return Err(Error::invalid(format!(
                "need at least 36 months, got {}",
                self.n_months
            )));
        }
        if self.kb_entries < Tactic::ALL.len() {
            return Err(Error::invalid(
                "need at least one knowledgebase entry per tactic",
            ));
        }
        if self.days_before_event < 30 || self.days_after_event < 3 {
            return Err(Error::invalid("daily panel too short around the event"));
        }
        Ok(())
    }
}

/// Planted truths, written next to the generated files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: SynthConfig,
    pub first_month: Month,
    pub last_month: Month,
    /// Super-tactic name to member tactic names; the knowledgebase vocabulary
    /// is shared within these groups.
    pub super_tactics: BTreeMap<String, Vec<String>>,
    pub kb_counts: BTreeMap<String, usize>,
    /// Base exposure per firm; a filing's cyber-paragraph probability is this
    /// plus the yearly trend and noise.
    pub exposure: BTreeMap<String, f64>,
    pub factor_means: BTreeMap<String, f64>,
    pub risk_free: f64,
    /// Planted coefficient of R&D intensity on exposure in the firm-year table.
    pub rd_intensity_slope: f64,
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub knowledgebase: Knowledgebase,
    pub filings: Vec<FilingText>,
    pub firms: Vec<FirmRecord>,
    pub returns: ReturnsPanel,
    pub factors: FactorPanel,
    pub daily: DailyReturns,
    pub calendar: TradingCalendar,
    pub edgar_index: String,
    pub sic_map: SicMap,
    pub firm_years: FirmYearTable,
    pub stoplist: WordList,
    pub common_words: WordList,
    pub manifest: Manifest,
}

/// File names written by [`SynthData::write`].
pub mod files {
    pub const KNOWLEDGEBASE: &str = "knowledgebase.json";
    pub const FILINGS: &str = "filings.jsonl";
    pub const FIRMS: &str = "firms.csv";
    pub const RETURNS: &str = "returns.csv";
    pub const FACTORS: &str = "factors.csv";
    pub const DAILY: &str = "daily.csv";
    pub const CALENDAR: &str = "calendar.txt";
    pub const EDGAR_INDEX: &str = "master.idx";
    pub const SIC_MAP: &str = "sic_map.csv";
    pub const FIRM_CHARS: &str = "firm_chars.csv";
    pub const STOPLIST: &str = "stoplist.txt";
    pub const COMMON: &str = "common.txt";
    pub const MANIFEST: &str = "manifest.json";
}

impl SynthData {
    /// Writes every file into `dir` (created if missing) and returns the paths.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let manifest =
            serde_json::to_string_pretty(&self.manifest).expect("manifest serializes") + "\n";
        let contents = [
            (files::KNOWLEDGEBASE, self.knowledgebase.to_json() + "\n"),
            (files::FILINGS, filings_to_jsonl(&self.filings)),
            (files::FIRMS, firms_to_csv(&self.firms)),
            (files::RETURNS, self.returns.to_csv()),
            (files::FACTORS, self.factors.to_csv()),
            (files::DAILY, self.daily.to_csv()),
            (files::CALENDAR, self.calendar.to_text()),
            (files::EDGAR_INDEX, self.edgar_index.clone()),
            (files::SIC_MAP, self.sic_map.to_csv()),
            (files::FIRM_CHARS, self.firm_years.to_csv()),
            (files::STOPLIST, self.stoplist.to_text()),
            (files::COMMON, self.common_words.to_text()),
            (files::MANIFEST, manifest),
        ];
        let mut written = Vec::with_capacity(contents.len());
        for (name, text) in contents {
            let path = dir.join(name);
            std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
            written.push(path);
        }
        Ok(written)
    }
}

const SYLLABLES: [&str; 20] = [
    "ka", "lo", "mi", "ne", "ru", "sa", "te", "vo", "zi", "ba", "do", "fe", "gu", "hi", "jo", "pe",
    "ri", "su", "ta", "wu",
];

/// A three-syllable pseudo-word; distinct ids below 8000 give distinct words.
fn pseudo_word(id: usize) -> String {
    let n = SYLLABLES.len();
    format!(
        "{}{}{}",
        SYLLABLES[(id / (n * n)) % n],
        SYLLABLES[(id / n) % n],
        SYLLABLES[id % n]
    )
}

struct Vocabulary {
    shared: Vec<String>,
    groups: Vec<Vec<String>>,
    tactics: Vec<Vec<String>>,
    business: Vec<String>,
}

impl Vocabulary {
    fn new(n_groups: usize) -> Self {
        let pool =
            |offset: usize, len: usize| (offset..offset + len).map(pseudo_word).collect::<Vec<_>>();
        Self {
            shared: pool(0, 80),
            groups: (0..n_groups).map(|g| pool(100 + 100 * g, 60)).collect(),
            tactics: (0..Tactic::ALL.len())
                .map(|t| pool(1000 + 40 * t, 25))
                .collect(),
            business: pool(2000, 400),
        }
    }
}

/// Word-source mixture for one kind of paragraph.
struct Mix<'a> {
    pools: Vec<(&'a [String], f64)>,
    risk_probability: f64,
}

impl Mix<'_> {
    fn sentence(&self, rng: &mut ChaCha8Rng, risk: bool) -> String {
        let n_words = rng.random_range(10..=12);
        let total: f64 = self.pools.iter().map(|(_, w)| w).sum();
        let mut words: Vec<String> = Vec::with_capacity(2 * n_words);
        for i in 0..n_words {
            let mut u = rng.random::<f64>() * total;
            let mut pool = self.pools[self.pools.len() - 1].0;
            for (p, w) in &self.pools {
                if u < *w {
                    pool = p;
                    break;
                }
                u -= w;
            }
            let word = if risk && i == n_words / 2 {
                RISK_WORDS[rng.random_range(0..12)].to_string()
            } else {
                pool.choose(rng).expect("nonempty pool").clone()
            };
            words.push(word);
            if rng.random::<f64>() < 0.3 {
                words.push(STOP_WORDS.choose(rng).expect("nonempty").to_string());
            }
            if rng.random::<f64>() < 0.03 {
                words.push(COMMON_WORDS.choose(rng).expect("nonempty").to_string());
            }
        }
        if rng.random::<f64>() < 0.1 {
            words.push(format!("{}", rng.random_range(1990..2030)));
        }
        let mut s = words.join(" ");
        if let Some(first) = s.get(0..1) {
            s.replace_range(0..1, &first.to_uppercase());
        }
        s.push('.');
        s
    }

    /// Four sentences of at least ten content words each, so that the
    /// 40-word paragraph segmenter closes exactly at the end.
    fn paragraph(&self, rng: &mut ChaCha8Rng) -> String {
        let risky = rng.random::<f64>() < self.risk_probability;
        let risk_sentence = rng.random_range(0..4);
        (0..4)
            .map(|i| self.sentence(rng, risky && i == risk_sentence))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

fn allocate_counts(total: usize) -> Vec<usize> {
    let sum: f64 = TACTIC_WEIGHTS.iter().sum();
    let raw: Vec<f64> = TACTIC_WEIGHTS
        .iter()
        .map(|w| w / sum * total as f64)
        .collect();
    let mut counts: Vec<usize> = raw.iter().map(|r| (r.floor() as usize).max(1)).collect();
    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.sort_by(|&a, &b| {
        (raw[b] - raw[b].floor())
            .total_cmp(&(raw[a] - raw[a].floor()))
            .then(a.cmp(&b))
    });
    let mut i = 0;
    while counts.iter().sum::<usize>() < total {
        counts[order[i % order.len()]] += 1;
        i += 1;
    }
    while counts.iter().sum::<usize>() > total {
        let j = (0..counts.len())
            .max_by_key(|&j| counts[j])
            .expect("nonempty");
        counts[j] -= 1;
    }
    counts
}

fn sic_map() -> SicMap {
    let ranges = [
        (100, 999, "Consumer NonDurables"),
        (2000, 2399, "Consumer NonDurables"),
        (2500, 2599, "Consumer Durables"),
        (2800, 2829, "Chemicals"),
        (2830, 2839, "Healthcare"),
        (3570, 3579, "Business Equipment"),
        (3660, 3692, "Business Equipment"),
        (4800, 4899, "Telecom"),
        (4900, 4949, "Utilities"),
        (5000, 5999, "Shops"),
        (6000, 6999, "Money"),
        (7370, 7379, "Business Equipment"),
        (8000, 8099, "Healthcare"),
    ];
    SicMap::new(
        ranges
            .iter()
            .map(|&(a, b, n)| (a, b, n.to_string()))
            .collect(),
    )
    .expect("table has no overlaps")
}

fn weekdays_around(event: NaiveDate, before: usize, after: usize) -> Vec<NaiveDate> {
    let is_weekday = |d: &NaiveDate| !matches!(d.weekday(), Weekday::Sat | Weekday::Sun);
    let mut days = Vec::with_capacity(before + after + 1);
    let mut d = event;
    while days.len() < before {
        d -= Duration::days(1);
        if is_weekday(&d) {
            days.push(d);
        }
    }
    days.reverse();
    days.push(event);
    let mut d = event;
    while days.len() < before + after + 1 {
        d += Duration::days(1);
        if is_weekday(&d) {
            days.push(d);
        }
    }
    days
}

struct Firm {
    id: String,
    name: String,
    exposure: f64,
    favorite_group: usize,
    sic: u32,
    betas: [f64; 6],
    idio_sd: f64,
    log_cap: f64,
    log_bm: f64,
}

/// Generates a complete synthetic dataset; identical configs give identical data.
pub fn generate(config: &SynthConfig) -> Result<SynthData> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let grouping = SuperTacticMap::reference_grouping();
    let vocab = Vocabulary::new(grouping.len());
    let first_month = config.start;
    let last_month = config.start.offset(config.n_months as i64 - 1);
    let event_day = match config.event_date.weekday() {
        Weekday::Sat | Weekday::Sun => {
            return Err(Error::NotTradingDay(config.event_date.to_string()));
        }
        _ => config.event_date,
    };

    // knowledgebase
    let counts = allocate_counts(config.kb_entries);
    let mut entries = Vec::with_capacity(config.kb_entries);
    let mut tactics = Vec::with_capacity(config.kb_entries);
    for (t, &count) in Tactic::ALL.iter().zip(&counts) {
        let g = grouping.group_of(*t);
        let mix = Mix {
            pools: vec![
                (&vocab.groups[g], 0.5),
                (&vocab.tactics[t.index()], 0.25),
                (&vocab.shared, 0.25),
            ],
            risk_probability: 0.0,
        };
        for j in 0..count {
            let technique_id = j / 4;
            entries.push(KnowledgebaseEntry {
                tactic: t.name().to_string(),
                technique: format!(
                    "T{:02}{:02} {}",
                    t.index(),
                    technique_id,
                    capitalize(&pseudo_word(5000 + 97 * t.index() + technique_id))
                ),
                sub_technique: capitalize(&pseudo_word(6000 + 211 * t.index() + j)),
                description: mix.paragraph(&mut rng),
            });
            tactics.push(*t);
        }
    }
    let knowledgebase = Knowledgebase { entries, tactics };

    // firms
    let beta_noise = Normal::new(0.0, 1.0).expect("valid normal");
    let mut firms = Vec::with_capacity(config.n_firms);
    for i in 0..config.n_firms {
        let cik = 1_000_000 + 1_000 * i + rng.random_range(0..1_000);
        let z = |rng: &mut ChaCha8Rng| beta_noise.sample(rng);
        firms.push(Firm {
            id: cik.to_string(),
            name: format!(
                "{} {} CORP",
                pseudo_word(7000 + i).to_uppercase(),
                pseudo_word(7500 + i).to_uppercase()
            ),
            exposure: rng.random_range(0.05..0.65),
            favorite_group: rng.random_range(0..grouping.len()),
            sic: *SIC_CODES.choose(&mut rng).expect("nonempty"),
            betas: [
                1.0 + 0.3 * z(&mut rng),
                0.3 + 0.4 * z(&mut rng),
                0.2 + 0.4 * z(&mut rng),
                0.2 * z(&mut rng),
                0.2 * z(&mut rng),
                0.2 * z(&mut rng),
            ],
            idio_sd: rng.random_range(0.05..0.10),
            log_cap: 7.0 + 1.2 * z(&mut rng),
            log_bm: -0.5 + 0.5 * z(&mut rng),
        });
    }

    // filings: one per firm and year, from the year before the sample through its last year
    let first_year = first_month.year - 1;
    let last_year = last_month.year;
    let business = Mix {
        pools: vec![(&vocab.business, 1.0)],
        risk_probability: 0.3,
    };
    let exposure_noise = Normal::new(0.0, 0.03).expect("valid normal");
    let mut yearly_exposure: BTreeMap<(usize, i32), f64> = BTreeMap::new();
    let mut filings = Vec::new();
    for (i, firm) in firms.iter().enumerate() {
        for year in first_year..=last_year {
            let e = (firm.exposure
                + config.exposure_trend * (year - first_year) as f64
                + exposure_noise.sample(&mut rng))
            .clamp(0.01, 0.95);
            yearly_exposure.insert((i, year), e);
            let date =
                NaiveDate::from_ymd_opt(year, rng.random_range(2..=3), rng.random_range(1..=28))
                    .expect("valid");
            let n_paragraphs = rng.random_range(5..=8);
            let mut paragraphs = Vec::with_capacity(n_paragraphs);
            for _ in 0..n_paragraphs {
                if rng.random::<f64>() < e {
                    let g = if rng.random::<f64>() < 0.7 {
                        firm.favorite_group
                    } else {
                        rng.random_range(0..grouping.len())
                    };
                    let members = grouping.members(g);
                    let t = members.choose(&mut rng).expect("groups are nonempty");
                    let cyber = Mix {
                        pools: vec![
                            (&vocab.groups[g], 0.4),
                            (&vocab.tactics[t.index()], 0.2),
                            (&vocab.shared, 0.2),
                            (&vocab.business, 0.2),
                        ],
                        risk_probability: 0.7,
                    };
                    paragraphs.push(cyber.paragraph(&mut rng));
                } else {
                    paragraphs.push(business.paragraph(&mut rng));
                }
            }
            filings.push(FilingText {
                firm_id: firm.id.clone(),
                filing_date: date,
                text: paragraphs.join("\n\n"),
            });
        }
    }

    // monthly factors and returns
    let months: Vec<Month> = Month::range(first_month, last_month).collect();
    let normals: Vec<Normal<f64>> = FACTOR_MEANS
        .iter()
        .zip(FACTOR_SDS)
        .map(|(&m, s)| Normal::new(m, s).expect("valid normal"))
        .collect();
    let mut columns = vec![Vec::with_capacity(months.len()); FACTOR_NAMES.len()];
    let mut rf = Vec::with_capacity(months.len());
    for _ in &months {
        for (c, n) in columns.iter_mut().zip(&normals) {
            c.push(n.sample(&mut rng));
        }
        rf.push(0.001 + 0.0005 * rng.random::<f64>());
    }
    let factors = FactorPanel::new(
        months.clone(),
        FACTOR_NAMES.iter().map(|s| s.to_string()).collect(),
        columns.clone(),
        Some(rf.clone()),
    )?;
    let mut returns = ReturnsPanel::new();
    let mean_exposure = firms.iter().map(|f| f.exposure).sum::<f64>() / firms.len() as f64;
    for (i, firm) in firms.iter().enumerate() {
        let idio = Normal::new(0.0, firm.idio_sd).expect("valid normal");
        let mut log_cap = firm.log_cap;
        let mut log_bm = firm.log_bm;
        for (t, &m) in months.iter().enumerate() {
            let e = yearly_exposure[&(i, m.year)];
            let systematic: f64 = firm.betas.iter().zip(&columns).map(|(b, c)| b * c[t]).sum();
            let r = config.premium * (e - mean_exposure) + systematic + idio.sample(&mut rng);
            let r = r.max(-0.95);
            log_bm += 0.02 * beta_noise.sample(&mut rng);
            returns.insert(
                &firm.id,
                m,
                ReturnObs::new(round(r), Some(round(log_cap.exp())))
                    .with("bm", round(log_bm.exp())),
            )?;
            log_cap += (1.0 + r + rf[t]).ln();
        }
    }

    // daily panel around the event
    let calendar = TradingCalendar::new(weekdays_around(
        event_day,
        config.days_before_event,
        config.days_after_event,
    ))?;
    let event_pos = config.days_before_event;
    let market_daily = Normal::new(0.0004, 0.012).expect("valid normal");
    let firm_daily = Normal::new(0.0, 0.02).expect("valid normal");
    let mut daily = DailyReturns::new();
    let market: Vec<f64> = calendar
        .days()
        .iter()
        .map(|_| market_daily.sample(&mut rng))
        .collect();
    for (d, &day) in calendar.days().iter().enumerate() {
        daily.insert(MARKET_ASSET, day, round(market[d]))?;
    }
    for firm in &firms {
        for (d, &day) in calendar.days().iter().enumerate() {
            let mut r = 0.0002 + firm.betas[0] * market[d] + firm_daily.sample(&mut rng);
            if d == event_pos || d == event_pos + 1 {
                r += config.event_shock * firm.exposure;
            }
            daily.insert(&firm.id, day, round(r))?;
        }
    }

    // firm-year characteristics
    let sic_map = sic_map();
    let rd_slope = 0.08;
    let mut firm_years = FirmYearTable {
        names: vec![
            "log_size".into(),
            "book_to_market".into(),
            "rd_intensity".into(),
            "leverage".into(),
        ],
        rows: BTreeMap::new(),
    };
    for (i, firm) in firms.iter().enumerate() {
        let industry = sic_map.industry(firm.sic).to_string();
        let leverage = rng.random_range(0.1..0.6);
        for year in first_year..=last_year {
            let e = yearly_exposure[&(i, year)];
            let decembers = returns.series(&firm.id).expect("firm has returns");
            let last_in_year = decembers.range(..Month::new(year + 1, 1)?).next_back();
            let (cap, bm) = match last_in_year {
                Some((_, obs)) => (obs.market_cap.unwrap_or(1.0), obs.characteristics["bm"]),
                None => (firm.log_cap.exp(), firm.log_bm.exp()),
            };
            let rd = (0.02 + rd_slope * e + 0.01 * beta_noise.sample(&mut rng)).max(0.0);
            firm_years.rows.insert(
                (firm.id.clone(), year),
                (
                    industry.clone(),
                    vec![
                        round(cap.ln()),
                        round(bm),
                        round(rd),
                        round(leverage + 0.02 * beta_noise.sample(&mut rng)),
                    ],
                ),
            );
        }
    }

    let edgar_index = edgar_index(&firms, &filings, &mut rng);

    let manifest = Manifest {
        config: config.clone(),
        first_month,
        last_month,
        super_tactics: (0..grouping.len())
            .map(|g| {
                (
                    grouping.name(g).to_string(),
                    grouping
                        .members(g)
                        .iter()
                        .map(|t| t.name().to_string())
                        .collect(),
                )
            })
            .collect(),
        kb_counts: Tactic::ALL
            .iter()
            .zip(&counts)
            .map(|(t, &c)| (t.name().to_string(), c))
            .collect(),
        exposure: firms.iter().map(|f| (f.id.clone(), f.exposure)).collect(),
        factor_means: FACTOR_NAMES
            .iter()
            .zip(FACTOR_MEANS)
            .map(|(n, m)| (n.to_string(), m))
            .collect(),
        risk_free: 0.00125,
        rd_intensity_slope: rd_slope,
    };

    Ok(SynthData {
        knowledgebase,
        filings,
        firms: firms
            .iter()
            .map(|f| FirmRecord {
                firm_id: f.id.clone(),
                company_name: f.name.clone(),
                sic: f.sic,
            })
            .collect(),
        returns,
        factors,
        daily,
        calendar,
        edgar_index,
        sic_map,
        firm_years,
        stoplist: WordList::new(STOP_WORDS.iter().copied()),
        common_words: WordList::new(COMMON_WORDS.iter().copied()),
        manifest,
    })
}

/// Asset id of the market series in the daily panel.
pub const MARKET_ASSET: &str = "MKT";

fn capitalize(word: &str) -> String {
    let mut c = word.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// Ten significant digits keep the files compact and their text stable.
fn round(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let digits = 9 - x.abs().log10().floor() as i32;
    let scale = 10f64.powi(digits);
    (x * scale).round() / scale
}

fn edgar_index(firms: &[Firm], filings: &[FilingText], rng: &mut ChaCha8Rng) -> String {
    let names: BTreeMap<&str, &str> = firms
        .iter()
        .map(|f| (f.id.as_str(), f.name.as_str()))
        .collect();
    let mut rows = Vec::new();
    for (n, f) in filings.iter().enumerate() {
        let name = names[f.firm_id.as_str()];
        let filename = |k: usize| {
            format!(
                "edgar/data/{}/0000{}-{:02}-{:06}.txt",
                f.firm_id,
                f.firm_id,
                f.filing_date.year() % 100,
                n * 4 + k
            )
        };
        rows.push(EdgarIndexRow {
            cik: f.firm_id.clone(),
            company_name: name.to_string(),
            form_type: "10-K".into(),
            date_filed: f.filing_date,
            filename: filename(0),
        });
        rows.push(EdgarIndexRow {
            cik: f.firm_id.clone(),
            company_name: name.to_string(),
            form_type: "10-Q".into(),
            date_filed: f.filing_date + Duration::days(60),
            filename: filename(1),
        });
        if rng.random::<f64>() < 0.05 {
            rows.push(EdgarIndexRow {
                cik: f.firm_id.clone(),
                company_name: name.to_string(),
                form_type: "10-K/A".into(),
                date_filed: f.filing_date + Duration::days(30),
                filename: filename(2),
            });
        }
    }
    rows.sort_by(|a, b| {
        (&a.cik, a.date_filed, &a.form_type).cmp(&(&b.cik, b.date_filed, &b.form_type))
    });
    let mut out = String::from(
        "Description:           Master Index of EDGAR Dissemination Feed\n\
         Last Data Received:    Synthetic\n\
         Comments:              webmaster@sec.gov\n\
         Anonymous FTP:         ftp://ftp.sec.gov/edgar/\n\n",
    );
    out.push_str(EDGAR_HEADER);
    out.push('\n');
    out.push_str(&"-".repeat(80));
    out.push('\n');
    for (i, r) in rows.iter().enumerate() {
        out.push_str(&r.to_string());
        out.push('\n');
        if i == rows.len() / 2 {
            // a truncated line, as occasionally found in real index files
            out.push_str(&format!("{}|{}|10-K\n", r.cik, r.company_name));
        }
    }
    out
}
