//! File-to-file pipeline stages. Every stage reads its inputs from the data
//! directory or from earlier stages' outputs, writes plot-ready tables with a
//! provenance line, and records its resolved configuration next to them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::cluster::{
    build_similarity, majority_assign, run_grid, ClusterMethod, ClusterReportRow, Thresholds,
};
use crate::embed::{load_vectors, train_dbow, write_vectors, DbowConfig, ParagraphRef, VectorMap};
use crate::error::{Error, Result};
use crate::events::{
    car, welch_test, DailyReturns, TradingCalendar, DEFAULT_ESTIMATION_DAYS, DEFAULT_WINDOWS,
};
use crate::ingest::{
    load_filings, load_firms, load_knowledgebase, parse_edgar_index, Knowledgebase, SicMap,
};
use crate::portfolio::{
    assign_bins, double_sort, long_short, quantile_sort, summarize, CapTiming, PortfolioSeries,
    ReturnsPanel,
};
use crate::pricing::{
    bs_posteriors, fama_macbeth, fe_determinants, grs_test, ts_regression, FactorModel,
    FactorPanel, FeData, FeSpec, FirmYearTable, FmConfig, KMode, StdErrors, DEFAULT_BETA_WINDOW,
    DEFAULT_FM_PORTFOLIOS, DEFAULT_MIN_WINDOW, DEFAULT_PRIOR,
};
use crate::report::{num, Provenance, Table};
use crate::score::{
    aggregate_yearly, score_filings, Filing, KnowledgeBase, RiskDictionary, ScoreKind, ScorePanel,
    DEFAULT_TRIM,
};
use crate::synth::{files, MARKET_ASSET};
use crate::tactic::{SuperTacticMap, Tactic};
use crate::textprep::{
    load_paragraphs, preprocess_text, segment_paragraphs, write_paragraphs, Paragraph, WordList,
    DEFAULT_TARGET_WORDS,
};
use crate::time::Month;

/// Name of the long-short score factor added to the factor panel.
pub const CYBER_FACTOR: &str = "Cyber";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Prep,
    Embed,
    Cluster,
    Score,
    Sort,
    Alphas,
    Fm,
    Grs,
    Bgrs,
    Event,
    Welch,
    Report,
}

impl Stage {
    /// The analysis chain in dependency order (`report` runs all of these).
    pub const CHAIN: [Stage; 11] = [
        Stage::Prep,
        Stage::Embed,
        Stage::Cluster,
        Stage::Score,
        Stage::Sort,
        Stage::Alphas,
        Stage::Fm,
        Stage::Grs,
        Stage::Bgrs,
        Stage::Event,
        Stage::Welch,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Prep => "prep",
            Stage::Embed => "embed",
            Stage::Cluster => "cluster",
            Stage::Score => "score",
            Stage::Sort => "sort",
            Stage::Alphas => "alphas",
            Stage::Fm => "fm",
            Stage::Grs => "grs",
            Stage::Bgrs => "bgrs",
            Stage::Event => "event",
            Stage::Welch => "welch",
            Stage::Report => "report",
        }
    }

    /// Stages whose output depends on a random seed.
    pub fn is_stochastic(self) -> bool {
        matches!(self, Stage::Embed | Stage::Cluster | Stage::Report)
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::CHAIN
            .iter()
            .chain([&Stage::Report])
            .find(|st| st.name() == s)
            .copied()
            .ok_or_else(|| Error::invalid(format!("unknown stage {s:?}")))
    }
}

/// Output file names, all inside the output directory.
pub mod outputs {
    pub const KB_PARAGRAPHS: &str = "kb_paragraphs.tsv";
    pub const FILING_PARAGRAPHS: &str = "filing_paragraphs.tsv";
    pub const PREP_SUMMARY: &str = "prep_summary.csv";
    pub const INDEX_REJECTED: &str = "index_rejected.csv";
    pub const INDUSTRY_COUNTS: &str = "industry_counts.csv";
    pub const KB_VECTORS: &str = "kb_vectors.tsv";
    pub const FILING_VECTORS: &str = "filing_vectors.tsv";
    pub const TRAINING_LOSS: &str = "training_loss.csv";
    pub const EMBED_SKIPPED: &str = "embed_skipped.csv";
    pub const CLUSTER_GRID: &str = "cluster_grid.csv";
    pub const SUPER_TACTICS: &str = "super_tactics.json";
    pub const TACTIC_GROUPS: &str = "tactic_groups.csv";
    pub const SCORES: &str = "scores.csv";
    pub const SCORE_YEARLY: &str = "score_yearly.csv";
    pub const PORTFOLIOS: &str = "portfolios.csv";
    pub const SORT_SUMMARY: &str = "sort_summary.csv";
    pub const DOUBLE_SORT: &str = "double_sort.csv";
    pub const ALPHAS: &str = "alphas.csv";
    pub const FM: &str = "fama_macbeth.csv";
    pub const GRS: &str = "grs.csv";
    pub const BGRS_PATH: &str = "bgrs_path.csv";
    pub const BGRS_MODELS: &str = "bgrs_models.csv";
    pub const CAR: &str = "car.csv";
    pub const WELCH: &str = "welch.csv";
    pub const DETERMINANTS: &str = "determinants.csv";
}

/// Input files; by default the names written by the synthetic generator
/// inside one data directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Inputs {
    pub knowledgebase: PathBuf,
    pub filings: PathBuf,
    pub stoplist: PathBuf,
    pub common_words: PathBuf,
    pub edgar_index: Option<PathBuf>,
    pub firms: Option<PathBuf>,
    pub sic_map: Option<PathBuf>,
    pub returns: PathBuf,
    pub factors: PathBuf,
    pub daily: PathBuf,
    pub calendar: PathBuf,
    pub firm_chars: PathBuf,
}

impl Inputs {
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let d = dir.as_ref();
        Self {
            knowledgebase: d.join(files::KNOWLEDGEBASE),
            filings: d.join(files::FILINGS),
            stoplist: d.join(files::STOPLIST),
            common_words: d.join(files::COMMON),
            edgar_index: Some(d.join(files::EDGAR_INDEX)),
            firms: Some(d.join(files::FIRMS)),
            sic_map: Some(d.join(files::SIC_MAP)),
            returns: d.join(files::RETURNS),
            factors: d.join(files::FACTORS),
            daily: d.join(files::DAILY),
            calendar: d.join(files::CALENDAR),
            firm_chars: d.join(files::FIRM_CHARS),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedParams {
    pub dim: usize,
    pub epochs: usize,
    pub negatives: usize,
    pub learning_rate: f64,
    pub min_learning_rate: f64,
    /// Inference passes over each paragraph.
    pub infer_steps: usize,
    /// Earliest filings per firm added to the training corpus next to the
    /// knowledgebase, so that filing vocabulary is known to the model.
    pub train_filings_per_firm: usize,
}

impl Default for EmbedParams {
    fn default() -> Self {
        let d = DbowConfig::default();
        Self {
            dim: d.dim,
            epochs: d.epochs,
            negatives: d.negatives,
            learning_rate: d.learning_rate,
            min_learning_rate: d.min_learning_rate,
            infer_steps: 20,
            train_filings_per_firm: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterParams {
    pub grid: Vec<ClusterMethod>,
    pub thresholds: Thresholds,
    /// Preferred number of super-tactics when picking from the grid.
    pub target_k: usize,
    /// Explicit pick; overrides the automatic rule.
    pub select: Option<ClusterMethod>,
}

impl Default for ClusterParams {
    fn default() -> Self {
        Self {
            grid: ClusterMethod::default_grid(),
            thresholds: Thresholds::default(),
            target_k: 4,
            select: None,
        }
    }
}

/// Every tunable of the chain. Paths live in [`RunConfig`] so that moving a
/// dataset does not change the configuration hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Params {
    pub seed: Option<u64>,
    pub include_10ka: bool,
    pub target_words: usize,
    pub embed: EmbedParams,
    pub cluster: ClusterParams,
    pub trim: f64,
    pub n_bins: Vec<usize>,
    pub cap_timing: CapTiming,
    pub window: usize,
    pub fm_portfolios: usize,
    /// Newey-West lags for time-series alphas; `None` for OLS errors.
    pub hac_lags: Option<usize>,
    pub prior: f64,
    pub kmode: KMode,
    pub bgrs_min_window: usize,
    pub event_date: NaiveDate,
    pub event_windows: Vec<(i32, i32)>,
    pub estimation_days: usize,
    pub market_asset: String,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            seed: None,
            include_10ka: false,
            target_words: DEFAULT_TARGET_WORDS,
            embed: EmbedParams::default(),
            cluster: ClusterParams::default(),
            trim: DEFAULT_TRIM,
            n_bins: vec![5, 20],
            cap_timing: CapTiming::default(),
            window: DEFAULT_BETA_WINDOW,
            fm_portfolios: DEFAULT_FM_PORTFOLIOS,
            hac_lags: None,
            prior: DEFAULT_PRIOR,
            kmode: KMode::default(),
            bgrs_min_window: DEFAULT_MIN_WINDOW,
            event_date: NaiveDate::from_ymd_opt(2020, 12, 14).expect("valid date"),
            event_windows: DEFAULT_WINDOWS.to_vec(),
            estimation_days: DEFAULT_ESTIMATION_DAYS,
            market_asset: MARKET_ASSET.to_string(),
        }
    }
}

impl Params {
    pub fn validate(&self) -> Result<()> {
        if !(self.trim > 0.0 && self.trim <= 1.0) {
            return Err(Error::invalid(format!(
                "trim {} must lie in (0, 1]",
                self.trim
            )));
        }
        if self.n_bins.is_empty() || self.n_bins.iter().any(|&n| n < 2) {
            return Err(Error::invalid(
                "n_bins needs at least one value of 2 or more",
            ));
        }
        if self.prior <= 1.0 {
            return Err(Error::invalid(format!(
                "prior multiple {} must exceed 1",
                self.prior
            )));
        }
        if self.target_words == 0 {
            return Err(Error::invalid("target_words must be positive"));
        }
        if self.event_windows.iter().any(|(a, b)| a > b) {
            return Err(Error::invalid("event windows must have start <= end"));
        }
        Ok(())
    }

    fn seed(&self, stage: Stage) -> Result<u64> {
        self.seed.ok_or_else(|| {
            Error::invalid(format!(
                "stage {stage} is stochastic and needs an explicit seed"
            ))
        })
    }

    fn se(&self) -> StdErrors {
        match self.hac_lags {
            Some(lags) => StdErrors::NeweyWest { lags },
            None => StdErrors::Ols,
        }
    }

    fn coarse_bins(&self) -> usize {
        *self.n_bins.iter().min().expect("validated nonempty")
    }

    fn fine_bins(&self) -> usize {
        *self.n_bins.iter().max().expect("validated nonempty")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub inputs: Inputs,
    pub out_dir: PathBuf,
    pub params: Params,
}

impl RunConfig {
    pub fn new(data_dir: impl AsRef<Path>, out_dir: impl AsRef<Path>, params: Params) -> Self {
        Self {
            inputs: Inputs::in_dir(data_dir),
            out_dir: out_dir.as_ref().to_path_buf(),
            params,
        }
    }

    fn out(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }
}

/// Runs one stage, or the whole chain for [`Stage::Report`]. Returns the
/// files written.
pub fn run_stage(stage: Stage, config: &RunConfig) -> Result<Vec<PathBuf>> {
    config.params.validate()?;
    if stage.is_stochastic() {
        config.params.seed(stage)?;
    }
    std::fs::create_dir_all(&config.out_dir).map_err(|e| Error::io(&config.out_dir, e))?;
    let mut ctx = Ctx {
        config,
        stage,
        written: Vec::new(),
    };
    match stage {
        Stage::Prep => prep(&mut ctx)?,
        Stage::Embed => embed(&mut ctx)?,
        Stage::Cluster => cluster(&mut ctx)?,
        Stage::Score => score(&mut ctx)?,
        Stage::Sort => sort(&mut ctx)?,
        Stage::Alphas => alphas(&mut ctx)?,
        Stage::Fm => fm(&mut ctx)?,
        Stage::Grs => grs(&mut ctx)?,
        Stage::Bgrs => bgrs(&mut ctx)?,
        Stage::Event => event(&mut ctx)?,
        Stage::Welch => welch(&mut ctx)?,
        Stage::Report => {
            for s in Stage::CHAIN {
                log::info!("running stage {s}");
                ctx.written.extend(run_stage(s, config)?);
            }
            determinants(&mut ctx)?;
        }
    }
    let resolved = config.out(&format!("{}_config.json", stage.name()));
    let text = serde_json::to_string_pretty(config).expect("config serializes") + "\n";
    std::fs::write(&resolved, text).map_err(|e| Error::io(&resolved, e))?;
    ctx.written.push(resolved);
    Ok(ctx.written)
}

struct Ctx<'a> {
    config: &'a RunConfig,
    stage: Stage,
    written: Vec<PathBuf>,
}

impl Ctx<'_> {
    fn params(&self) -> &Params {
        &self.config.params
    }

    fn out(&self, name: &str) -> PathBuf {
        self.config.out(name)
    }

    fn provenance(&self, inputs: &[&Path]) -> Result<Provenance> {
        for p in inputs {
            if !p.exists() {
                return Err(Error::io(
                    p,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "input file not found"),
                ));
            }
        }
        Provenance::new(self.stage.name(), &self.config.params, inputs)
    }

    fn write_table(&mut self, prov: &Provenance, name: &str, table: &Table) -> Result<()> {
        let path = self.out(name);
        prov.write_table(&path, table)?;
        self.written.push(path);
        Ok(())
    }

    fn write_text(&mut self, prov: &Provenance, name: &str, body: &str) -> Result<()> {
        let path = self.out(name);
        prov.write(&path, body)?;
        self.written.push(path);
        Ok(())
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn prep(ctx: &mut Ctx) -> Result<()> {
    let inp = &ctx.config.inputs;
    let mut reads: Vec<&Path> = vec![
        &inp.knowledgebase,
        &inp.filings,
        &inp.stoplist,
        &inp.common_words,
    ];
    reads.extend(inp.edgar_index.as_deref());
    let with_industry = inp.firms.as_deref().zip(inp.sic_map.as_deref());
    if let Some((f, s)) = with_industry {
        reads.extend([f, s]);
    }
    let prov = ctx.provenance(&reads)?;
    let p = ctx.params().clone();
    let kb = load_knowledgebase(&inp.knowledgebase)?;
    let mut filings = load_filings(&inp.filings)?;
    let stoplist = WordList::load(&inp.stoplist)?;
    let common = WordList::load(&inp.common_words)?;

    let mut summary = Table::new(["item", "value"]);
    let n_filings_in = filings.len();
    if let Some(index_path) = &inp.edgar_index {
        let index = parse_edgar_index(&read_text(index_path)?, p.include_10ka)?;
        let annual: BTreeSet<(String, NaiveDate)> = index
            .rows
            .iter()
            .map(|r| (r.cik.clone(), r.date_filed))
            .collect();
        filings.retain(|f| annual.contains(&(f.firm_id.clone(), f.filing_date)));
        summary.push([
            "index_annual_rows".to_string(),
            index.rows.len().to_string(),
        ]);
        summary.push([
            "index_filtered_rows".to_string(),
            index.filtered.to_string(),
        ]);
        summary.push([
            "index_rejected_lines".to_string(),
            index.rejected.len().to_string(),
        ]);
        let mut rejected = Table::new(["line_number", "reason", "line"]);
        for r in &index.rejected {
            rejected.push([r.line_number.to_string(), r.reason.clone(), r.line.clone()]);
        }
        ctx.write_table(&prov, outputs::INDEX_REJECTED, &rejected)?;
    }

    let kb_paragraphs: Vec<Paragraph> = kb
        .documents()
        .iter()
        .map(|d| {
            let tokens = preprocess_text(&d.text, &stoplist, &common).concat();
            Paragraph::new(d.doc_id.clone(), 0, tokens)
        })
        .collect();
    let mut filing_paragraphs = Vec::new();
    for f in &filings {
        let sentences = preprocess_text(&f.text, &stoplist, &common);
        filing_paragraphs.extend(segment_paragraphs(&f.doc_id(), &sentences, p.target_words)?);
    }
    let mean_words = if filing_paragraphs.is_empty() {
        f64::NAN
    } else {
        filing_paragraphs
            .iter()
            .map(|q| q.word_count as f64)
            .sum::<f64>()
            / filing_paragraphs.len() as f64
    };
    summary.push(["kb_entries".to_string(), kb.len().to_string()]);
    summary.push(["filings_in".to_string(), n_filings_in.to_string()]);
    summary.push(["filings_kept".to_string(), filings.len().to_string()]);
    summary.push([
        "filing_paragraphs".to_string(),
        filing_paragraphs.len().to_string(),
    ]);
    summary.push(["mean_paragraph_words".to_string(), num(mean_words)]);

    if let Some((firms_path, sic_path)) = with_industry {
        let sic = SicMap::load(sic_path)?;
        let industry: BTreeMap<String, String> = load_firms(firms_path)?
            .into_iter()
            .map(|f| (f.firm_id, sic.industry(f.sic).to_string()))
            .collect();
        let mut counts: BTreeMap<(i32, String), usize> = BTreeMap::new();
        for f in &filings {
            let ind = industry
                .get(&f.firm_id)
                .cloned()
                .unwrap_or_else(|| crate::ingest::OTHER_INDUSTRY.to_string());
            *counts
                .entry((chrono::Datelike::year(&f.filing_date), ind))
                .or_default() += 1;
        }
        let mut t = Table::new(["year", "industry", "filings"]);
        for ((y, ind), n) in counts {
            t.push([y.to_string(), ind, n.to_string()]);
        }
        ctx.write_table(&prov, outputs::INDUSTRY_COUNTS, &t)?;
    }

    ctx.write_text(
        &prov,
        outputs::KB_PARAGRAPHS,
        &write_paragraphs(&kb_paragraphs),
    )?;
    ctx.write_text(
        &prov,
        outputs::FILING_PARAGRAPHS,
        &write_paragraphs(&filing_paragraphs),
    )?;
    ctx.write_table(&prov, outputs::PREP_SUMMARY, &summary)?;
    Ok(())
}

/// Splits a filing document id `firm_date` at its last underscore.
fn split_doc_id(doc_id: &str) -> Result<(String, NaiveDate)> {
    let (firm, date) = doc_id
        .rsplit_once('_')
        .ok_or_else(|| Error::invalid(format!("filing id {doc_id:?} is not firm_date")))?;
    Ok((firm.to_string(), crate::time::parse_date(date)?))
}

fn embed(ctx: &mut Ctx) -> Result<()> {
    let kb_path = ctx.out(outputs::KB_PARAGRAPHS);
    let filing_path = ctx.out(outputs::FILING_PARAGRAPHS);
    let prov = ctx.provenance(&[&kb_path, &filing_path])?;
    let p = ctx.params().clone();
    let seed = p.seed(Stage::Embed)?;
    let kb = load_paragraphs(&kb_path)?;
    let filings = load_paragraphs(&filing_path)?;

    // earliest filings of each firm join the training corpus
    let mut per_firm: BTreeMap<String, BTreeSet<NaiveDate>> = BTreeMap::new();
    for q in &filings {
        let (firm, date) = split_doc_id(&q.doc_id)?;
        per_firm.entry(firm).or_default().insert(date);
    }
    let chosen: BTreeSet<(String, NaiveDate)> = per_firm
        .into_iter()
        .flat_map(|(firm, dates)| {
            dates
                .into_iter()
                .take(p.embed.train_filings_per_firm)
                .map(move |d| (firm.clone(), d))
        })
        .collect();
    let mut corpus = kb.clone();
    for q in &filings {
        if chosen.contains(&split_doc_id(&q.doc_id)?) {
            corpus.push(q.clone());
        }
    }
    let config = DbowConfig {
        dim: p.embed.dim,
        epochs: p.embed.epochs,
        negatives: p.embed.negatives,
        learning_rate: p.embed.learning_rate,
        min_learning_rate: p.embed.min_learning_rate,
        seed,
    };
    let training = train_dbow(&corpus, config)?;
    let infer_seed = seed.wrapping_add(1);
    let (kb_vectors, kb_skipped) = training
        .model
        .infer_many(&kb, p.embed.infer_steps, infer_seed);
    let (filing_vectors, filing_skipped) =
        training
            .model
            .infer_many(&filings, p.embed.infer_steps, infer_seed);
    if !kb_skipped.is_empty() {
        return Err(Error::OutOfVocabulary(kb_skipped[0].to_string()));
    }

    let mut loss = Table::new(["epoch", "loss"]);
    for (e, l) in training.epoch_loss.iter().enumerate() {
        loss.push([(e + 1).to_string(), num(*l)]);
    }
    let mut skipped = Table::new(["doc_id", "index"]);
    for r in &filing_skipped {
        skipped.push([r.doc_id.clone(), r.index.to_string()]);
    }
    ctx.write_text(&prov, outputs::KB_VECTORS, &write_vectors(&kb_vectors))?;
    ctx.write_text(
        &prov,
        outputs::FILING_VECTORS,
        &write_vectors(&filing_vectors),
    )?;
    ctx.write_table(&prov, outputs::TRAINING_LOSS, &loss)?;
    ctx.write_table(&prov, outputs::EMBED_SKIPPED, &skipped)?;
    Ok(())
}

/// Knowledgebase vectors in entry order with their tactics.
fn kb_vectors_and_tactics(
    kb: &Knowledgebase,
    vectors: &VectorMap,
) -> Result<(Vec<Vec<f64>>, Vec<Tactic>)> {
    let docs = kb.documents();
    let mut out = Vec::with_capacity(docs.len());
    for d in &docs {
        let v = vectors
            .get(&ParagraphRef::new(d.doc_id.clone(), 0))
            .ok_or_else(|| {
                Error::invalid(format!("no vector for knowledgebase entry {}", d.doc_id))
            })?;
        out.push(v.values.clone());
    }
    Ok((out, kb.tactics.clone()))
}

/// The explicit pick if given, else among Pareto rows with `target_k`
/// clusters (any rows with `target_k` when none is Pareto) the lowest entropy
/// sum, then the highest graph modularity, then the lowest balance score;
/// grid order breaks remaining ties.
pub fn select_clustering<'a>(
    rows: &'a [ClusterReportRow],
    params: &ClusterParams,
) -> Result<&'a ClusterReportRow> {
    if let Some(m) = params.select {
        return rows
            .iter()
            .find(|r| r.method == m)
            .ok_or_else(|| Error::invalid(format!("selected method {m} is not in the grid")));
    }
    let best = |pred: &dyn Fn(&ClusterReportRow) -> bool| {
        rows.iter().filter(|r| pred(r)).min_by(|a, b| {
            a.score
                .entropy_sum
                .total_cmp(&b.score.entropy_sum)
                .then(b.modularity.total_cmp(&a.modularity))
                .then(a.score.balanced_score.total_cmp(&b.score.balanced_score))
        })
    };
    best(&|r| r.pareto && r.k == params.target_k)
        .or_else(|| best(&|r| r.k == params.target_k))
        .or_else(|| best(&|r| r.pareto))
        .ok_or_else(|| Error::invalid("empty clustering grid"))
}

fn cluster(ctx: &mut Ctx) -> Result<()> {
    let inp = &ctx.config.inputs;
    let vec_path = ctx.out(outputs::KB_VECTORS);
    let prov = ctx.provenance(&[&inp.knowledgebase, &vec_path])?;
    let p = ctx.params().clone();
    let seed = p.seed(Stage::Cluster)?;
    let kb = load_knowledgebase(&inp.knowledgebase)?;
    let (vectors, tactics) = kb_vectors_and_tactics(&kb, &load_vectors(&vec_path)?)?;
    let labels: Vec<String> = kb.entries.iter().map(|e| e.label()).collect();
    let similarity = build_similarity(&vectors, labels)?;
    let rows = run_grid(
        &vectors,
        &similarity,
        &tactics,
        &p.cluster.grid,
        p.cluster.thresholds,
        seed,
    )?;
    let chosen = select_clustering(&rows, &p.cluster)?;
    let groups = majority_assign(&chosen.assignment, &tactics)?;
    let map = SuperTacticMap::from_cluster_ids(&groups)?;

    let mut grid = Table::new([
        "method",
        "params",
        "k",
        "entropy_sum",
        "balanced_score",
        "modularity",
        "pareto",
        "selected",
    ]);
    for r in &rows {
        grid.push([
            r.method.name().to_string(),
            r.method.params(),
            r.k.to_string(),
            num(r.score.entropy_sum),
            num(r.score.balanced_score),
            num(r.modularity),
            r.pareto.to_string(),
            (r.method == chosen.method).to_string(),
        ]);
    }
    let mut assignment = Table::new(["tactic", "super_tactic"]);
    for t in Tactic::ALL {
        assignment.push([t.name().to_string(), map.name(map.group_of(t)).to_string()]);
    }
    ctx.write_table(&prov, outputs::CLUSTER_GRID, &grid)?;
    ctx.write_table(&prov, outputs::TACTIC_GROUPS, &assignment)?;
    let json = serde_json::to_string_pretty(&map).expect("map serializes") + "\n";
    let path = ctx.out(outputs::SUPER_TACTICS);
    std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    ctx.written.push(path);
    Ok(())
}

fn load_super_tactics(path: &Path) -> Result<SuperTacticMap> {
    let raw: SuperTacticMap = serde_json::from_str(&read_text(path)?)
        .map_err(|e| Error::parse(path.display(), e.to_string()))?;
    // re-validate through the checked constructor
    let groups = Tactic::ALL.iter().map(|&t| (t, raw.group_of(t))).collect();
    SuperTacticMap::new(raw.names().to_vec(), groups)
}

fn score(ctx: &mut Ctx) -> Result<()> {
    let inp = &ctx.config.inputs;
    let paths = [
        inp.knowledgebase.clone(),
        ctx.out(outputs::KB_VECTORS),
        ctx.out(outputs::FILING_PARAGRAPHS),
        ctx.out(outputs::FILING_VECTORS),
        ctx.out(outputs::SUPER_TACTICS),
    ];
    let refs: Vec<&Path> = paths.iter().map(PathBuf::as_path).collect();
    let prov = ctx.provenance(&refs)?;
    let p = ctx.params().clone();
    let kb = load_knowledgebase(&paths[0])?;
    let (kb_vecs, tactics) = kb_vectors_and_tactics(&kb, &load_vectors(&paths[1])?)?;
    let knowledge = KnowledgeBase::new(&kb_vecs, tactics)?;
    let groups = load_super_tactics(&paths[4])?;
    let vectors = load_vectors(&paths[3])?;

    let mut by_doc: BTreeMap<String, (Vec<Paragraph>, Vec<Vec<f64>>)> = BTreeMap::new();
    for q in load_paragraphs(&paths[2])? {
        let Some(v) = vectors.get(&ParagraphRef::new(q.doc_id.clone(), q.index)) else {
            continue; // out of vocabulary at embedding time
        };
        let entry = by_doc.entry(q.doc_id.clone()).or_default();
        entry.1.push(v.values.clone());
        entry.0.push(q);
    }
    let filings = by_doc
        .into_iter()
        .map(|(doc, (paragraphs, vectors))| {
            let (firm_id, filing_date) = split_doc_id(&doc)?;
            Ok(Filing {
                firm_id,
                filing_date,
                paragraphs,
                vectors,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let panel = score_filings(
        &filings,
        &knowledge,
        &groups,
        &RiskDictionary::reference(),
        p.trim,
    )?;
    let percentiles = [0.05, 0.25, 0.5, 0.75, 0.95];
    let mut yearly = Table::new([
        "year",
        "score_kind",
        "n",
        "mean",
        "p05",
        "p25",
        "p50",
        "p75",
        "p95",
    ]);
    for r in aggregate_yearly(&panel, &percentiles)? {
        let mut row = vec![
            r.year.to_string(),
            r.kind.to_string(),
            r.n.to_string(),
            num(r.mean),
        ];
        row.extend(r.percentiles.iter().map(|&x| num(x)));
        yearly.push(row);
    }
    ctx.write_text(&prov, outputs::SCORES, &panel.to_csv())?;
    ctx.write_table(&prov, outputs::SCORE_YEARLY, &yearly)?;
    Ok(())
}

fn series_table(rows: &[(String, &PortfolioSeries)]) -> Table {
    let mut t = Table::new(["sort", "portfolio", "month", "return"]);
    for (sort, s) in rows {
        for (m, r) in s.months.iter().zip(&s.returns) {
            t.push([sort.clone(), s.name.clone(), m.to_string(), num(*r)]);
        }
    }
    t
}

/// Reads `sort, portfolio, month, return` rows back into series keyed by
/// `(sort, portfolio)`.
pub fn load_portfolios(path: &Path) -> Result<BTreeMap<(String, String), BTreeMap<Month, f64>>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let source = path.display().to_string();
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(file);
    let mut out: BTreeMap<(String, String), BTreeMap<Month, f64>> = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let at = |m: String| Error::parse(&source, format!("row {}: {m}", i + 2));
        if rec.len() != 4 {
            return Err(at("expected sort,portfolio,month,return".into()));
        }
        let month: Month = rec[2].parse().map_err(|e: Error| at(e.to_string()))?;
        let r: f64 = rec[3]
            .parse()
            .map_err(|_| at(format!("bad return {:?}", &rec[3])))?;
        let key = (rec[0].to_string(), rec[1].to_string());
        if out.entry(key).or_default().insert(month, r).is_some() {
            return Err(Error::DuplicateKey(format!(
                "{} {} {month}",
                &rec[0], &rec[1]
            )));
        }
    }
    Ok(out)
}

fn sort_name(n_bins: usize) -> String {
    format!("q{n_bins}")
}

fn long_short_name(n_bins: usize) -> String {
    format!("P{n_bins}-P1")
}

fn sort(ctx: &mut Ctx) -> Result<()> {
    let inp = &ctx.config.inputs;
    let scores_path = ctx.out(outputs::SCORES);
    let prov = ctx.provenance(&[&inp.returns, &scores_path])?;
    let p = ctx.params().clone();
    let returns = ReturnsPanel::load(&inp.returns)?;
    let history = ScorePanel::load(&scores_path)?.history(&ScoreKind::Overall);

    let mut all: Vec<(String, PortfolioSeries)> = Vec::new();
    for &n in &p.n_bins {
        let series = quantile_sort(&returns, &history, n, p.cap_timing)?;
        let mut ls = long_short(&series[n - 1], &series[0])?;
        ls.name = long_short_name(n);
        for s in series.into_iter().chain([ls]) {
            all.push((sort_name(n), s));
        }
    }
    let mut summary = Table::new([
        "sort",
        "portfolio",
        "months",
        "mean",
        "std_dev",
        "t_stat",
        "sharpe",
    ]);
    for (sort, s) in &all {
        let row = match summarize(s) {
            Ok(x) => vec![
                sort.clone(),
                s.name.clone(),
                x.n.to_string(),
                num(x.mean),
                num(x.std_dev),
                num(x.t_stat),
                x.sharpe.map_or("NA".to_string(), num),
            ],
            Err(_) => vec![
                sort.clone(),
                s.name.clone(),
                s.len().to_string(),
                "NA".into(),
                "NA".into(),
                "NA".into(),
                "NA".into(),
            ],
        };
        summary.push(row);
    }
    let mut doubles = Table::new([
        "characteristic",
        "outer",
        "inner",
        "months",
        "mean",
        "non_monotone",
    ]);
    let characteristics: Vec<String> = returns.characteristic_names().map(str::to_string).collect();
    let n = p.coarse_bins();
    for c in &characteristics {
        let d = double_sort(&returns, &history, c, n, n, p.cap_timing)?;
        for (o, row) in d.series.iter().enumerate() {
            for (i, s) in row.iter().enumerate() {
                doubles.push([
                    c.clone(),
                    format!("Q{}", o + 1),
                    format!("P{}", i + 1),
                    s.len().to_string(),
                    num(d.means[o][i]),
                    d.flags[o].to_string(),
                ]);
            }
        }
    }
    let refs: Vec<(String, &PortfolioSeries)> = all.iter().map(|(a, s)| (a.clone(), s)).collect();
    ctx.write_table(&prov, outputs::PORTFOLIOS, &series_table(&refs))?;
    ctx.write_table(&prov, outputs::SORT_SUMMARY, &summary)?;
    ctx.write_table(&prov, outputs::DOUBLE_SORT, &doubles)?;
    Ok(())
}

fn two_sided_p(t: f64, df: f64) -> f64 {
    if !t.is_finite() {
        return if t.is_nan() { f64::NAN } else { 0.0 };
    }
    match StudentsT::new(0.0, 1.0, df) {
        Ok(d) => 2.0 * d.sf(t.abs()),
        Err(_) => f64::NAN,
    }
}

/// Factor panel extended with the coarse long-short series as [`CYBER_FACTOR`],
/// restricted to the months where that series exists.
fn factors_with_cyber(
    factors: &FactorPanel,
    portfolios: &BTreeMap<(String, String), BTreeMap<Month, f64>>,
    n_bins: usize,
) -> Result<FactorPanel> {
    let ls = portfolios
        .get(&(sort_name(n_bins), long_short_name(n_bins)))
        .ok_or_else(|| {
            Error::invalid(format!(
                "no {} series in the portfolio file",
                long_short_name(n_bins)
            ))
        })?;
    let (Some(first), Some(last)) = (ls.keys().next(), ls.keys().next_back()) else {
        return Err(Error::invalid("empty long-short series"));
    };
    factors.slice(*first, *last).with_factor(CYBER_FACTOR, ls)
}

fn alphas(ctx: &mut Ctx) -> Result<()> {
    let inp = &ctx.config.inputs;
    let port_path = ctx.out(outputs::PORTFOLIOS);
    let prov = ctx.provenance(&[&inp.factors, &port_path])?;
    let p = ctx.params().clone();
    let factors = FactorPanel::load(&inp.factors)?;
    let portfolios = load_portfolios(&port_path)?;
    let mut t = Table::new([
        "sort",
        "portfolio",
        "model",
        "alpha",
        "std_error",
        "t_stat",
        "p_value",
        "r_squared_adj",
        "months",
    ]);
    for ((sort, name), series) in &portfolios {
        let (panel, y) = factors.align(series)?;
        for model in FactorModel::ALL {
            let fit = ts_regression(&y, &panel, model.factors(), p.se())?;
            let df = (fit.n_obs - fit.coefficients.len()) as f64;
            t.push([
                sort.clone(),
                name.clone(),
                model.to_string(),
                num(fit.coefficients[0]),
                num(fit.std_errors[0]),
                num(fit.t_stats[0]),
                num(two_sided_p(fit.t_stats[0], df)),
                num(fit.r_squared_adj),
                fit.n_obs.to_string(),
            ]);
        }
    }
    ctx.write_table(&prov, outputs::ALPHAS, &t)
}

fn fm(ctx: &mut Ctx) -> Result<()> {
    let inp = &ctx.config.inputs;
    let scores_path = ctx.out(outputs::SCORES);
    let prov = ctx.provenance(&[&inp.returns, &inp.factors, &scores_path])?;
    let p = ctx.params().clone();
    let returns = ReturnsPanel::load(&inp.returns)?;
    let factors = FactorPanel::load(&inp.factors)?;
    let history = ScorePanel::load(&scores_path)?.history(&ScoreKind::Overall);
    let mut t = Table::new([
        "model",
        "variable",
        "premium",
        "std_error",
        "t_stat",
        "p_value",
        "months",
        "mean_r_squared_adj",
        "mape",
        "collinear_months",
        "skipped_months",
        "note",
    ]);
    for (label, mut config) in FmConfig::standard_models() {
        config.window = p.window;
        config.n_portfolios = p.fm_portfolios;
        config.timing = p.cap_timing;
        // one model failing to estimate leaves a marked row, not a missing table
        let res = match fama_macbeth(&returns, &history, &factors, &config) {
            Ok(res) => res,
            Err(e) => {
                log::warn!("Fama-MacBeth model {label} not estimated: {e}");
                let mut row = vec![label.clone(), String::new()];
                row.extend(std::iter::repeat_n("NA".to_string(), 9));
                row.push(e.to_string());
                t.push(row);
                continue;
            }
        };
        for (name, test) in res.names.iter().zip(&res.tests) {
            t.push([
                label.clone(),
                name.clone(),
                num(test.mean),
                num(test.std_error),
                num(test.t_stat),
                num(test.p_value),
                res.months.len().to_string(),
                num(res.mean_r_squared_adj),
                num(res.mape),
                res.collinear.len().to_string(),
                res.skipped.len().to_string(),
                String::new(),
            ]);
        }
    }
    ctx.write_table(&prov, outputs::FM, &t)
}

fn grs(ctx: &mut Ctx) -> Result<()> {
    let inp = &ctx.config.inputs;
    let port_path = ctx.out(outputs::PORTFOLIOS);
    let prov = ctx.provenance(&[&inp.factors, &port_path])?;
    let p = ctx.params().clone();
    let factors = FactorPanel::load(&inp.factors)?;
    let portfolios = load_portfolios(&port_path)?;
    let extended = factors_with_cyber(&factors, &portfolios, p.coarse_bins())?;
    let fine = p.fine_bins();
    let assets: Vec<&BTreeMap<Month, f64>> = (1..=fine)
        .map(|b| {
            portfolios
                .get(&(sort_name(fine), format!("P{b}")))
                .ok_or_else(|| {
                    Error::invalid(format!("missing test asset P{b} of {}", sort_name(fine)))
                })
        })
        .collect::<Result<_>>()?;
    // months where every test asset and every factor is observed
    let months: Vec<Month> = extended
        .months()
        .iter()
        .copied()
        .filter(|m| assets.iter().all(|a| a.contains_key(m)))
        .collect();
    let y: Vec<Vec<f64>> = assets
        .iter()
        .map(|a| months.iter().map(|m| a[m]).collect())
        .collect();
    let mut t = Table::new([
        "model",
        "with_cyber",
        "statistic",
        "p_value",
        "n",
        "t",
        "k",
        "mean_r_squared",
        "note",
    ]);
    for model in FactorModel::ALL {
        for with_cyber in [false, true] {
            let mut names: Vec<&str> = model.factors().to_vec();
            if with_cyber {
                names.push(CYBER_FACTOR);
            }
            let x: Vec<Vec<f64>> = names
                .iter()
                .map(|n| {
                    let col = extended.column(n)?;
                    Ok(months
                        .iter()
                        .map(|m| col[extended.index_of(*m).expect("month from panel")])
                        .collect())
                })
                .collect::<Result<_>>()?;
            match grs_test(&y, &x) {
                Ok(r) => t.push([
                    model.to_string(),
                    with_cyber.to_string(),
                    num(r.statistic),
                    num(r.p_value),
                    r.n.to_string(),
                    r.t.to_string(),
                    r.k.to_string(),
                    num(r.mean_r_squared),
                    String::new(),
                ]),
                // e.g. a cyber factor spanned by the test assets when only one sort is run
                Err(e) => {
                    log::warn!("GRS for {model} (cyber: {with_cyber}) not computed: {e}");
                    let mut row = vec![model.to_string(), with_cyber.to_string()];
                    row.extend(std::iter::repeat_n("NA".to_string(), 6));
                    row.push(e.to_string());
                    t.push(row);
                }
            }
        }
    }
    ctx.write_table(&prov, outputs::GRS, &t)
}

fn bgrs(ctx: &mut Ctx) -> Result<()> {
    let inp = &ctx.config.inputs;
    let port_path = ctx.out(outputs::PORTFOLIOS);
    let prov = ctx.provenance(&[&inp.factors, &port_path])?;
    let p = ctx.params().clone();
    let factors = FactorPanel::load(&inp.factors)?;
    let portfolios = load_portfolios(&port_path)?;
    let extended = factors_with_cyber(&factors, &portfolios, p.coarse_bins())?;
    let candidates: Vec<&str> = extended
        .names()
        .iter()
        .map(String::as_str)
        .filter(|n| *n != "Mkt")
        .collect();
    let post = bs_posteriors(
        &extended,
        "Mkt",
        &candidates,
        p.prior,
        p.kmode,
        Some(p.bgrs_min_window),
    )?;
    let mut path = Table::new(["month", "factor", "cumulative_probability"]);
    for point in &post.path {
        for (c, prob) in post.candidates.iter().zip(&point.cumulative) {
            path.push([point.month.to_string(), c.clone(), num(*prob)]);
        }
    }
    let last = post.last();
    let mut order: Vec<usize> = (0..post.subsets.len()).collect();
    order.sort_by(|&a, &b| {
        last.probabilities[b]
            .total_cmp(&last.probabilities[a])
            .then(a.cmp(&b))
    });
    let mut models = Table::new(["rank", "model", "log_marginal_likelihood", "probability"]);
    for (rank, &j) in order.iter().enumerate() {
        models.push([
            (rank + 1).to_string(),
            post.subset_name(post.subsets[j]),
            num(last.log_ml[j]),
            num(last.probabilities[j]),
        ]);
    }
    ctx.write_table(&prov, outputs::BGRS_PATH, &path)?;
    ctx.write_table(&prov, outputs::BGRS_MODELS, &models)
}

/// Equal-weighted daily returns of `members` on days where all are observed.
fn equal_weighted(daily: &DailyReturns, members: &[&str]) -> Result<BTreeMap<NaiveDate, f64>> {
    let series = members
        .iter()
        .map(|m| daily.get(m))
        .collect::<Result<Vec<_>>>()?;
    let Some(first) = series.first() else {
        return Ok(BTreeMap::new());
    };
    Ok(first
        .keys()
        .filter(|d| series.iter().all(|s| s.contains_key(d)))
        .map(|d| {
            (
                *d,
                series.iter().map(|s| s[d]).sum::<f64>() / series.len() as f64,
            )
        })
        .collect())
}

fn event(ctx: &mut Ctx) -> Result<()> {
    let inp = &ctx.config.inputs;
    let scores_path = ctx.out(outputs::SCORES);
    let prov = ctx.provenance(&[&inp.daily, &inp.calendar, &scores_path])?;
    let p = ctx.params().clone();
    let daily = DailyReturns::load(&inp.daily)?;
    let calendar = TradingCalendar::load(&inp.calendar)?;
    let history = ScorePanel::load(&scores_path)?.history(&ScoreKind::Overall);
    let market = daily.get(&p.market_asset)?;

    let firms: BTreeSet<&str> = daily.assets().filter(|a| *a != p.market_asset).collect();
    let keyed: Vec<(f64, &str)> = history
        .firms()
        .filter(|f| firms.contains(f))
        .filter_map(|f| history.latest_before(f, p.event_date).map(|(_, s)| (s, f)))
        .collect();
    let n = p.coarse_bins();
    if keyed.len() < n {
        return Err(Error::DegenerateSort(format!(
            "{} scored firms with daily returns for {n} bins",
            keyed.len()
        )));
    }
    let bins = assign_bins(&keyed, n);
    let mut groups: Vec<Vec<&str>> = vec![Vec::new(); n];
    for ((_, f), b) in keyed.iter().zip(bins) {
        groups[b].push(f);
    }
    let mut portfolios: Vec<(String, BTreeMap<NaiveDate, f64>)> = Vec::new();
    for (b, g) in groups.iter().enumerate() {
        portfolios.push((format!("P{}", b + 1), equal_weighted(&daily, g)?));
    }
    let top = &portfolios[n - 1].1;
    let bottom = &portfolios[0].1;
    let spread: BTreeMap<NaiveDate, f64> = top
        .iter()
        .filter_map(|(d, r)| bottom.get(d).map(|b| (*d, r - b)))
        .collect();
    portfolios.push((long_short_name(n), spread));

    let mut t = Table::new([
        "portfolio",
        "firms",
        "window_start",
        "window_end",
        "car",
        "t_stat",
        "p_value",
        "days",
    ]);
    for (i, (name, series)) in portfolios.iter().enumerate() {
        let members = if i < n {
            groups[i].len()
        } else {
            groups[0].len() + groups[n - 1].len()
        };
        for w in car(
            series,
            market,
            &calendar,
            p.event_date,
            &p.event_windows,
            p.estimation_days,
        )? {
            t.push([
                name.clone(),
                members.to_string(),
                w.window.0.to_string(),
                w.window.1.to_string(),
                num(w.car),
                num(w.t_stat),
                num(w.p_value),
                w.days.to_string(),
            ]);
        }
    }
    ctx.write_table(&prov, outputs::CAR, &t)
}

fn welch(ctx: &mut Ctx) -> Result<()> {
    let inp = &ctx.config.inputs;
    let scores_path = ctx.out(outputs::SCORES);
    let prov = ctx.provenance(&[&inp.returns, &scores_path])?;
    let p = ctx.params().clone();
    let returns = ReturnsPanel::load(&inp.returns)?;
    let scores = ScorePanel::load(&scores_path)?;
    let mut t = Table::new([
        "score_kind",
        "n_bins",
        "mean_kind",
        "mean_overall",
        "mean_difference",
        "t_stat",
        "df",
        "p_value",
    ]);
    for &n in &p.n_bins {
        let top = |kind: &ScoreKind| -> Result<PortfolioSeries> {
            let mut s = quantile_sort(&returns, &scores.history(kind), n, p.cap_timing)?;
            Ok(s.swap_remove(n - 1))
        };
        let overall = top(&ScoreKind::Overall)?;
        for kind in scores
            .kinds()
            .into_iter()
            .filter(|k| *k != ScoreKind::Overall)
        {
            let s = top(&kind)?;
            let w = welch_test(&s.returns, &overall.returns)?;
            t.push([
                kind.to_string(),
                n.to_string(),
                num(s.mean()),
                num(overall.mean()),
                num(w.mean_difference),
                num(w.t_stat),
                num(w.df),
                num(w.p_value),
            ]);
        }
    }
    ctx.write_table(&prov, outputs::WELCH, &t)
}

/// Firm-characteristic regressions of the overall score under both fixed-effect
/// specifications; part of the `report` stage.
fn determinants(ctx: &mut Ctx) -> Result<()> {
    let inp = &ctx.config.inputs;
    let scores_path = ctx.out(outputs::SCORES);
    let prov = ctx.provenance(&[&inp.firm_chars, &scores_path])?;
    let chars = FirmYearTable::load(&inp.firm_chars)?;
    let scores = ScorePanel::load(&scores_path)?;
    let mut t = Table::new([
        "fixed_effects",
        "variable",
        "coefficient",
        "std_error",
        "t_stat",
        "p_value",
        "std_error_unclustered",
        "r_squared_within",
        "n_obs",
        "n_clusters",
    ]);
    for spec in [FeSpec::FirmYear, FeSpec::IndustryYear] {
        let data = FeData::from_scores(&scores, &ScoreKind::Overall, &chars)?;
        let fit = fe_determinants(&data, spec)?;
        for (i, name) in fit.names.iter().enumerate() {
            t.push([
                spec.to_string(),
                name.clone(),
                num(fit.coefficients[i]),
                num(fit.std_errors[i]),
                num(fit.t_stats[i]),
                num(fit.p_values[i]),
                num(fit.std_errors_unclustered[i]),
                num(fit.r_squared_within),
                fit.n_obs.to_string(),
                fit.n_clusters.to_string(),
            ]);
        }
    }
    ctx.write_table(&prov, outputs::DETERMINANTS, &t)
}
