//! `cyberscore`: synthetic data, the text pipeline and the asset-pricing test
//! battery, one subcommand per stage.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use chrono::NaiveDate;
use clap::error::ErrorKind;
use clap::{ArgAction, Args, CommandFactory, Parser, Subcommand};
use cyberscore::cluster::ClusterMethod;
use cyberscore::pipeline::{run_stage, Params, RunConfig, Stage};
use cyberscore::portfolio::CapTiming;
use cyberscore::pricing::KMode;
use cyberscore::synth::{generate, SynthConfig};
use cyberscore::Month;

#[derive(Debug, Parser)]
#[command(
    name = "cyberscore",
    version,
    about = "Cyber-risk scores from filing text and the asset-pricing tests built on them"
)]
struct Cli {
    /// Log more (-v info, -vv debug).
    #[arg(short, long, action = ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic dataset with planted structure plus a manifest of the truths.
    Synth(SynthArgs),
    /// Filter the filing index and split filings and the knowledgebase into paragraphs.
    Prep(RunArgs),
    /// Train paragraph vectors and infer one per paragraph (needs --seed).
    Embed(RunArgs),
    /// Cluster knowledgebase vectors over the method grid into super-tactics (needs --seed).
    Cluster(RunArgs),
    /// Per-filing cyber scores by super-tactic, plus yearly percentiles.
    Score(RunArgs),
    /// Score-sorted portfolios, long-short spreads and double sorts.
    Sort(RunArgs),
    /// Time-series alphas of the sorted portfolios under standard factor models.
    Alphas(RunArgs),
    /// Fama-MacBeth two-pass premium estimates.
    Fm(RunArgs),
    /// GRS tests of the score portfolios with and without the cyber factor.
    Grs(RunArgs),
    /// Bayesian factor-subset comparison over an expanding window.
    Bgrs(RunArgs),
    /// Event-study cumulative abnormal returns of score portfolios.
    Event(RunArgs),
    /// Welch tests of top-portfolio returns across score kinds.
    Welch(RunArgs),
    /// Run every stage in order, then the score determinants (needs --seed).
    Report(RunArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Directory the dataset is written to.
    #[arg(short, long, value_name = "DIR")]
    out_dir: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    n_firms: Option<usize>,
    /// First month of the monthly panel (YYYY-MM).
    #[arg(long, value_name = "YYYY-MM")]
    start: Option<Month>,
    #[arg(long)]
    n_months: Option<usize>,
    #[arg(long)]
    kb_entries: Option<usize>,
    /// Monthly excess return per unit of cyber exposure.
    #[arg(long)]
    premium: Option<f64>,
    /// Yearly drift of every firm's exposure.
    #[arg(long)]
    exposure_trend: Option<f64>,
    #[arg(long, value_name = "YYYY-MM-DD")]
    event_date: Option<NaiveDate>,
    /// Daily abnormal return per unit of exposure on event days 0 and +1.
    #[arg(long, allow_hyphen_values = true)]
    event_shock: Option<f64>,
    #[arg(long)]
    days_before_event: Option<usize>,
    #[arg(long)]
    days_after_event: Option<usize>,
}

impl SynthArgs {
    fn config(&self) -> SynthConfig {
        let mut c = SynthConfig::new(self.seed);
        override_with(&mut c.n_firms, self.n_firms);
        override_with(&mut c.start, self.start);
        override_with(&mut c.n_months, self.n_months);
        override_with(&mut c.kb_entries, self.kb_entries);
        override_with(&mut c.premium, self.premium);
        override_with(&mut c.exposure_trend, self.exposure_trend);
        override_with(&mut c.event_date, self.event_date);
        override_with(&mut c.event_shock, self.event_shock);
        override_with(&mut c.days_before_event, self.days_before_event);
        override_with(&mut c.days_after_event, self.days_after_event);
        c
    }
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Directory holding the inputs under their default file names.
    #[arg(short, long, value_name = "DIR")]
    data_dir: PathBuf,
    /// Directory for outputs and the intermediate tables between stages.
    #[arg(short, long, value_name = "DIR")]
    out_dir: PathBuf,
    /// JSON parameter file; flags override its values.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(flatten)]
    paths: PathArgs,
    #[command(flatten)]
    params: ParamArgs,
}

/// Per-file overrides of the default input locations.
#[derive(Debug, Args)]
#[command(next_help_heading = "Inputs")]
struct PathArgs {
    #[arg(long, value_name = "FILE")]
    knowledgebase: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    filings: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    stoplist: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    common_words: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    edgar_index: Option<PathBuf>,
    /// Keep every filing instead of filtering through the index.
    #[arg(long, conflicts_with = "edgar_index")]
    no_edgar_index: bool,
    #[arg(long, value_name = "FILE")]
    firms: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    sic_map: Option<PathBuf>,
    /// Skip the industry counts, which need the firm list and SIC map.
    #[arg(long, conflicts_with_all = ["firms", "sic_map"])]
    no_industry: bool,
    #[arg(long, value_name = "FILE")]
    returns: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    factors: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    daily: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    calendar: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    firm_chars: Option<PathBuf>,
}

/// Overrides of [`Params`] fields; unset flags keep the config-file or default value.
#[derive(Debug, Args)]
#[command(next_help_heading = "Parameters")]
struct ParamArgs {
    /// Seed for the stochastic stages (embed, cluster, report).
    #[arg(long)]
    seed: Option<u64>,
    /// Keep amended annual reports when filtering the index.
    #[arg(long)]
    include_10ka: bool,
    /// Approximate paragraph length when segmenting filings.
    #[arg(long)]
    target_words: Option<usize>,
    /// Paragraph vector dimension.
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Noise words per positive word.
    #[arg(long)]
    negatives: Option<usize>,
    /// Inference passes per paragraph.
    #[arg(long)]
    infer_steps: Option<usize>,
    #[arg(long)]
    train_filings_per_firm: Option<usize>,
    /// Clustering grid, e.g. "louvain,kmeans(k=4),spectral(k=4;egn=6)".
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<ClusterMethod>>,
    /// Preferred number of super-tactics when picking from the grid.
    #[arg(long)]
    target_k: Option<usize>,
    /// Use this grid row instead of the automatic pick.
    #[arg(long)]
    select: Option<ClusterMethod>,
    /// Share of each filing's best paragraph matches averaged into its score.
    #[arg(long)]
    trim: Option<f64>,
    /// Portfolio counts for the sorts, e.g. "5,20".
    #[arg(long, value_delimiter = ',')]
    n_bins: Option<Vec<usize>>,
    #[arg(long, value_parser = parse_cap_timing, value_name = "prior-quarter-end|prior-month-end")]
    cap_timing: Option<CapTiming>,
    /// Months in each rolling beta window.
    #[arg(long)]
    window: Option<usize>,
    /// Test portfolios for the cross-sectional regressions.
    #[arg(long)]
    fm_portfolios: Option<usize>,
    /// Newey-West lags for time-series alphas; plain OLS errors when unset.
    #[arg(long)]
    hac_lags: Option<usize>,
    /// Prior Sharpe multiple for the Bayesian comparison.
    #[arg(long)]
    prior: Option<f64>,
    #[arg(long, value_name = "original|as-printed")]
    kmode: Option<KMode>,
    #[arg(long)]
    bgrs_min_window: Option<usize>,
    #[arg(long, value_name = "YYYY-MM-DD")]
    event_date: Option<NaiveDate>,
    /// Event window as START:END trading days, repeatable, e.g. --event-window=-1:1.
    #[arg(long = "event-window", value_parser = parse_window, allow_hyphen_values = true)]
    event_windows: Vec<(i32, i32)>,
    /// Trading days in the market-model estimation window.
    #[arg(long)]
    estimation_days: Option<usize>,
    /// Asset id of the market series in the daily panel.
    #[arg(long)]
    market_asset: Option<String>,
}

fn parse_cap_timing(s: &str) -> Result<CapTiming, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| format!("unknown cap timing {s:?} (prior-quarter-end | prior-month-end)"))
}

fn parse_window(s: &str) -> Result<(i32, i32), String> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| format!("window {s:?} must look like START:END"))?;
    let parse = |x: &str| {
        x.trim()
            .parse::<i32>()
            .map_err(|_| format!("bad window bound {x:?}"))
    };
    Ok((parse(a)?, parse(b)?))
}

fn override_with<T>(field: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *field = v;
    }
}

fn override_path(field: &mut PathBuf, value: &Option<PathBuf>) {
    if let Some(v) = value {
        field.clone_from(v);
    }
}

impl RunArgs {
    fn params(&self) -> Result<Params> {
        let mut p = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("cannot read config file {}", path.display()))?;
                serde_json::from_str(&text)
                    .with_context(|| format!("invalid config file {}", path.display()))?
            }
            None => Params::default(),
        };
        let a = &self.params;
        if a.seed.is_some() {
            p.seed = a.seed;
        }
        p.include_10ka |= a.include_10ka;
        override_with(&mut p.target_words, a.target_words);
        override_with(&mut p.embed.dim, a.dim);
        override_with(&mut p.embed.epochs, a.epochs);
        override_with(&mut p.embed.negatives, a.negatives);
        override_with(&mut p.embed.infer_steps, a.infer_steps);
        override_with(
            &mut p.embed.train_filings_per_firm,
            a.train_filings_per_firm,
        );
        override_with(&mut p.cluster.grid, a.grid.clone());
        override_with(&mut p.cluster.target_k, a.target_k);
        if a.select.is_some() {
            p.cluster.select = a.select;
        }
        override_with(&mut p.trim, a.trim);
        override_with(&mut p.n_bins, a.n_bins.clone());
        override_with(&mut p.cap_timing, a.cap_timing);
        override_with(&mut p.window, a.window);
        override_with(&mut p.fm_portfolios, a.fm_portfolios);
        if a.hac_lags.is_some() {
            p.hac_lags = a.hac_lags;
        }
        override_with(&mut p.prior, a.prior);
        override_with(&mut p.kmode, a.kmode);
        override_with(&mut p.bgrs_min_window, a.bgrs_min_window);
        override_with(&mut p.event_date, a.event_date);
        if !a.event_windows.is_empty() {
            p.event_windows = a.event_windows.clone();
        }
        override_with(&mut p.estimation_days, a.estimation_days);
        override_with(&mut p.market_asset, a.market_asset.clone());
        Ok(p)
    }

    fn run_config(&self) -> Result<RunConfig> {
        require_dir(&self.data_dir)?;
        let mut c = RunConfig::new(&self.data_dir, &self.out_dir, self.params()?);
        let (i, a) = (&mut c.inputs, &self.paths);
        override_path(&mut i.knowledgebase, &a.knowledgebase);
        override_path(&mut i.filings, &a.filings);
        override_path(&mut i.stoplist, &a.stoplist);
        override_path(&mut i.common_words, &a.common_words);
        override_path(&mut i.returns, &a.returns);
        override_path(&mut i.factors, &a.factors);
        override_path(&mut i.daily, &a.daily);
        override_path(&mut i.calendar, &a.calendar);
        override_path(&mut i.firm_chars, &a.firm_chars);
        if a.no_edgar_index {
            i.edgar_index = None;
        } else if a.edgar_index.is_some() {
            i.edgar_index.clone_from(&a.edgar_index);
        }
        if a.no_industry {
            i.firms = None;
            i.sic_map = None;
        } else {
            if a.firms.is_some() {
                i.firms.clone_from(&a.firms);
            }
            if a.sic_map.is_some() {
                i.sic_map.clone_from(&a.sic_map);
            }
        }
        Ok(c)
    }
}

fn require_dir(path: &Path) -> Result<()> {
    if !path.is_dir() {
        anyhow::bail!("data directory {} does not exist", path.display());
    }
    Ok(())
}

fn stage_of(command: &Command) -> Option<(Stage, &RunArgs)> {
    Some(match command {
        Command::Synth(_) => return None,
        Command::Prep(a) => (Stage::Prep, a),
        Command::Embed(a) => (Stage::Embed, a),
        Command::Cluster(a) => (Stage::Cluster, a),
        Command::Score(a) => (Stage::Score, a),
        Command::Sort(a) => (Stage::Sort, a),
        Command::Alphas(a) => (Stage::Alphas, a),
        Command::Fm(a) => (Stage::Fm, a),
        Command::Grs(a) => (Stage::Grs, a),
        Command::Bgrs(a) => (Stage::Bgrs, a),
        Command::Event(a) => (Stage::Event, a),
        Command::Welch(a) => (Stage::Welch, a),
        Command::Report(a) => (Stage::Report, a),
    })
}

fn run(cli: &Cli) -> Result<Vec<PathBuf>> {
    match stage_of(&cli.command) {
        None => {
            let Command::Synth(args) = &cli.command else {
                unreachable!("only synth has no stage")
            };
            let data = generate(&args.config()).context("generating synthetic data")?;
            Ok(data.write(&args.out_dir)?)
        }
        Some((stage, args)) => {
            let config = args.run_config()?;
            Ok(run_stage(stage, &config).with_context(|| format!("stage {stage} failed"))?)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .init();

    if let Some((stage, args)) = stage_of(&cli.command) {
        let has_seed = args.params.seed.is_some() || args.config.is_some();
        if stage.is_stochastic() && !has_seed {
            Cli::command()
                .error(
                    ErrorKind::MissingRequiredArgument,
                    format!("--seed is required for `{stage}`"),
                )
                .exit();
        }
    }
    match run(&cli) {
        Ok(written) => {
            for p in written {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
