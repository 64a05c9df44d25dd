//! Python bindings: the pipeline stages, the synthetic-data generator and the
//! standalone statistical operations, with plain lists and dicts at the
//! boundary.

use std::collections::BTreeMap;
use std::path::PathBuf;

use chrono::NaiveDate;
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;

use cyberscore::cluster::{
    apply_thresholds, build_similarity, louvain, modularity as core_modularity, spectral_cluster,
    spherical_kmeans_restarts, ClusterMethod, SimilarityMatrix, Thresholds, DEFAULT_MAX_ITER,
    KMEANS_RESTARTS,
};
use cyberscore::embed::{train_dbow, DbowConfig, EmbeddingModel as CoreModel};
use cyberscore::events::{car as core_car, welch_test as core_welch, TradingCalendar};
use cyberscore::pipeline::{run_stage, Params as CoreParams, RunConfig, Stage};
use cyberscore::pricing::{grs_test as core_grs, KMode};
use cyberscore::score::{cyber_score as core_cyber_score, paragraph_maxima as core_maxima};
use cyberscore::synth::{generate, SynthConfig};
use cyberscore::textprep::{preprocess_text, segment_paragraphs, Paragraph, WordList};
use cyberscore::{Error, Month};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn parse<T: std::str::FromStr>(s: &str, what: &str) -> PyResult<T>
where
    T::Err: std::fmt::Display,
{
    s.parse::<T>()
        .map_err(|e| PyValueError::new_err(format!("invalid {what} {s:?}: {e}")))
}

fn parse_date(s: &str) -> PyResult<NaiveDate> {
    parse(s, "date")
}

/// Pipeline parameters, backed by the same JSON layout the CLI's `--config` reads.
#[pyclass(module = "cyberscore")]
#[derive(Clone)]
struct Params {
    inner: CoreParams,
}

#[pymethods]
impl Params {
    #[new]
    #[pyo3(signature = (seed=None))]
    fn new(seed: Option<u64>) -> Self {
        Self {
            inner: CoreParams {
                seed,
                ..CoreParams::default()
            },
        }
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner = serde_json::from_str(text)
            .map_err(|e| PyValueError::new_err(format!("invalid parameters: {e}")))?;
        Ok(Self { inner })
    }

    fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.inner).expect("parameters serialize")
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(py_err)
    }

    #[getter]
    fn seed(&self) -> Option<u64> {
        self.inner.seed
    }
    #[setter]
    fn set_seed(&mut self, v: Option<u64>) {
        self.inner.seed = v;
    }
    #[getter]
    fn trim(&self) -> f64 {
        self.inner.trim
    }
    #[setter]
    fn set_trim(&mut self, v: f64) {
        self.inner.trim = v;
    }
    #[getter]
    fn n_bins(&self) -> Vec<usize> {
        self.inner.n_bins.clone()
    }
    #[setter]
    fn set_n_bins(&mut self, v: Vec<usize>) {
        self.inner.n_bins = v;
    }
    #[getter]
    fn window(&self) -> usize {
        self.inner.window
    }
    #[setter]
    fn set_window(&mut self, v: usize) {
        self.inner.window = v;
    }
    #[getter]
    fn prior(&self) -> f64 {
        self.inner.prior
    }
    #[setter]
    fn set_prior(&mut self, v: f64) {
        self.inner.prior = v;
    }
    #[getter]
    fn kmode(&self) -> String {
        self.inner.kmode.to_string()
    }
    #[setter]
    fn set_kmode(&mut self, v: &str) -> PyResult<()> {
        self.inner.kmode = parse::<KMode>(v, "k mode")?;
        Ok(())
    }
    #[getter]
    fn hac_lags(&self) -> Option<usize> {
        self.inner.hac_lags
    }
    #[setter]
    fn set_hac_lags(&mut self, v: Option<usize>) {
        self.inner.hac_lags = v;
    }
    #[getter]
    fn include_10ka(&self) -> bool {
        self.inner.include_10ka
    }
    #[setter]
    fn set_include_10ka(&mut self, v: bool) {
        self.inner.include_10ka = v;
    }
    #[getter]
    fn fm_portfolios(&self) -> usize {
        self.inner.fm_portfolios
    }
    #[setter]
    fn set_fm_portfolios(&mut self, v: usize) {
        self.inner.fm_portfolios = v;
    }
    #[getter]
    fn cluster_grid(&self) -> Vec<String> {
        self.inner
            .cluster
            .grid
            .iter()
            .map(ToString::to_string)
            .collect()
    }
    #[setter]
    fn set_cluster_grid(&mut self, v: Vec<String>) -> PyResult<()> {
        self.inner.cluster.grid = v
            .iter()
            .map(|m| parse::<ClusterMethod>(m, "clustering method"))
            .collect::<PyResult<_>>()?;
        Ok(())
    }
    /// Overrides embedding settings; unset arguments keep their values.
    #[pyo3(signature = (dim=None, epochs=None, infer_steps=None))]
    fn set_embedding(
        &mut self,
        dim: Option<usize>,
        epochs: Option<usize>,
        infer_steps: Option<usize>,
    ) {
        let e = &mut self.inner.embed;
        if let Some(v) = dim {
            e.dim = v;
        }
        if let Some(v) = epochs {
            e.epochs = v;
        }
        if let Some(v) = infer_steps {
            e.infer_steps = v;
        }
    }

    fn __repr__(&self) -> String {
        format!(
            "Params(seed={:?}, trim={}, n_bins={:?}, window={}, prior={}, kmode='{}')",
            self.inner.seed,
            self.inner.trim,
            self.inner.n_bins,
            self.inner.window,
            self.inner.prior,
            self.inner.kmode
        )
    }
}

/// Inputs read from `data_dir` under their default names, outputs in `out_dir`.
#[pyclass(module = "cyberscore")]
struct Pipeline {
    config: RunConfig,
}

#[pymethods]
impl Pipeline {
    #[new]
    #[pyo3(signature = (data_dir, out_dir, params=None))]
    fn new(data_dir: PathBuf, out_dir: PathBuf, params: Option<Params>) -> Self {
        let params = params.map(|p| p.inner).unwrap_or_default();
        Self {
            config: RunConfig::new(data_dir, out_dir, params),
        }
    }

    /// Runs one stage (`prep`, `embed`, ..., `report`) and returns the files written.
    fn run(&self, py: Python<'_>, stage: &str) -> PyResult<Vec<String>> {
        let stage: Stage = parse(stage, "stage")?;
        let written = py
            .detach(|| run_stage(stage, &self.config))
            .map_err(py_err)?;
        Ok(written
            .into_iter()
            .map(|p| p.display().to_string())
            .collect())
    }

    #[staticmethod]
    fn stages() -> Vec<&'static str> {
        let mut all: Vec<&str> = Stage::CHAIN.iter().map(|s| s.name()).collect();
        all.push(Stage::Report.name());
        all
    }

    #[getter]
    fn out_dir(&self) -> String {
        self.config.out_dir.display().to_string()
    }
}

/// Writes a synthetic dataset with planted structure to `out_dir`; returns the files.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
#[pyo3(signature = (out_dir, seed, n_firms=None, n_months=None, kb_entries=None, premium=None, start=None))]
fn synth(
    py: Python<'_>,
    out_dir: PathBuf,
    seed: u64,
    n_firms: Option<usize>,
    n_months: Option<usize>,
    kb_entries: Option<usize>,
    premium: Option<f64>,
    start: Option<&str>,
) -> PyResult<Vec<String>> {
    let mut c = SynthConfig::new(seed);
    if let Some(v) = n_firms {
        c.n_firms = v;
    }
    if let Some(v) = n_months {
        c.n_months = v;
    }
    if let Some(v) = kb_entries {
        c.kb_entries = v;
    }
    if let Some(v) = premium {
        c.premium = v;
    }
    if let Some(v) = start {
        c.start = parse::<Month>(v, "month")?;
    }
    let written = py
        .detach(|| generate(&c).and_then(|d| d.write(&out_dir)))
        .map_err(py_err)?;
    Ok(written
        .into_iter()
        .map(|p| p.display().to_string())
        .collect())
}

#[pyclass(module = "cyberscore", get_all, frozen)]
struct GrsResult {
    statistic: f64,
    p_value: f64,
    n: usize,
    t: usize,
    k: usize,
    alphas: Vec<f64>,
}

#[pymethods]
impl GrsResult {
    fn __repr__(&self) -> String {
        format!(
            "GrsResult(statistic={}, p_value={}, n={}, t={}, k={})",
            self.statistic, self.p_value, self.n, self.t, self.k
        )
    }
}

/// Joint zero-alpha test of `portfolios` (N series of length T) on `factors` (K series).
#[pyfunction]
fn grs_test(portfolios: Vec<Vec<f64>>, factors: Vec<Vec<f64>>) -> PyResult<GrsResult> {
    let r = core_grs(&portfolios, &factors).map_err(py_err)?;
    Ok(GrsResult {
        statistic: r.statistic,
        p_value: r.p_value,
        n: r.n,
        t: r.t,
        k: r.k,
        alphas: r.alphas,
    })
}

#[pyclass(module = "cyberscore", get_all, frozen)]
struct WelchResult {
    mean_difference: f64,
    t_stat: f64,
    df: f64,
    p_value: f64,
}

#[pymethods]
impl WelchResult {
    fn __repr__(&self) -> String {
        format!(
            "WelchResult(mean_difference={}, t_stat={}, df={}, p_value={})",
            self.mean_difference, self.t_stat, self.df, self.p_value
        )
    }
}

#[pyfunction]
fn welch_test(a: Vec<f64>, b: Vec<f64>) -> PyResult<WelchResult> {
    let r = core_welch(&a, &b).map_err(py_err)?;
    Ok(WelchResult {
        mean_difference: r.mean_difference,
        t_stat: r.t_stat,
        df: r.df,
        p_value: r.p_value,
    })
}

#[pyclass(module = "cyberscore", get_all, frozen)]
struct CarResult {
    start: i32,
    end: i32,
    car: f64,
    t_stat: f64,
    p_value: f64,
    days: usize,
}

#[pymethods]
impl CarResult {
    fn __repr__(&self) -> String {
        format!(
            "CarResult(window=[{}, {}], car={}, t_stat={})",
            self.start, self.end, self.car, self.t_stat
        )
    }
}

fn dated(series: BTreeMap<String, f64>) -> PyResult<BTreeMap<NaiveDate, f64>> {
    series
        .into_iter()
        .map(|(d, v)| Ok((parse_date(&d)?, v)))
        .collect()
}

/// Market-model cumulative abnormal returns. Series map ISO dates to returns;
/// `calendar` lists the trading days.
#[pyfunction]
#[pyo3(signature = (asset, market, calendar, event_date, windows, estimation_days=252))]
fn car(
    asset: BTreeMap<String, f64>,
    market: BTreeMap<String, f64>,
    calendar: Vec<String>,
    event_date: &str,
    windows: Vec<(i32, i32)>,
    estimation_days: usize,
) -> PyResult<Vec<CarResult>> {
    let days = calendar
        .iter()
        .map(|d| parse_date(d))
        .collect::<PyResult<Vec<_>>>()?;
    let cal = TradingCalendar::new(days).map_err(py_err)?;
    let rows = core_car(
        &dated(asset)?,
        &dated(market)?,
        &cal,
        parse_date(event_date)?,
        &windows,
        estimation_days,
    )
    .map_err(py_err)?;
    Ok(rows
        .into_iter()
        .map(|r| CarResult {
            start: r.window.0,
            end: r.window.1,
            car: r.car,
            t_stat: r.t_stat,
            p_value: r.p_value,
            days: r.days,
        })
        .collect())
}

/// Cosine-similarity graph after the default thresholds, as used by the
/// graph clustering methods and the grid's modularity column.
fn thresholded_graph(vectors: &[Vec<f64>]) -> cyberscore::Result<SimilarityMatrix> {
    let t = Thresholds::default();
    let s = build_similarity(vectors, vec![String::new(); vectors.len()])?;
    apply_thresholds(&s, t.low, t.high, t.high_value)
}

/// Clusters `vectors` with a method in display form (`kmeans(k=4)`, `louvain`,
/// `spectral(k=4;egn=6)`); graph methods use the default similarity thresholds.
/// Returns one label per vector.
#[pyfunction]
#[pyo3(signature = (vectors, method, seed))]
fn cluster(
    py: Python<'_>,
    vectors: Vec<Vec<f64>>,
    method: &str,
    seed: u64,
) -> PyResult<Vec<usize>> {
    let method: ClusterMethod = parse(method, "clustering method")?;
    let assignment = py
        .detach(|| {
            let graph = || thresholded_graph(&vectors);
            match method {
                ClusterMethod::Kmeans { k } => {
                    spherical_kmeans_restarts(&vectors, k, seed, DEFAULT_MAX_ITER, KMEANS_RESTARTS)
                }
                ClusterMethod::Louvain => louvain(&graph()?, seed),
                ClusterMethod::Spectral { k, egn } => spectral_cluster(&graph()?, k, egn, seed),
            }
        })
        .map_err(py_err)?;
    Ok(assignment.labels().to_vec())
}

/// Newman modularity of `labels` on the thresholded similarity graph of `vectors`.
#[pyfunction]
fn modularity(vectors: Vec<Vec<f64>>, labels: Vec<usize>) -> PyResult<f64> {
    let s = thresholded_graph(&vectors).map_err(py_err)?;
    let a = cyberscore::cluster::ClusterAssignment::new(labels).map_err(py_err)?;
    core_modularity(&s, &a).map_err(py_err)
}

/// Per-paragraph maximum cosine similarity to any knowledgebase vector.
#[pyfunction]
fn paragraph_maxima(filing: Vec<Vec<f64>>, knowledgebase: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
    core_maxima(&filing, &knowledgebase).map_err(py_err)
}

/// Mean of the top `trim` share of paragraph maxima.
#[pyfunction]
#[pyo3(signature = (maxima, trim=0.99))]
fn cyber_score(maxima: Vec<f64>, trim: f64) -> PyResult<f64> {
    core_cyber_score(&maxima, trim).map_err(py_err)
}

/// Cleans `text` into token sentences, dropping stop words and common words.
#[pyfunction]
#[pyo3(signature = (text, stoplist=Vec::new(), common_words=Vec::new()))]
fn preprocess(text: &str, stoplist: Vec<String>, common_words: Vec<String>) -> Vec<Vec<String>> {
    preprocess_text(text, &WordList::new(stoplist), &WordList::new(common_words))
}

/// Groups token sentences into paragraphs of at least `target_words` tokens.
#[pyfunction]
#[pyo3(signature = (sentences, target_words=40))]
fn segment(sentences: Vec<Vec<String>>, target_words: usize) -> PyResult<Vec<Vec<String>>> {
    let paragraphs = segment_paragraphs("doc", &sentences, target_words).map_err(py_err)?;
    Ok(paragraphs.into_iter().map(|p| p.tokens).collect())
}

/// Paragraph-vector model trained on token lists; the word matrix is frozen
/// after training.
#[pyclass(module = "cyberscore")]
struct EmbeddingModel {
    model: CoreModel,
    vectors: Vec<Vec<f64>>,
    loss: Vec<f64>,
}

fn as_paragraphs(docs: Vec<Vec<String>>) -> Vec<Paragraph> {
    docs.into_iter()
        .enumerate()
        .map(|(i, tokens)| Paragraph::new(format!("p{i:08}"), 0, tokens))
        .collect()
}

#[pymethods]
impl EmbeddingModel {
    #[new]
    #[pyo3(signature = (paragraphs, seed, dim=64, epochs=40, negatives=5))]
    fn new(
        py: Python<'_>,
        paragraphs: Vec<Vec<String>>,
        seed: u64,
        dim: usize,
        epochs: usize,
        negatives: usize,
    ) -> PyResult<Self> {
        let n = paragraphs.len();
        let config = DbowConfig {
            dim,
            epochs,
            negatives,
            seed,
            ..DbowConfig::default()
        };
        let paragraphs = as_paragraphs(paragraphs);
        let training = py
            .detach(|| train_dbow(&paragraphs, config))
            .map_err(py_err)?;
        // training vectors are keyed by position; empty paragraphs get none
        let mut vectors = vec![Vec::new(); n];
        for v in training.vectors.values() {
            let i: usize = v.paragraph_ref.doc_id[1..].parse().expect("generated id");
            vectors[i].clone_from(&v.values);
        }
        Ok(Self {
            model: training.model,
            vectors,
            loss: training.epoch_loss,
        })
    }

    /// Trained vector of each input paragraph, in input order (empty for
    /// paragraphs without tokens).
    #[getter]
    fn vectors(&self) -> Vec<Vec<f64>> {
        self.vectors.clone()
    }

    /// Mean negative-sampling loss per epoch.
    #[getter]
    fn epoch_loss(&self) -> Vec<f64> {
        self.loss.clone()
    }

    #[getter]
    fn vocab_size(&self) -> usize {
        self.model.vocab_len()
    }

    /// Fits a vector for a new paragraph with the word matrix frozen.
    #[pyo3(signature = (tokens, steps=20, seed=0))]
    fn infer(&self, tokens: Vec<String>, steps: usize, seed: u64) -> PyResult<Vec<f64>> {
        let p = Paragraph::new("query", 0, tokens);
        Ok(self
            .model
            .infer_vector(&p, steps, seed)
            .map_err(py_err)?
            .values)
    }
}

#[pymodule(name = "cyberscore")]
fn cyberscore_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Params>()?;
    m.add_class::<Pipeline>()?;
    m.add_class::<EmbeddingModel>()?;
    m.add_class::<GrsResult>()?;
    m.add_class::<WelchResult>()?;
    m.add_class::<CarResult>()?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(grs_test, m)?)?;
    m.add_function(wrap_pyfunction!(welch_test, m)?)?;
    m.add_function(wrap_pyfunction!(car, m)?)?;
    m.add_function(wrap_pyfunction!(cluster, m)?)?;
    m.add_function(wrap_pyfunction!(modularity, m)?)?;
    m.add_function(wrap_pyfunction!(paragraph_maxima, m)?)?;
    m.add_function(wrap_pyfunction!(cyber_score, m)?)?;
    m.add_function(wrap_pyfunction!(preprocess, m)?)?;
    m.add_function(wrap_pyfunction!(segment, m)?)?;
    Ok(())
}
