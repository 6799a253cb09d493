//! Experiment matrix execution.
//!
//! For every (query language, document language) pair with judgments, the
//! runner retrieves once with translated original queries (the baseline) and
//! once per expansion plan, evaluates each ranking, and writes per-cell
//! artifacts under `output_dir/<query_lang>-<doc_lang>/<cell>/`. Pair results
//! are then aggregated by language and by language-class quadrant.

pub mod aggregate;
mod config;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{self, CorpusError, QrelScheme, QrelSet, Query, RecordFormat};
use crate::expand::{self, CacheError, ExpandError, ExpandedQuery, ExpansionCache, ExpansionPlan, FewshotPool};
use crate::gateway::{self, GatewayError, GatewaySet};
use crate::index::{self, IndexError, InvertedIndex, RankedList};
use crate::lang::LangCode;
use crate::metrics::{self, MetricReport, MetricSpec};
use crate::trec;

pub use aggregate::{aggregate, lang_classes, AggregateError, AggregateView, LangClass, Means};
pub use config::{
    BackendConfig, BackendKind, CollectionConfig, ExperimentConfig, MatrixConfig, QrelsConfig, QuerySetConfig,
    DEFAULT_METRICS,
};

pub const BASELINE_CELL: &str = "baseline";
pub const RESULTS_FILE: &str = "results.jsonl";
pub const AGGREGATE_DIR: &str = "aggregate";
pub const RUN_FILE: &str = "run.trec";
pub const METRICS_FILE: &str = "metrics.csv";
pub const PER_QUERY_FILE: &str = "per_query.csv";
pub const EXPANDED_FILE: &str = "expanded.jsonl";
pub const TRANSLATIONS_FILE: &str = "translations.jsonl";

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error(transparent)]
    Expand(#[from] ExpandError),
    #[error(transparent)]
    Aggregate(#[from] AggregateError),
    #[error("{} line {line}: {reason}", path.display())]
    Malformed { path: PathBuf, line: usize, reason: String },
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> RunnerError + '_ {
    move |source| RunnerError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), RunnerError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_error(parent))?;
    }
    fs::write(path, contents).map_err(io_error(path))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Pair {
    pub query_lang: LangCode,
    pub doc_lang: LangCode,
}

impl Pair {
    pub fn new(query_lang: LangCode, doc_lang: LangCode) -> Self {
        Pair { query_lang, doc_lang }
    }

    pub fn dir_name(&self) -> String {
        format!("{}-{}", self.query_lang, self.doc_lang)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub metric: String,
    pub mean: f64,
    pub n_queries: usize,
    pub n_excluded: usize,
}

impl From<&MetricReport> for MetricSummary {
    fn from(report: &MetricReport) -> Self {
        MetricSummary {
            metric: report.spec.label(),
            mean: report.mean,
            n_queries: report.n_queries,
            n_excluded: report.n_excluded,
        }
    }
}

/// Metrics of one cell (baseline or plan) for one language pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairResult {
    pub query_lang: LangCode,
    pub doc_lang: LangCode,
    /// Cell directory name; [`BASELINE_CELL`] for the baseline.
    pub cell: String,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<ExpansionPlan>,
    pub metrics: Vec<MetricSummary>,
    /// Queries left out because some cell of the pair could not process them.
    pub n_failed: usize,
}

impl PairResult {
    pub fn pair(&self) -> Pair {
        Pair::new(self.query_lang, self.doc_lang)
    }

    pub fn means(&self) -> Means {
        self.metrics.iter().map(|m| (m.metric.clone(), m.mean)).collect()
    }

    pub fn mean(&self, metric: &str) -> Option<f64> {
        self.metrics.iter().find(|m| m.metric == metric).map(|m| m.mean)
    }

    pub fn is_baseline(&self) -> bool {
        self.cell == BASELINE_CELL
    }
}

pub fn results_to_jsonl(results: &[PairResult]) -> String {
    let mut out = String::new();
    for result in results {
        out.push_str(&serde_json::to_string(result).expect("pair result serializes"));
        out.push('\n');
    }
    out
}

pub fn load_results(path: impl AsRef<Path>) -> Result<Vec<PairResult>, RunnerError> {
    let path = path.as_ref();
    let input = fs::read_to_string(path).map_err(io_error(path))?;
    input
        .lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(idx, line)| {
            serde_json::from_str(line).map_err(|e| RunnerError::Malformed {
                path: path.to_path_buf(),
                line: idx + 1,
                reason: e.to_string(),
            })
        })
        .collect()
}

/// A translated baseline query, cached so reruns skip the gateway.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslationRecord {
    pub query_id: String,
    pub source_lang: LangCode,
    pub target_lang: LangCode,
    pub backend_id: String,
    pub original_text: String,
    pub translated_text: String,
}

fn load_translations(path: &Path) -> Result<BTreeMap<(String, String), TranslationRecord>, RunnerError> {
    let input = match fs::read_to_string(path) {
        Ok(input) => input,
        Err(err) if err.kind() == std::io::ErrorKind::NotFound => return Ok(BTreeMap::new()),
        Err(err) => return Err(io_error(path)(err)),
    };
    let mut records = BTreeMap::new();
    for (idx, line) in input.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: TranslationRecord = serde_json::from_str(line).map_err(|e| RunnerError::Malformed {
            path: path.to_path_buf(),
            line: idx + 1,
            reason: e.to_string(),
        })?;
        records.insert((record.query_id.clone(), record.backend_id.clone()), record);
    }
    Ok(records)
}

fn translations_to_jsonl<'a, I>(records: I) -> String
where
    I: IntoIterator<Item = &'a TranslationRecord>,
{
    let mut out = String::new();
    for record in records {
        out.push_str(&serde_json::to_string(record).expect("translation serializes"));
        out.push('\n');
    }
    out
}

/// Rankings of one cell before evaluation.
#[derive(Debug, Clone, Default)]
pub struct CellRun {
    pub lists: BTreeMap<String, RankedList>,
    /// Queries whose generation failed after retries.
    pub failed: BTreeSet<String>,
    /// Gateway calls this cell issued (zero on a full cache hit).
    pub generated: usize,
}

/// Loaded experiment: data, indexes, gateways and the plan list.
pub struct Experiment {
    config: ExperimentConfig,
    gateways: GatewaySet,
    specs: Vec<MetricSpec>,
    plans: Vec<ExpansionPlan>,
    queries: BTreeMap<LangCode, Vec<Query>>,
    indexes: BTreeMap<LangCode, InvertedIndex>,
    qrels: BTreeMap<Pair, QrelSet>,
}

impl std::fmt::Debug for Experiment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Experiment")
            .field("pairs", &self.pairs())
            .field("plans", &self.plans.len())
            .finish()
    }
}

/// Everything a full matrix run produced.
#[derive(Debug, Clone)]
pub struct MatrixOutcome {
    pub results: Vec<PairResult>,
    pub aggregate: AggregateView,
    /// Gateway calls issued by this run.
    pub generated: usize,
}

impl Experiment {
    /// Validate `config`, build its gateways and load all data.
    pub fn new(config: ExperimentConfig) -> Result<Self, RunnerError> {
        config.validate()?;
        let gateways = config.build_gateways()?;
        Self::with_gateways(config, gateways)
    }

    /// Like [`Experiment::new`] with caller-supplied gateways.
    pub fn with_gateways(config: ExperimentConfig, gateways: GatewaySet) -> Result<Self, RunnerError> {
        config.validate()?;
        let specs = config.metric_specs()?;
        let plans = config.expanded_plans();
        for id in plans
            .iter()
            .flat_map(|p| [p.backend_id.as_str(), p.translation_backend()])
            .chain(config.baseline_backend.as_deref())
        {
            if gateways.get(id).is_err() {
                return Err(RunnerError::Config(format!("no gateway for backend `{id}`")));
            }
        }
        let mut queries = BTreeMap::new();
        for set in &config.query_sets {
            let path = config.resolve(&set.path);
            let loaded = corpus::load_queries(&path, set.lang, RecordFormat::from_path(&path))?;
            if queries.insert(set.lang, loaded).is_some() {
                return Err(RunnerError::Config(format!("two query sets for {}", set.lang)));
            }
        }
        let mut indexes = BTreeMap::new();
        for collection in &config.collections {
            let path = config.resolve(&collection.path);
            let docs = corpus::load_documents(&path, collection.lang, RecordFormat::from_path(&path))?;
            let index = InvertedIndex::build(&docs, config.analyzer.clone())?;
            if indexes.insert(collection.lang, index).is_some() {
                return Err(RunnerError::Config(format!("two collections for {}", collection.lang)));
            }
        }
        let mut qrels = BTreeMap::new();
        for entry in &config.qrels {
            if entry.query_lang == entry.doc_lang {
                log::warn!("skipping same-language qrels {}-{}", entry.query_lang, entry.doc_lang);
                continue;
            }
            let set = corpus::load_qrels(config.resolve(&entry.path), entry.scheme)?;
            if qrels.insert(Pair::new(entry.query_lang, entry.doc_lang), set).is_some() {
                return Err(RunnerError::Config(format!(
                    "two qrels files for {}-{}",
                    entry.query_lang, entry.doc_lang
                )));
            }
        }
        Ok(Experiment {
            config,
            gateways,
            specs,
            plans,
            queries,
            indexes,
            qrels,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn gateways(&self) -> &GatewaySet {
        &self.gateways
    }

    pub fn plans(&self) -> &[ExpansionPlan] {
        &self.plans
    }

    /// Cross-language pairs with judgments, in language order.
    pub fn pairs(&self) -> Vec<Pair> {
        self.qrels.keys().copied().collect()
    }

    fn baseline_backend(&self) -> Result<String, RunnerError> {
        self.config
            .baseline_backend_id()
            .or_else(|| self.gateways.ids().next().map(str::to_string))
            .ok_or_else(|| RunnerError::Config("no backend available to translate baseline queries".into()))
    }

    fn pair_queries(&self, pair: Pair) -> Vec<&Query> {
        let judged: BTreeSet<&str> = self
            .qrels
            .get(&pair)
            .map(|q| q.query_ids().collect())
            .unwrap_or_default();
        self.queries
            .get(&pair.query_lang)
            .map(|qs| qs.iter().filter(|q| judged.contains(q.query_id.as_str())).collect())
            .unwrap_or_default()
    }

    fn index(&self, lang: LangCode) -> Result<&InvertedIndex, RunnerError> {
        self.indexes
            .get(&lang)
            .ok_or_else(|| RunnerError::Config(format!("no collection for {lang}")))
    }

    pub fn cell_dir(&self, pair: Pair, cell: &str) -> PathBuf {
        self.config.output_path().join(pair.dir_name()).join(cell)
    }

    fn retrieve(&self, pair: Pair, query_id: &str, text: &str) -> Result<RankedList, RunnerError> {
        let index = self.index(pair.doc_lang)?;
        Ok(index::retrieve(
            index,
            &self.config.bm25,
            query_id,
            text,
            pair.doc_lang,
            self.config.k_retrieve,
        )?)
    }

    /// Translate (or reuse cached translations of) the pair's queries and
    /// retrieve with them. Rewrites the cell's translation cache.
    pub fn baseline_rankings(&self, pair: Pair) -> Result<CellRun, RunnerError> {
        let backend = self.baseline_backend()?;
        let gateway = self
            .gateways
            .get(&backend)
            .map_err(|e| RunnerError::Config(e.to_string()))?;
        let cache_path = self.cell_dir(pair, BASELINE_CELL).join(TRANSLATIONS_FILE);
        let cached = load_translations(&cache_path)?;
        let queries = self.pair_queries(pair);
        let outcomes: Vec<Result<(TranslationRecord, bool), GatewayError>> = queries
            .par_iter()
            .map(|query| {
                let key = (query.query_id.clone(), backend.clone());
                match cached.get(&key) {
                    Some(record) if record.original_text == query.text && record.target_lang == pair.doc_lang => {
                        Ok((record.clone(), false))
                    }
                    _ => gateway::translate(gateway, &query.text, query.lang, pair.doc_lang).map(|text| {
                        let record = TranslationRecord {
                            query_id: query.query_id.clone(),
                            source_lang: query.lang,
                            target_lang: pair.doc_lang,
                            backend_id: backend.clone(),
                            original_text: query.text.clone(),
                            translated_text: text,
                        };
                        (record, true)
                    }),
                }
            })
            .collect();
        let mut run = CellRun::default();
        let mut records = Vec::new();
        for (query, outcome) in queries.iter().zip(outcomes) {
            match outcome {
                Ok((record, fresh)) => {
                    run.generated += usize::from(fresh);
                    let list = self.retrieve(pair, &query.query_id, &record.translated_text)?;
                    run.lists.insert(query.query_id.clone(), list);
                    records.push(record);
                }
                Err(err) => {
                    log::warn!("{} baseline: query {} failed: {err}", pair.dir_name(), query.query_id);
                    run.failed.insert(query.query_id.clone());
                }
            }
        }
        records.sort_by(|a, b| (&a.query_id, &a.backend_id).cmp(&(&b.query_id, &b.backend_id)));
        write_file(&cache_path, &translations_to_jsonl(&records))?;
        Ok(run)
    }

    fn fewshot_pool(&self, plan: &ExpansionPlan, lang: LangCode) -> Result<Option<FewshotPool>, RunnerError> {
        if plan.strategy != expand::Strategy::FewShot {
            return Ok(None);
        }
        let template = plan.fewshot_pool.as_deref().ok_or(ExpandError::MissingExamples)?;
        let path = self.config.resolve(template.replace("{lang}", lang.as_str()));
        Ok(Some(FewshotPool::load(path, lang)?))
    }

    /// Expand (or reuse cached expansions of) the pair's queries under
    /// `plan` and retrieve with the final texts. Rewrites the cell's cache.
    pub fn plan_rankings(&self, pair: Pair, plan: &ExpansionPlan) -> Result<CellRun, RunnerError> {
        let cache_path = self.cell_dir(pair, &plan.cell_name()).join(EXPANDED_FILE);
        let cached = ExpansionCache::load(&cache_path)?;
        let pool = self.fewshot_pool(plan, plan.expansion_lang(pair.query_lang, pair.doc_lang))?;
        let queries = self.pair_queries(pair);
        let outcomes: Vec<Result<(ExpandedQuery, bool), ExpandError>> = queries
            .par_iter()
            .map(|query| match cached.get(&query.query_id, plan) {
                Some(record) if record.original_text == query.text && record.target_lang == pair.doc_lang => {
                    Ok((record.clone(), false))
                }
                _ => expand::expand_query(&self.gateways, plan, pool.as_ref(), query, pair.doc_lang)
                    .map(|record| (record, true)),
            })
            .collect();
        let mut run = CellRun::default();
        let mut cache = ExpansionCache::new();
        for (query, outcome) in queries.iter().zip(outcomes) {
            match outcome {
                Ok((record, fresh)) => {
                    if fresh {
                        run.generated += record.trace.len();
                    }
                    let list = self.retrieve(pair, &query.query_id, &record.final_text)?;
                    run.lists.insert(query.query_id.clone(), list);
                    cache.insert(record);
                }
                Err(err @ ExpandError::Generation { .. }) => {
                    log::warn!("{} {}: {err}", pair.dir_name(), plan.label());
                    run.failed.insert(query.query_id.clone());
                }
                Err(err) => return Err(err.into()),
            }
        }
        cache.save(&cache_path)?;
        Ok(run)
    }

    /// Metric specs applicable to the pair's judgment scheme.
    fn specs_for(&self, scheme: QrelScheme) -> Vec<MetricSpec> {
        self.specs
            .iter()
            .copied()
            .filter(|spec| match spec.check_scheme(scheme) {
                Ok(()) => true,
                Err(err) => {
                    log::debug!("skipping {spec}: {err}");
                    false
                }
            })
            .collect()
    }

    /// Evaluate a cell without the `excluded` queries and write its run and
    /// metric files.
    fn finish_cell(
        &self,
        pair: Pair,
        cell: &str,
        plan: Option<&ExpansionPlan>,
        run: &CellRun,
        excluded: &BTreeSet<String>,
    ) -> Result<PairResult, RunnerError> {
        let qrels = &self.qrels[&pair];
        let lists: BTreeMap<String, RankedList> = run
            .lists
            .iter()
            .filter(|(id, _)| !excluded.contains(*id))
            .map(|(id, list)| (id.clone(), list.clone()))
            .collect();
        let reports = metrics::evaluate_run(&lists, qrels, &self.specs_for(qrels.scheme()));
        let dir = self.cell_dir(pair, cell);
        write_file(&dir.join(RUN_FILE), &trec::write_run(lists.values(), cell))?;
        write_file(&dir.join(METRICS_FILE), &metrics::reports_to_csv(&reports))?;
        write_file(&dir.join(PER_QUERY_FILE), &metrics::per_query_csv(&reports))?;
        Ok(PairResult {
            query_lang: pair.query_lang,
            doc_lang: pair.doc_lang,
            cell: cell.to_string(),
            label: plan
                .map(ExpansionPlan::label)
                .unwrap_or_else(|| BASELINE_CELL.to_string()),
            plan: plan.cloned(),
            metrics: reports.iter().map(MetricSummary::from).collect(),
            n_failed: excluded.len(),
        })
    }

    fn check_pair(&self, pair: Pair) -> Result<(), RunnerError> {
        if self.qrels.contains_key(&pair) {
            Ok(())
        } else {
            Err(RunnerError::Config(format!("no qrels for {}", pair.dir_name())))
        }
    }

    /// Baseline cell on its own; only its own failures are excluded.
    pub fn run_baseline(&self, pair: Pair) -> Result<PairResult, RunnerError> {
        self.check_pair(pair)?;
        let run = self.baseline_rankings(pair)?;
        self.finish_cell(pair, BASELINE_CELL, None, &run, &run.failed)
    }

    /// One plan cell on its own; only its own failures are excluded.
    pub fn run_plan(&self, pair: Pair, plan: &ExpansionPlan) -> Result<PairResult, RunnerError> {
        self.check_pair(pair)?;
        plan.validate()?;
        let run = self.plan_rankings(pair, plan)?;
        self.finish_cell(pair, &plan.cell_name(), Some(plan), &run, &run.failed)
    }

    /// Baseline plus every plan for one pair. A query that fails in any cell
    /// is dropped from all of them so deltas stay paired.
    pub fn run_pair(&self, pair: Pair) -> Result<(Vec<PairResult>, usize), RunnerError> {
        self.check_pair(pair)?;
        let baseline = self.baseline_rankings(pair)?;
        let mut cells = Vec::with_capacity(self.plans.len());
        for plan in &self.plans {
            cells.push((plan, self.plan_rankings(pair, plan)?));
        }
        let failed: BTreeSet<String> = baseline
            .failed
            .iter()
            .chain(cells.iter().flat_map(|(_, run)| run.failed.iter()))
            .cloned()
            .collect();
        let generated = baseline.generated + cells.iter().map(|(_, run)| run.generated).sum::<usize>();
        let mut results = vec![self.finish_cell(pair, BASELINE_CELL, None, &baseline, &failed)?];
        for (plan, run) in &cells {
            results.push(self.finish_cell(pair, &plan.cell_name(), Some(plan), run, &failed)?);
        }
        Ok((results, generated))
    }

    /// Languages of every pair, classed by the configured overrides.
    pub fn lang_classes(&self) -> BTreeMap<LangCode, LangClass> {
        let langs: BTreeSet<LangCode> = self.pairs().iter().flat_map(|p| [p.query_lang, p.doc_lang]).collect();
        lang_classes(&langs, &self.config.lang_classes)
    }

    /// Run every pair, then write `results.jsonl` and the aggregate tables.
    pub fn run_matrix(&self) -> Result<MatrixOutcome, RunnerError> {
        let mut results = Vec::new();
        let mut generated = 0;
        for pair in self.pairs() {
            log::info!("{}: baseline + {} plans", pair.dir_name(), self.plans.len());
            let (pair_results, calls) = self.run_pair(pair)?;
            results.extend(pair_results);
            generated += calls;
        }
        let out = self.config.output_path();
        write_file(&out.join(RESULTS_FILE), &results_to_jsonl(&results))?;
        let view = aggregate(&results, &self.lang_classes())?;
        write_aggregates(&out.join(AGGREGATE_DIR), &view)?;
        Ok(MatrixOutcome {
            results,
            aggregate: view,
            generated,
        })
    }
}

fn file_safe(metric: &str) -> String {
    metric.replace('@', "_at_")
}

/// Heatmaps per metric for the baseline, the mean over plans and its delta,
/// plus long tables of every series and delta.
pub fn write_aggregates(dir: &Path, view: &AggregateView) -> Result<(), RunnerError> {
    for metric in aggregate::metric_labels(view) {
        let name = file_safe(&metric);
        if let Some(baseline) = view.series.get(BASELINE_CELL) {
            write_file(
                &dir.join(format!("heatmap_baseline_{name}.csv")),
                &aggregate::heatmap_csv(baseline, &metric),
            )?;
        }
        if let Some(all) = view.series.get(aggregate::ALL_PLANS_SERIES) {
            write_file(
                &dir.join(format!("heatmap_{name}.csv")),
                &aggregate::heatmap_csv(all, &metric),
            )?;
        }
        if let Some(delta) = view.deltas.get(aggregate::ALL_PLANS_SERIES) {
            write_file(
                &dir.join(format!("heatmap_delta_{name}.csv")),
                &aggregate::heatmap_csv(delta, &metric),
            )?;
        }
    }
    write_file(&dir.join("means.csv"), &aggregate::levels_csv(view, false))?;
    write_file(&dir.join("deltas.csv"), &aggregate::levels_csv(view, true))?;
    Ok(())
}

/// Plan grid a run would execute, without touching data or backends.
pub fn dry_run_grid(config: &ExperimentConfig) -> Result<Vec<ExpansionPlan>, RunnerError> {
    config.validate()?;
    Ok(config.expanded_plans())
}
