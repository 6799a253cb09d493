//! `xpandir` command-line driver.
//!
//! Results go to stdout in tab-separated or JSONL form; progress and
//! diagnostics go to stderr through `env_logger` (set `RUST_LOG=info`).

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use xpandir::corpus::{self, QrelScheme, RecordFormat};
use xpandir::expand::{self, ExpandedQuery, ExpansionPlan, FewshotPool, Order, RetrievalForm, Strategy};
use xpandir::gateway::serve::{MockServer, ServeOptions};
use xpandir::gateway::{Backend, Gateway, GatewaySet, MockBackend, MockScript, RemoteBackend, RemoteConfig};
use xpandir::index::{self, Bm25Params, InvertedIndex, RankedList, DEFAULT_K_RETRIEVE};
use xpandir::lang::LangCode;
use xpandir::metrics::{self, MetricSpec, DEFAULT_THRESHOLD};
use xpandir::runner::{self, Experiment, ExperimentConfig, DEFAULT_METRICS};
use xpandir::trec;

#[derive(Parser)]
#[command(
    name = "xpandir",
    version,
    about = "Cross-lingual generative query expansion with BM25"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a BM25 index over a document collection.
    Index(IndexArgs),
    /// Expand a query set with one plan.
    Expand(ExpandArgs),
    /// Rank queries or expanded queries against a collection.
    Retrieve(RetrieveArgs),
    /// Score a TREC run against qrels.
    Eval(EvalArgs),
    /// Run the full expansion matrix from an experiment config.
    RunMatrix(RunMatrixArgs),
    /// Aggregate a results file by language and quadrant.
    Report(ReportArgs),
    /// Serve a mock script over the OpenAI-compatible chat protocol.
    MockServe(MockServeArgs),
}

#[derive(Args)]
struct IndexArgs {
    #[arg(long)]
    docs: PathBuf,
    #[arg(long)]
    lang: LangCode,
    /// Input format; guessed from the extension when omitted.
    #[arg(long)]
    format: Option<RecordFormat>,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct BackendArgs {
    /// Mock script (JSONL rules) to answer generation requests.
    #[arg(long, conflicts_with_all = ["base_url", "model"])]
    script: Option<PathBuf>,
    /// Base URL of an OpenAI-compatible endpoint, e.g. http://host:8000/v1.
    #[arg(long, requires = "model")]
    base_url: Option<String>,
    #[arg(long)]
    model: Option<String>,
    /// Backend id recorded in plans and traces.
    #[arg(long)]
    backend_id: Option<String>,
}

impl BackendArgs {
    fn gateways(&self) -> Result<(String, GatewaySet)> {
        let (id, backend): (String, Arc<dyn Backend>) = match (&self.script, &self.base_url, &self.model) {
            (Some(path), _, _) => {
                let id = self.backend_id.clone().unwrap_or_else(|| "mock".into());
                let script = MockScript::load(path).with_context(|| format!("mock script {}", path.display()))?;
                (id.clone(), Arc::new(MockBackend::new(id, script)))
            }
            (None, Some(base_url), Some(model)) => {
                let id = self.backend_id.clone().unwrap_or_else(|| model.clone());
                let config = RemoteConfig {
                    base_url: base_url.clone(),
                    model: model.clone(),
                    timeout_secs: 120,
                };
                (id.clone(), Arc::new(RemoteBackend::new(id, config)))
            }
            _ => bail!("a backend is required: pass --script, or --base-url with --model"),
        };
        let mut set = GatewaySet::new();
        set.insert(Gateway::new(backend));
        Ok((id, set))
    }
}

#[derive(Args)]
struct ExpandArgs {
    #[arg(long)]
    queries: PathBuf,
    /// Query language.
    #[arg(long)]
    lang: LangCode,
    /// Document language the queries are expanded into.
    #[arg(long)]
    target: LangCode,
    #[arg(long, default_value = "zero-shot")]
    strategy: Strategy,
    #[arg(long, default_value = "translate-then-expand")]
    order: Order,
    #[arg(long, default_value = "query-plus-doc")]
    retrieval_form: RetrievalForm,
    /// Few-shot example pool; `{lang}` is replaced by the expansion language.
    #[arg(long)]
    fewshot_pool: Option<String>,
    #[arg(long, default_value_t = expand::DEFAULT_FEWSHOT_COUNT)]
    fewshot_count: usize,
    #[arg(long, default_value_t = 1)]
    repetitions: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    backend: BackendArgs,
    /// Write JSONL here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct RetrieveArgs {
    /// Saved index from `xpandir index`.
    #[arg(long, conflicts_with = "docs")]
    index: Option<PathBuf>,
    /// Build the index on the fly from this collection.
    #[arg(long, requires = "doc_lang")]
    docs: Option<PathBuf>,
    #[arg(long)]
    doc_lang: Option<LangCode>,
    /// Queries as TSV/JSONL, or expanded JSONL with --expanded.
    #[arg(long)]
    queries: PathBuf,
    /// Language of the query text; required unless --expanded.
    #[arg(long, required_unless_present = "expanded")]
    lang: Option<LangCode>,
    /// Treat --queries as `xpandir expand` output and rank its final text.
    #[arg(long)]
    expanded: bool,
    #[arg(long, default_value_t = 1.2)]
    k1: f64,
    #[arg(long, default_value_t = 0.75)]
    b: f64,
    #[arg(long, default_value_t = DEFAULT_K_RETRIEVE)]
    k_retrieve: usize,
    #[arg(long, default_value = "xpandir")]
    tag: String,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    run: PathBuf,
    #[arg(long)]
    qrels: PathBuf,
    /// Metric in `name@k` form (`mrr` takes no k). Repeatable.
    #[arg(long = "metric")]
    metrics: Vec<MetricSpec>,
    #[arg(long, default_value = "graded")]
    scheme: QrelScheme,
    /// Minimum grade counted as relevant for hit, recall and MRR.
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: u8,
    /// Score judged queries absent from the run as empty rankings instead
    /// of skipping them.
    #[arg(long)]
    include_missing: bool,
    /// Also print one row per query.
    #[arg(long)]
    per_query: bool,
}

#[derive(Args)]
struct RunMatrixArgs {
    #[arg(long)]
    config: PathBuf,
    /// Print the plan grid and exit without loading data or calling backends.
    #[arg(long)]
    dry_run: bool,
    /// Restrict to these query languages. Repeatable.
    #[arg(long = "lang")]
    langs: Vec<LangCode>,
    #[arg(long)]
    k1: Option<f64>,
    #[arg(long)]
    b: Option<f64>,
    #[arg(long)]
    k_retrieve: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Keep only plans with this strategy. Repeatable.
    #[arg(long = "strategy")]
    strategies: Vec<Strategy>,
    #[arg(long = "order")]
    orders: Vec<Order>,
    #[arg(long = "retrieval-form")]
    forms: Vec<RetrievalForm>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// `results.jsonl` written by run-matrix.
    #[arg(long)]
    results: PathBuf,
    /// Write heatmaps and long tables here; otherwise print means to stdout.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Print deltas against the baseline instead of means.
    #[arg(long)]
    deltas: bool,
}

#[derive(Args)]
struct MockServeArgs {
    #[arg(long)]
    script: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8089")]
    addr: String,
    /// Answer the first N completion requests with HTTP 429.
    #[arg(long, default_value_t = 0)]
    fail_first: u64,
    #[arg(long)]
    model: Option<String>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Index(args) => index_cmd(args),
        Command::Expand(args) => expand_cmd(args),
        Command::Retrieve(args) => retrieve_cmd(args),
        Command::Eval(args) => eval_cmd(args),
        Command::RunMatrix(args) => run_matrix_cmd(args),
        Command::Report(args) => report_cmd(args),
        Command::MockServe(args) => mock_serve_cmd(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", describe(&err));
            ExitCode::from(1)
        }
    }
}

/// The error chain joined by `: `, skipping causes the previous message
/// already spells out.
fn describe(err: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if !out.contains(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

/// Write `text` to `path`, or to stdout when no path is given.
fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
            }
            std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn index_cmd(args: IndexArgs) -> Result<()> {
    let format = args.format.unwrap_or_else(|| RecordFormat::from_path(&args.docs));
    let collection = corpus::load_documents(&args.docs, args.lang, format)?;
    let index = index::build_index(&collection)?;
    index.save(&args.output)?;
    println!("docs\t{}", index.doc_count());
    println!("terms\t{}", index.vocabulary_size());
    println!("avgdl\t{}", index.avgdl());
    Ok(())
}

fn expand_cmd(args: ExpandArgs) -> Result<()> {
    let (backend_id, gateways) = args.backend.gateways()?;
    let mut plan = ExpansionPlan::new(args.strategy, args.order, args.retrieval_form, backend_id)
        .with_seed(args.seed)
        .with_repetitions(args.repetitions);
    plan.fewshot_count = args.fewshot_count;
    if let Some(pool) = &args.fewshot_pool {
        plan = plan.with_fewshot_pool(pool.clone());
    }
    plan.validate()?;
    let pool = match &plan.fewshot_pool {
        Some(template) if plan.strategy == Strategy::FewShot => {
            let lang = plan.expansion_lang(args.lang, args.target);
            let path = template.replace("{lang}", lang.as_str());
            Some(FewshotPool::load(&path, lang).with_context(|| format!("few-shot pool {path}"))?)
        }
        _ => None,
    };
    let queries = corpus::load_queries(&args.queries, args.lang, RecordFormat::from_path(&args.queries))?;
    let mut out = String::new();
    let mut failed = 0usize;
    for query in &queries {
        match expand::expand_query(&gateways, &plan, pool.as_ref(), query, args.target) {
            Ok(expanded) => {
                out.push_str(&serde_json::to_string(&expanded)?);
                out.push('\n');
            }
            Err(err @ expand::ExpandError::Generation { .. }) => {
                log::warn!("{err}");
                failed += 1;
            }
            Err(err) => return Err(err.into()),
        }
    }
    emit(args.output.as_deref(), &out)?;
    if failed > 0 {
        bail!("{failed} of {} queries failed to expand", queries.len());
    }
    Ok(())
}

fn retrieve_cmd(args: RetrieveArgs) -> Result<()> {
    let params = Bm25Params::new(args.k1, args.b)?;
    let index = match (&args.index, &args.docs, args.doc_lang) {
        (Some(path), _, _) => InvertedIndex::load(path).with_context(|| format!("index {}", path.display()))?,
        (None, Some(path), Some(lang)) => {
            let collection = corpus::load_documents(path, lang, RecordFormat::from_path(path))?;
            index::build_index(&collection)?
        }
        _ => bail!("pass --index, or --docs with --doc-lang"),
    };
    let texts: Vec<(String, String, LangCode)> = if args.expanded {
        let input =
            std::fs::read_to_string(&args.queries).with_context(|| format!("reading {}", args.queries.display()))?;
        let mut texts = Vec::new();
        for (idx, line) in input.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let record: ExpandedQuery =
                serde_json::from_str(line).with_context(|| format!("{} line {}", args.queries.display(), idx + 1))?;
            texts.push((record.query_id, record.final_text, record.target_lang));
        }
        texts
    } else {
        let lang = args.lang.expect("clap enforces --lang");
        corpus::load_queries(&args.queries, lang, RecordFormat::from_path(&args.queries))?
            .into_iter()
            .map(|q| (q.query_id, q.text, q.lang))
            .collect()
    };
    let mut lists = Vec::with_capacity(texts.len());
    for (query_id, text, lang) in &texts {
        lists.push(index::retrieve(
            &index,
            &params,
            query_id,
            text,
            *lang,
            args.k_retrieve,
        )?);
    }
    emit(args.output.as_deref(), &trec::write_run(&lists, &args.tag))
}

fn eval_cmd(args: EvalArgs) -> Result<()> {
    let mut run = trec::load_run(&args.run).with_context(|| format!("run {}", args.run.display()))?;
    let qrels = corpus::load_qrels(&args.qrels, args.scheme)?;
    corpus::check_threshold(args.threshold)?;
    let specs: Vec<MetricSpec> = if args.metrics.is_empty() {
        DEFAULT_METRICS.iter().map(|m| m.parse()).collect::<Result<_, _>>()?
    } else {
        args.metrics
    };
    let specs: Vec<MetricSpec> = specs.into_iter().map(|s| s.with_threshold(args.threshold)).collect();
    for spec in &specs {
        spec.check_scheme(args.scheme)?;
    }
    if args.include_missing {
        let depth = run.lists.values().map(|l| l.depth).max().unwrap_or(DEFAULT_K_RETRIEVE);
        for query_id in qrels.query_ids() {
            if !run.lists.contains_key(query_id) {
                run.lists
                    .insert(query_id.to_string(), RankedList::empty(query_id, depth));
            }
        }
    }
    let reports = metrics::evaluate_run(&run.lists, &qrels, &specs);
    let mut out = String::new();
    for report in &reports {
        out.push_str(&format!(
            "{}\tall\t{}\t{}\t{}\n",
            report.spec.label(),
            report.mean,
            report.n_queries,
            report.n_excluded
        ));
    }
    if args.per_query {
        for report in &reports {
            for (query_id, value) in &report.per_query {
                out.push_str(&format!("{}\t{query_id}\t{value}\n", report.spec.label()));
            }
        }
    }
    emit(None, &out)
}

/// Apply command-line overrides on top of the loaded config.
fn apply_overrides(config: &mut ExperimentConfig, args: &RunMatrixArgs) {
    if let Some(k1) = args.k1 {
        config.bm25.k1 = k1;
    }
    if let Some(b) = args.b {
        config.bm25.b = b;
    }
    if let Some(k) = args.k_retrieve {
        config.k_retrieve = k;
    }
    if let Some(seed) = args.seed {
        config.rng_seed = seed;
        for plan in &mut config.plans {
            plan.rng_seed = seed;
        }
    }
    if let Some(dir) = &args.output_dir {
        config.output_dir = dir.clone();
    }
    if !args.langs.is_empty() {
        let langs: BTreeSet<LangCode> = args.langs.iter().copied().collect();
        config.qrels.retain(|q| langs.contains(&q.query_lang));
    }
    let keep = |plan: &ExpansionPlan| {
        (args.strategies.is_empty() || args.strategies.contains(&plan.strategy))
            && (args.orders.is_empty() || args.orders.contains(&plan.order))
            && (args.forms.is_empty() || args.forms.contains(&plan.retrieval_form))
    };
    config.plans.retain(keep);
    if let Some(matrix) = &mut config.matrix {
        if !args.strategies.is_empty() {
            matrix.strategies.retain(|s| args.strategies.contains(s));
        }
        if !args.orders.is_empty() {
            matrix.orders.retain(|o| args.orders.contains(o));
        }
        if !args.forms.is_empty() {
            matrix.forms.retain(|f| args.forms.contains(f));
        }
    }
}

fn run_matrix_cmd(args: RunMatrixArgs) -> Result<()> {
    let mut config = ExperimentConfig::load(&args.config)?;
    apply_overrides(&mut config, &args);
    if args.dry_run {
        let mut out = String::new();
        for plan in runner::dry_run_grid(&config)? {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                plan.cell_name(),
                plan.strategy,
                plan.order,
                plan.retrieval_form,
                plan.backend_id
            ));
        }
        return emit(None, &out);
    }
    let experiment = Experiment::new(config)?;
    let outcome = experiment.run_matrix()?;
    log::info!(
        "{} results, {} gateway calls, written to {}",
        outcome.results.len(),
        outcome.generated,
        experiment.config().output_path().display()
    );
    let mut out = String::new();
    for result in &outcome.results {
        for metric in &result.metrics {
            out.push_str(&format!(
                "{}-{}\t{}\t{}\t{}\n",
                result.query_lang, result.doc_lang, result.cell, metric.metric, metric.mean
            ));
        }
    }
    emit(None, &out)
}

fn report_cmd(args: ReportArgs) -> Result<()> {
    let results = runner::load_results(&args.results)?;
    let langs: BTreeSet<LangCode> = results.iter().flat_map(|r| [r.query_lang, r.doc_lang]).collect();
    let classes = runner::lang_classes(&langs, &BTreeMap::new());
    let view = runner::aggregate(&results, &classes)?;
    match &args.output_dir {
        Some(dir) => runner::write_aggregates(dir, &view)?,
        None => emit(None, &runner::aggregate::levels_csv(&view, args.deltas))?,
    }
    Ok(())
}

fn mock_serve_cmd(args: MockServeArgs) -> Result<()> {
    let script = MockScript::load(&args.script).with_context(|| format!("mock script {}", args.script.display()))?;
    let options = ServeOptions {
        fail_first: args.fail_first,
        model: args.model,
    };
    let server = MockServer::start(script, &args.addr, options).with_context(|| format!("binding {}", args.addr))?;
    println!("{}", server.base_url());
    std::io::stdout().flush()?;
    log::info!("serving mock script on {}", server.addr());
    server.wait();
    Ok(())
}
