//! Experiment configuration read from TOML.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::aggregate::LangClass;
use super::RunnerError;
use crate::analyzer::Analyzer;
use crate::corpus::QrelScheme;
use crate::expand::{CleanMode, ExpansionPlan, Order, RetrievalForm, Strategy};
use crate::gateway::{
    Gateway, GatewaySet, MockBackend, MockScript, RemoteBackend, RemoteConfig, RetryPolicy, DEFAULT_MAX_IN_FLIGHT,
};
use crate::index::{Bm25Params, DEFAULT_K_RETRIEVE};
use crate::lang::LangCode;
use crate::metrics::MetricSpec;

pub const DEFAULT_METRICS: [&str; 6] = ["hit@5", "hit@10", "recall@10", "recall@50", "mrr", "ndcg@10"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuerySetConfig {
    pub lang: LangCode,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollectionConfig {
    pub lang: LangCode,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QrelsConfig {
    pub query_lang: LangCode,
    pub doc_lang: LangCode,
    pub path: PathBuf,
    #[serde(default = "default_scheme")]
    pub scheme: QrelScheme,
}

fn default_scheme() -> QrelScheme {
    QrelScheme::Graded
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Mock,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub id: String,
    pub kind: BackendKind,
    /// Mock script path (mock backends).
    #[serde(default)]
    pub script: Option<PathBuf>,
    #[serde(default)]
    pub base_url: Option<String>,
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default)]
    pub timeout_secs: Option<u64>,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default)]
    pub retry: Option<RetryPolicy>,
}

fn default_in_flight() -> usize {
    DEFAULT_MAX_IN_FLIGHT
}

/// Shorthand for the cross product of strategies, orders and forms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixConfig {
    pub backends: Vec<String>,
    #[serde(default = "all_strategies")]
    pub strategies: Vec<Strategy>,
    #[serde(default = "all_orders")]
    pub orders: Vec<Order>,
    #[serde(default = "all_forms")]
    pub forms: Vec<RetrievalForm>,
    #[serde(default)]
    pub fewshot_pool: Option<String>,
    #[serde(default)]
    pub fewshot_count: Option<usize>,
    #[serde(default)]
    pub query_repetitions: Option<usize>,
    #[serde(default)]
    pub clean: CleanMode,
}

fn all_strategies() -> Vec<Strategy> {
    Strategy::ALL.to_vec()
}

fn all_orders() -> Vec<Order> {
    Order::ALL.to_vec()
}

fn all_forms() -> Vec<RetrievalForm> {
    RetrievalForm::ALL.to_vec()
}

fn default_k_retrieve() -> usize {
    DEFAULT_K_RETRIEVE
}

fn default_metrics() -> Vec<String> {
    DEFAULT_METRICS.iter().map(|m| m.to_string()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub output_dir: PathBuf,
    #[serde(default = "default_k_retrieve")]
    pub k_retrieve: usize,
    #[serde(default)]
    pub rng_seed: u64,
    #[serde(default)]
    pub bm25: Bm25Params,
    #[serde(default)]
    pub analyzer: Analyzer,
    pub query_sets: Vec<QuerySetConfig>,
    pub collections: Vec<CollectionConfig>,
    pub qrels: Vec<QrelsConfig>,
    #[serde(default)]
    pub backends: Vec<BackendConfig>,
    #[serde(default)]
    pub matrix: Option<MatrixConfig>,
    #[serde(default)]
    pub plans: Vec<ExpansionPlan>,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<String>,
    /// Binarization threshold for hit, recall and MRR.
    #[serde(default)]
    pub threshold: Option<u8>,
    /// Backend that translates baseline queries; the first plan's
    /// translation backend when unset.
    #[serde(default)]
    pub baseline_backend: Option<String>,
    /// Overrides for the language class used by quadrant aggregation.
    #[serde(default)]
    pub lang_classes: BTreeMap<LangCode, LangClass>,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn parse(input: &str, base_dir: impl Into<PathBuf>) -> Result<Self, RunnerError> {
        let mut config: ExperimentConfig = toml::from_str(input).map_err(|e| RunnerError::Config(e.to_string()))?;
        config.base_dir = base_dir.into();
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RunnerError> {
        let path = path.as_ref();
        let input = fs::read_to_string(path).map_err(|e| RunnerError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&input, base)
    }

    /// `path` joined to the config directory unless it is absolute.
    pub fn resolve(&self, path: impl AsRef<Path>) -> PathBuf {
        let path = path.as_ref();
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn output_path(&self) -> PathBuf {
        self.resolve(&self.output_dir)
    }

    /// Explicit plans followed by the matrix expansion, duplicates removed.
    pub fn expanded_plans(&self) -> Vec<ExpansionPlan> {
        let mut plans: Vec<ExpansionPlan> = self.plans.clone();
        if let Some(matrix) = &self.matrix {
            for backend in &matrix.backends {
                for &strategy in &matrix.strategies {
                    for &order in &matrix.orders {
                        for &form in &matrix.forms {
                            let mut plan =
                                ExpansionPlan::new(strategy, order, form, backend.clone()).with_seed(self.rng_seed);
                            plan.clean = matrix.clean;
                            if let Some(reps) = matrix.query_repetitions {
                                plan.query_repetitions = reps;
                            }
                            if strategy == Strategy::FewShot {
                                plan.fewshot_pool = matrix.fewshot_pool.clone();
                                if let Some(count) = matrix.fewshot_count {
                                    plan.fewshot_count = count;
                                }
                            }
                            plans.push(plan);
                        }
                    }
                }
            }
        }
        let mut seen = std::collections::HashSet::new();
        plans.retain(|p| seen.insert(p.fingerprint()));
        plans
    }

    pub fn metric_specs(&self) -> Result<Vec<MetricSpec>, RunnerError> {
        self.metrics
            .iter()
            .map(|m| {
                let spec: MetricSpec = m
                    .parse()
                    .map_err(|e| RunnerError::Config(format!("metric `{m}`: {e}")))?;
                Ok(match self.threshold {
                    Some(t) => spec.with_threshold(t),
                    None => spec,
                })
            })
            .collect()
    }

    pub fn baseline_backend_id(&self) -> Option<String> {
        self.baseline_backend.clone().or_else(|| {
            self.expanded_plans()
                .first()
                .map(|p| p.translation_backend().to_string())
        })
    }

    pub fn validate(&self) -> Result<(), RunnerError> {
        let fail = |msg: String| Err(RunnerError::Config(msg));
        if self.k_retrieve == 0 {
            return fail("k_retrieve must be at least 1".into());
        }
        self.bm25.validate().map_err(|e| RunnerError::Config(e.to_string()))?;
        if let Some(t) = self.threshold {
            crate::corpus::check_threshold(t).map_err(|e| RunnerError::Config(e.to_string()))?;
        }
        self.metric_specs()?;
        let backend_ids: Vec<&str> = self.backends.iter().map(|b| b.id.as_str()).collect();
        for (i, id) in backend_ids.iter().enumerate() {
            if backend_ids[..i].contains(id) {
                return fail(format!("backend `{id}` defined twice"));
            }
        }
        for backend in &self.backends {
            match backend.kind {
                BackendKind::Mock if backend.script.is_none() => {
                    return fail(format!("mock backend `{}` needs a script", backend.id))
                }
                BackendKind::Remote if backend.base_url.is_none() || backend.model.is_none() => {
                    return fail(format!("remote backend `{}` needs base_url and model", backend.id))
                }
                _ => {}
            }
            if backend.max_in_flight == 0 {
                return fail(format!("backend `{}`: max_in_flight must be at least 1", backend.id));
            }
        }
        for plan in self.expanded_plans() {
            plan.validate()
                .map_err(|e| RunnerError::Config(format!("plan {}: {e}", plan.label())))?;
            for id in [plan.backend_id.as_str(), plan.translation_backend()] {
                if !backend_ids.contains(&id) {
                    return fail(format!("plan {} uses unknown backend `{id}`", plan.label()));
                }
            }
        }
        if let Some(id) = &self.baseline_backend {
            if !backend_ids.contains(&id.as_str()) {
                return fail(format!("baseline_backend `{id}` is not defined"));
            }
        }
        for qrels in &self.qrels {
            let has_queries = self.query_sets.iter().any(|q| q.lang == qrels.query_lang);
            let has_docs = self.collections.iter().any(|c| c.lang == qrels.doc_lang);
            if !has_queries || !has_docs {
                return fail(format!(
                    "qrels for {}-{} have no matching query set or collection",
                    qrels.query_lang, qrels.doc_lang
                ));
            }
        }
        Ok(())
    }

    /// Instantiate every configured backend behind its own gateway.
    pub fn build_gateways(&self) -> Result<GatewaySet, RunnerError> {
        let mut set = GatewaySet::new();
        for backend in &self.backends {
            let retry = backend.retry.unwrap_or_default();
            let client: Arc<dyn crate::gateway::Backend> = match backend.kind {
                BackendKind::Mock => {
                    let path = self.resolve(backend.script.as_ref().expect("validated"));
                    let script = MockScript::load(&path).map_err(|e| {
                        RunnerError::Config(format!("backend `{}` script {}: {e}", backend.id, path.display()))
                    })?;
                    Arc::new(MockBackend::new(backend.id.clone(), script))
                }
                BackendKind::Remote => {
                    let mut config = RemoteConfig {
                        base_url: backend.base_url.clone().expect("validated"),
                        model: backend.model.clone().expect("validated"),
                        timeout_secs: 120,
                    };
                    if let Some(t) = backend.timeout_secs {
                        config.timeout_secs = t;
                    }
                    Arc::new(RemoteBackend::new(backend.id.clone(), config))
                }
            };
            set.insert(Gateway::with_policy(client, retry, backend.max_in_flight));
        }
        Ok(set)
    }
}
