//! Query expansion plans and their execution.
//!
//! A plan fixes one prompting strategy, the order of translation and
//! expansion, and whether the final retrieval text keeps the query next to the
//! generated pseudo-document. [`expand_query`] runs a plan for one query.

mod cache;
mod fewshot;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::Query;
use crate::gateway::{self, ChatRequest, GatewayError, GatewaySet};
use crate::lang::LangCode;
use crate::prompts;

pub use cache::{CacheError, CacheKey, ExpansionCache};
pub use fewshot::{sample_fewshot, FewshotPool, FEWSHOT_PASSAGE_TOKENS};

pub const DEFAULT_FEWSHOT_COUNT: usize = 5;

#[derive(Debug, Error)]
pub enum ExpandError {
    #[error("few-shot prompting needs example pairs")]
    MissingExamples,
    #[error("few-shot pool has {available} usable pairs, {requested} requested")]
    PoolTooSmall { available: usize, requested: usize },
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("query {query_id} is already in {lang}")]
    SameLanguage { query_id: String, lang: LangCode },
    #[error("step {step} failed for query {query_id}: {source}")]
    Generation {
        query_id: String,
        step: String,
        #[source]
        source: Box<GatewayError>,
        /// Calls that completed before the failure.
        trace: Vec<TraceStep>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    ZeroShot,
    #[serde(rename = "cot")]
    CoT,
    #[serde(rename = "rar")]
    RaR,
    FewShot,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::ZeroShot, Strategy::CoT, Strategy::RaR, Strategy::FewShot];

    pub fn name(&self) -> &'static str {
        match self {
            Strategy::ZeroShot => "zero-shot",
            Strategy::CoT => "cot",
            Strategy::RaR => "rar",
            Strategy::FewShot => "few-shot",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Order {
    TranslateThenExpand,
    ExpandThenTranslate,
}

impl Order {
    pub const ALL: [Order; 2] = [Order::TranslateThenExpand, Order::ExpandThenTranslate];

    pub fn name(&self) -> &'static str {
        match self {
            Order::TranslateThenExpand => "translate-then-expand",
            Order::ExpandThenTranslate => "expand-then-translate",
        }
    }

    pub fn short(&self) -> &'static str {
        match self {
            Order::TranslateThenExpand => "te",
            Order::ExpandThenTranslate => "et",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RetrievalForm {
    DocOnly,
    QueryPlusDoc,
}

impl RetrievalForm {
    pub const ALL: [RetrievalForm; 2] = [RetrievalForm::DocOnly, RetrievalForm::QueryPlusDoc];

    pub fn name(&self) -> &'static str {
        match self {
            RetrievalForm::DocOnly => "doc-only",
            RetrievalForm::QueryPlusDoc => "query-plus-doc",
        }
    }

    pub fn short(&self) -> &'static str {
        match self {
            RetrievalForm::DocOnly => "doc",
            RetrievalForm::QueryPlusDoc => "qd",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CleanMode {
    #[default]
    Off,
    StripMeta,
}

macro_rules! parse_by_name {
    ($ty:ty, $what:literal, $($alias:literal => $value:expr),+ $(,)?) => {
        impl FromStr for $ty {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
                    $($alias => Ok($value),)+
                    other => Err(format!("unknown {} `{other}`", $what)),
                }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }
    };
}

parse_by_name!(Strategy, "strategy",
    "zero-shot" => Strategy::ZeroShot, "zeroshot" => Strategy::ZeroShot,
    "cot" => Strategy::CoT, "chain-of-thought" => Strategy::CoT,
    "rar" => Strategy::RaR, "rephrase-and-respond" => Strategy::RaR,
    "few-shot" => Strategy::FewShot, "fewshot" => Strategy::FewShot,
);
parse_by_name!(Order, "order",
    "translate-then-expand" => Order::TranslateThenExpand, "te" => Order::TranslateThenExpand,
    "t+e" => Order::TranslateThenExpand,
    "expand-then-translate" => Order::ExpandThenTranslate, "et" => Order::ExpandThenTranslate,
    "e+t" => Order::ExpandThenTranslate,
);
parse_by_name!(RetrievalForm, "retrieval form",
    "doc-only" => RetrievalForm::DocOnly, "doc" => RetrievalForm::DocOnly,
    "query-plus-doc" => RetrievalForm::QueryPlusDoc, "qd" => RetrievalForm::QueryPlusDoc,
    "q+d" => RetrievalForm::QueryPlusDoc,
);

impl CleanMode {
    pub fn name(&self) -> &'static str {
        match self {
            CleanMode::Off => "off",
            CleanMode::StripMeta => "strip-meta",
        }
    }
}

parse_by_name!(CleanMode, "clean mode", "off" => CleanMode::Off, "strip-meta" => CleanMode::StripMeta);

fn default_repetitions() -> usize {
    1
}

fn default_fewshot_count() -> usize {
    DEFAULT_FEWSHOT_COUNT
}

/// One cell of the expansion matrix.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ExpansionPlan {
    pub strategy: Strategy,
    pub order: Order,
    pub retrieval_form: RetrievalForm,
    pub backend_id: String,
    /// Backend used for translation steps; the expansion backend when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub translation_backend_id: Option<String>,
    #[serde(default = "default_repetitions")]
    pub query_repetitions: usize,
    /// Query/passage pool for few-shot prompting. A `{lang}` placeholder is
    /// replaced by the language the expansion is generated in.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fewshot_pool: Option<String>,
    #[serde(default = "default_fewshot_count")]
    pub fewshot_count: usize,
    #[serde(default)]
    pub rng_seed: u64,
    #[serde(default)]
    pub clean: CleanMode,
}

impl ExpansionPlan {
    pub fn new(strategy: Strategy, order: Order, retrieval_form: RetrievalForm, backend_id: impl Into<String>) -> Self {
        ExpansionPlan {
            strategy,
            order,
            retrieval_form,
            backend_id: backend_id.into(),
            translation_backend_id: None,
            query_repetitions: 1,
            fewshot_pool: None,
            fewshot_count: DEFAULT_FEWSHOT_COUNT,
            rng_seed: 0,
            clean: CleanMode::Off,
        }
    }

    pub fn with_fewshot_pool(mut self, pool: impl Into<String>) -> Self {
        self.fewshot_pool = Some(pool.into());
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    pub fn with_repetitions(mut self, repetitions: usize) -> Self {
        self.query_repetitions = repetitions;
        self
    }

    pub fn translation_backend(&self) -> &str {
        self.translation_backend_id.as_deref().unwrap_or(&self.backend_id)
    }

    pub fn validate(&self) -> Result<(), ExpandError> {
        if self.backend_id.trim().is_empty() {
            return Err(ExpandError::InvalidPlan("backend_id is empty".into()));
        }
        if self.query_repetitions == 0 {
            return Err(ExpandError::InvalidPlan("query_repetitions must be at least 1".into()));
        }
        if self.fewshot_count == 0 {
            return Err(ExpandError::InvalidPlan("fewshot_count must be at least 1".into()));
        }
        match (self.strategy, &self.fewshot_pool) {
            (Strategy::FewShot, None) => Err(ExpandError::InvalidPlan("few-shot plans need a fewshot_pool".into())),
            (Strategy::FewShot, Some(_)) | (_, None) => Ok(()),
            (strategy, Some(_)) => Err(ExpandError::InvalidPlan(format!(
                "fewshot_pool is only valid for few-shot plans, not {strategy}"
            ))),
        }
    }

    /// Stable hex digest of the plan's canonical JSON form.
    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::to_string(self).expect("plan serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    /// Human-readable label, e.g. `zero-shot/te/qd@mock`.
    pub fn label(&self) -> String {
        format!(
            "{}/{}/{}@{}",
            self.strategy.name(),
            self.order.short(),
            self.retrieval_form.short(),
            self.backend_id
        )
    }

    /// Directory-safe cell name: label parts plus a short fingerprint.
    pub fn cell_name(&self) -> String {
        let backend: String = self
            .backend_id
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
            .collect();
        format!(
            "{}_{}_{}_{}_{}",
            self.strategy.name(),
            self.order.short(),
            self.retrieval_form.short(),
            backend,
            &self.fingerprint()[..8]
        )
    }

    /// The language the pseudo-document is generated in.
    pub fn expansion_lang(&self, source: LangCode, target: LangCode) -> LangCode {
        match self.order {
            Order::TranslateThenExpand => target,
            Order::ExpandThenTranslate => source,
        }
    }
}

/// The full 4 x 2 x 2 grid for one backend, in strategy, order, form order.
pub fn plan_matrix(backend_id: &str, fewshot_pool: Option<&str>, rng_seed: u64) -> Vec<ExpansionPlan> {
    let mut plans = Vec::with_capacity(16);
    for strategy in Strategy::ALL {
        for order in Order::ALL {
            for form in RetrievalForm::ALL {
                let mut plan = ExpansionPlan::new(strategy, order, form, backend_id).with_seed(rng_seed);
                if strategy == Strategy::FewShot {
                    plan.fewshot_pool = fewshot_pool.map(str::to_string);
                }
                plans.push(plan);
            }
        }
    }
    plans
}

/// Chat request for one expansion step.
pub fn build_prompt(
    strategy: Strategy,
    query_text: &str,
    fewshot_examples: Option<&[(String, String)]>,
) -> Result<ChatRequest, ExpandError> {
    let request = match (strategy, fewshot_examples) {
        (Strategy::FewShot, Some(examples)) if !examples.is_empty() => {
            ChatRequest::new(prompts::FEWSHOT_SYSTEM, prompts::fewshot_user(query_text, examples))
        }
        (Strategy::FewShot, _) => return Err(ExpandError::MissingExamples),
        (_, Some(_)) => {
            return Err(ExpandError::InvalidPlan(format!(
                "{strategy} prompting takes no examples"
            )))
        }
        (Strategy::ZeroShot, None) => ChatRequest::new(prompts::EXPANSION_SYSTEM, prompts::zero_shot_user(query_text)),
        (Strategy::CoT, None) => ChatRequest::new(prompts::EXPANSION_SYSTEM, prompts::cot_user(query_text)),
        (Strategy::RaR, None) => ChatRequest::new(prompts::EXPANSION_SYSTEM, prompts::rar_user(query_text)),
    };
    Ok(request)
}

const META_PREFIXES: [&str; 9] = [
    "to answer this query",
    "to answer this question",
    "to answer the query",
    "to answer the question",
    "here is a passage",
    "here's a passage",
    "here is the passage",
    "sure, here is",
    "sure, here's",
];

/// Remove a leading meta sentence such as "To answer this query, I will
/// provide information about X." when `mode` asks for it.
pub fn clean_generation(text: &str, mode: CleanMode) -> String {
    if mode == CleanMode::Off {
        return text.to_string();
    }
    let trimmed = text.trim_start();
    let lowered = trimmed.to_lowercase();
    if !META_PREFIXES.iter().any(|p| lowered.starts_with(p)) {
        return text.to_string();
    }
    let end = trimmed
        .char_indices()
        .find(|&(i, c)| {
            matches!(c, '.' | ':' | '!')
                && trimmed[i + c.len_utf8()..]
                    .chars()
                    .next()
                    .is_none_or(char::is_whitespace)
        })
        .map(|(i, c)| i + c.len_utf8());
    match end {
        Some(end) if !trimmed[end..].trim().is_empty() => trimmed[end..].trim_start().to_string(),
        _ => text.to_string(),
    }
}

/// Assemble the retrieval text from the target-language query and the
/// pseudo-document.
pub fn final_text(form: RetrievalForm, query_text: &str, pseudo_document: &str, repetitions: usize) -> String {
    match form {
        RetrievalForm::DocOnly => pseudo_document.to_string(),
        RetrievalForm::QueryPlusDoc => {
            let mut out = vec![query_text; repetitions.max(1)].join("\n");
            out.push('\n');
            out.push_str(pseudo_document);
            out
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceStep {
    pub step: String,
    pub backend_id: String,
    pub latency_ms: u64,
}

pub const STEP_TRANSLATE: &str = "translate";
pub const STEP_EXPAND: &str = "expand";
pub const STEP_TRANSLATE_QUERY: &str = "translate-query";

/// Provenance of one expanded query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpandedQuery {
    pub query_id: String,
    pub source_lang: LangCode,
    pub target_lang: LangCode,
    pub original_text: String,
    /// The query in the target language; absent only when a DocOnly plan
    /// never needed it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub translated_text: Option<String>,
    pub pseudo_document: String,
    pub final_text: String,
    pub plan: ExpansionPlan,
    pub trace: Vec<TraceStep>,
}

struct Steps<'a> {
    gateways: &'a GatewaySet,
    query_id: &'a str,
    trace: Vec<TraceStep>,
}

impl Steps<'_> {
    fn call(&mut self, step: &str, backend_id: &str, request: &ChatRequest) -> Result<String, ExpandError> {
        let fail = |source: GatewayError, trace: &[TraceStep]| ExpandError::Generation {
            query_id: self.query_id.to_string(),
            step: step.to_string(),
            source: Box::new(source),
            trace: trace.to_vec(),
        };
        let gateway = self.gateways.get(backend_id).map_err(|e| fail(e, &self.trace))?;
        let result = gateway.generate(request).map_err(|e| fail(e, &self.trace))?;
        self.trace.push(TraceStep {
            step: step.to_string(),
            backend_id: result.backend_id,
            latency_ms: result.latency_ms,
        });
        Ok(result.text)
    }
}

/// Run `plan` for one query. `pool` must hold examples in the plan's
/// expansion language when the strategy is few-shot.
pub fn expand_query(
    gateways: &GatewaySet,
    plan: &ExpansionPlan,
    pool: Option<&FewshotPool>,
    query: &Query,
    target_lang: LangCode,
) -> Result<ExpandedQuery, ExpandError> {
    plan.validate()?;
    if query.lang == target_lang {
        return Err(ExpandError::SameLanguage {
            query_id: query.query_id.clone(),
            lang: target_lang,
        });
    }
    let examples = match plan.strategy {
        Strategy::FewShot => {
            let pool = pool.ok_or(ExpandError::MissingExamples)?;
            Some(pool)
        }
        _ => None,
    };
    let mut steps = Steps {
        gateways,
        query_id: &query.query_id,
        trace: Vec::new(),
    };
    let translator = plan.translation_backend();
    let translation = |text: &str| gateway::translation_request(text, query.lang, target_lang);
    let prompt = |text: &str, exclude: &[&str]| -> Result<ChatRequest, ExpandError> {
        match examples {
            Some(pool) => {
                let sample = sample_fewshot(pool, plan.fewshot_count, plan.rng_seed, exclude)?;
                build_prompt(plan.strategy, text, Some(&sample))
            }
            None => build_prompt(plan.strategy, text, None),
        }
    };

    let (translated_text, generation) = match plan.order {
        Order::TranslateThenExpand => {
            let translated = steps.call(STEP_TRANSLATE, translator, &translation(&query.text))?;
            let request = prompt(&translated, &[&translated, &query.text])?;
            let generation = steps.call(STEP_EXPAND, &plan.backend_id, &request)?;
            (Some(translated), generation)
        }
        Order::ExpandThenTranslate => {
            let request = prompt(&query.text, &[&query.text])?;
            let generation = steps.call(STEP_EXPAND, &plan.backend_id, &request)?;
            let generation = clean_generation(&generation, plan.clean);
            let translated_generation = steps.call(STEP_TRANSLATE, translator, &translation(&generation))?;
            let translated = match plan.retrieval_form {
                RetrievalForm::QueryPlusDoc => {
                    Some(steps.call(STEP_TRANSLATE_QUERY, translator, &translation(&query.text))?)
                }
                RetrievalForm::DocOnly => None,
            };
            (translated, translated_generation)
        }
    };
    let pseudo_document = clean_generation(&generation, plan.clean);
    let final_text = final_text(
        plan.retrieval_form,
        translated_text.as_deref().unwrap_or_default(),
        &pseudo_document,
        plan.query_repetitions,
    );
    Ok(ExpandedQuery {
        query_id: query.query_id.clone(),
        source_lang: query.lang,
        target_lang,
        original_text: query.text.clone(),
        translated_text,
        pseudo_document,
        final_text,
        plan: plan.clone(),
        trace: steps.trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{Gateway, MatchKind, MockBackend, MockScript};
    use std::sync::Arc;

    const MERCURY: &str = "The name ``Mercury'' originates from Roman mythology. It is derived from the \
Roman god Mercury (or Mercurius in Latin), the equivalent of the Greek god Hermes.";

    fn lang(code: &str) -> LangCode {
        code.parse().unwrap()
    }

    fn mock_set(script: MockScript) -> (GatewaySet, Arc<MockBackend>) {
        let backend = Arc::new(MockBackend::new("mock", script));
        let mut set = GatewaySet::new();
        set.insert(Gateway::new(backend.clone()));
        (set, backend)
    }

    fn identity_script() -> MockScript {
        MockScript::new()
            .rule_for_system("translation", MatchKind::Contains, "", "<query>")
            .with_default("<query>")
    }

    fn fr_query(text: &str) -> Query {
        Query {
            query_id: "q1".into(),
            lang: lang("fr"),
            text: text.into(),
        }
    }

    #[test]
    fn zero_shot_prompt_matches_template() {
        let request = build_prompt(Strategy::ZeroShot, "original name of mercury", None).unwrap();
        assert_eq!(
            request.user_message,
            "Please write a passage to answer the question.\nQuestion: original name of mercury"
        );
        assert_eq!(request.system_message, prompts::EXPANSION_SYSTEM);
    }

    #[test]
    fn fewshot_prompt_requires_examples() {
        assert!(matches!(
            build_prompt(Strategy::FewShot, "q", None),
            Err(ExpandError::MissingExamples)
        ));
        assert!(matches!(
            build_prompt(Strategy::FewShot, "q", Some(&[])),
            Err(ExpandError::MissingExamples)
        ));
        let examples = vec![("a".to_string(), "b".to_string())];
        assert!(build_prompt(Strategy::CoT, "q", Some(&examples)).is_err());
    }

    #[test]
    fn figure_two_flow() {
        let script = MockScript::new()
            .rule_for_system(
                "translation",
                MatchKind::Payload,
                "nom original de mercure",
                "original name of mercury",
            )
            .rule_for_system(
                "text expansion",
                MatchKind::Payload,
                "original name of mercury",
                MERCURY,
            );
        let (set, _) = mock_set(script);
        let plan = ExpansionPlan::new(
            Strategy::ZeroShot,
            Order::TranslateThenExpand,
            RetrievalForm::DocOnly,
            "mock",
        );
        let expanded = expand_query(&set, &plan, None, &fr_query("nom original de mercure"), lang("en")).unwrap();
        assert_eq!(expanded.translated_text.as_deref(), Some("original name of mercury"));
        assert_eq!(expanded.final_text, MERCURY);
        let steps: Vec<&str> = expanded.trace.iter().map(|t| t.step.as_str()).collect();
        assert_eq!(steps, vec![STEP_TRANSLATE, STEP_EXPAND]);
    }

    #[test]
    fn query_plus_doc_assembly() {
        assert_eq!(
            final_text(RetrievalForm::QueryPlusDoc, "original name of mercury", "P", 1),
            "original name of mercury\nP"
        );
        assert_eq!(final_text(RetrievalForm::QueryPlusDoc, "q", "P", 3), "q\nq\nq\nP");
        assert_eq!(final_text(RetrievalForm::DocOnly, "q", "P", 3), "P");
    }

    #[test]
    fn expand_then_translate_with_identity() {
        let (set, _) = mock_set(identity_script());
        let plan = ExpansionPlan::new(
            Strategy::RaR,
            Order::ExpandThenTranslate,
            RetrievalForm::DocOnly,
            "mock",
        );
        let expanded = expand_query(&set, &plan, None, &fr_query("bonjour"), lang("en")).unwrap();
        assert_eq!(expanded.pseudo_document, "bonjour");
        assert_eq!(expanded.translated_text, None);
        let steps: Vec<&str> = expanded.trace.iter().map(|t| t.step.as_str()).collect();
        assert_eq!(steps, vec![STEP_EXPAND, STEP_TRANSLATE]);
    }

    #[test]
    fn expand_then_translate_query_plus_doc_translates_query() {
        let (set, backend) = mock_set(identity_script());
        let plan = ExpansionPlan::new(
            Strategy::CoT,
            Order::ExpandThenTranslate,
            RetrievalForm::QueryPlusDoc,
            "mock",
        );
        let expanded = expand_query(&set, &plan, None, &fr_query("bonjour"), lang("en")).unwrap();
        assert_eq!(expanded.trace.len(), 3);
        assert_eq!(expanded.trace[2].step, STEP_TRANSLATE_QUERY);
        assert_eq!(expanded.final_text, "bonjour\nbonjour");
        assert_eq!(backend.calls(), 3);
    }

    #[test]
    fn same_language_rejected() {
        let (set, _) = mock_set(identity_script());
        let plan = ExpansionPlan::new(
            Strategy::RaR,
            Order::ExpandThenTranslate,
            RetrievalForm::DocOnly,
            "mock",
        );
        assert!(matches!(
            expand_query(&set, &plan, None, &fr_query("x"), lang("fr")),
            Err(ExpandError::SameLanguage { .. })
        ));
    }

    #[test]
    fn failure_keeps_partial_trace() {
        let script = MockScript::new().rule_for_system("translation", MatchKind::Contains, "", "<query>");
        let (set, _) = mock_set(script);
        let plan = ExpansionPlan::new(
            Strategy::ZeroShot,
            Order::TranslateThenExpand,
            RetrievalForm::DocOnly,
            "mock",
        );
        match expand_query(&set, &plan, None, &fr_query("x"), lang("en")) {
            Err(ExpandError::Generation { step, trace, .. }) => {
                assert_eq!(step, STEP_EXPAND);
                assert_eq!(trace.len(), 1);
                assert_eq!(trace[0].step, STEP_TRANSLATE);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_backend_is_a_generation_error() {
        let (set, _) = mock_set(identity_script());
        let plan = ExpansionPlan::new(
            Strategy::ZeroShot,
            Order::TranslateThenExpand,
            RetrievalForm::DocOnly,
            "other",
        );
        assert!(matches!(
            expand_query(&set, &plan, None, &fr_query("x"), lang("en")),
            Err(ExpandError::Generation { .. })
        ));
    }

    #[test]
    fn plan_validation() {
        let plan = ExpansionPlan::new(
            Strategy::FewShot,
            Order::TranslateThenExpand,
            RetrievalForm::DocOnly,
            "m",
        );
        assert!(plan.validate().is_err());
        assert!(plan.clone().with_fewshot_pool("pool.tsv").validate().is_ok());
        assert!(plan
            .clone()
            .with_fewshot_pool("p")
            .with_repetitions(0)
            .validate()
            .is_err());
        let zero = ExpansionPlan::new(
            Strategy::ZeroShot,
            Order::TranslateThenExpand,
            RetrievalForm::DocOnly,
            "m",
        );
        assert!(zero.clone().with_fewshot_pool("p").validate().is_err());
    }

    #[test]
    fn fingerprint_tracks_every_field() {
        let plan = ExpansionPlan::new(
            Strategy::ZeroShot,
            Order::TranslateThenExpand,
            RetrievalForm::DocOnly,
            "m",
        );
        assert_eq!(plan.fingerprint(), plan.clone().fingerprint());
        assert_eq!(plan.fingerprint().len(), 64);
        assert_ne!(plan.fingerprint(), plan.clone().with_seed(1).fingerprint());
        assert_ne!(plan.fingerprint(), plan.clone().with_repetitions(2).fingerprint());
        assert!(plan.cell_name().starts_with("zero-shot_te_doc_m_"));
    }

    #[test]
    fn matrix_has_sixteen_distinct_cells() {
        let plans = plan_matrix("mock", Some("pool.tsv"), 7);
        assert_eq!(plans.len(), 16);
        let cells: std::collections::BTreeSet<String> = plans.iter().map(|p| p.cell_name()).collect();
        assert_eq!(cells.len(), 16);
        assert!(plans.iter().all(|p| p.validate().is_ok()));
    }

    #[test]
    fn names_parse_back() {
        for s in Strategy::ALL {
            assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
        }
        for o in Order::ALL {
            assert_eq!(o.name().parse::<Order>().unwrap(), o);
            assert_eq!(o.short().parse::<Order>().unwrap(), o);
        }
        for f in RetrievalForm::ALL {
            assert_eq!(f.name().parse::<RetrievalForm>().unwrap(), f);
        }
        assert!("five-shot".parse::<Strategy>().is_err());
    }

    #[test]
    fn strip_meta_sentence() {
        let text = "To answer this query, I will provide information about X. X is a planet.";
        assert_eq!(clean_generation(text, CleanMode::StripMeta), "X is a planet.");
        assert_eq!(clean_generation(text, CleanMode::Off), text);
        assert_eq!(
            clean_generation("X is a planet.", CleanMode::StripMeta),
            "X is a planet."
        );
        assert_eq!(
            clean_generation("Here is a passage: Mercury is small.", CleanMode::StripMeta),
            "Mercury is small."
        );
        let only_meta = "To answer this query, I will provide information about X.";
        assert_eq!(clean_generation(only_meta, CleanMode::StripMeta), only_meta);
    }
}
