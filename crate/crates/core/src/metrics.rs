//! Ranking metrics: Hit@k, Recall@k, MRR and nDCG@k.
//!
//! Hit, Recall and MRR binarize judgments at a grade threshold (default 1).
//! nDCG uses the raw grades with gain `2^g - 1` and discount `1/log2(rank+1)`.
//! MRR looks at the whole retrieved list. Per-query values are
//! macro-averaged.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{QrelScheme, QrelSet};
use crate::index::RankedList;

pub const DEFAULT_THRESHOLD: u8 = 1;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricError {
    #[error("query {0:?} has no relevant documents")]
    NoRelevantDocs(String),
    #[error("invalid metric {0:?}: expected hit@k, recall@k, ndcg@k or mrr")]
    Parse(String),
    #[error("metric {0} needs graded judgments")]
    NeedsGraded(String),
    #[error("metric cutoff must be at least 1")]
    InvalidCutoff,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Hit,
    Recall,
    Mrr,
    Ndcg,
}

impl MetricKind {
    pub fn name(&self) -> &'static str {
        match self {
            MetricKind::Hit => "hit",
            MetricKind::Recall => "recall",
            MetricKind::Mrr => "mrr",
            MetricKind::Ndcg => "ndcg",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MetricSpec {
    pub kind: MetricKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default = "default_threshold")]
    pub threshold: u8,
}

fn default_threshold() -> u8 {
    DEFAULT_THRESHOLD
}

impl MetricSpec {
    pub fn hit(k: usize) -> Self {
        Self::with_cutoff(MetricKind::Hit, k)
    }

    pub fn recall(k: usize) -> Self {
        Self::with_cutoff(MetricKind::Recall, k)
    }

    pub fn ndcg(k: usize) -> Self {
        Self::with_cutoff(MetricKind::Ndcg, k)
    }

    pub fn mrr() -> Self {
        MetricSpec {
            kind: MetricKind::Mrr,
            k: None,
            threshold: DEFAULT_THRESHOLD,
        }
    }

    fn with_cutoff(kind: MetricKind, k: usize) -> Self {
        MetricSpec {
            kind,
            k: Some(k),
            threshold: DEFAULT_THRESHOLD,
        }
    }

    pub fn with_threshold(mut self, threshold: u8) -> Self {
        self.threshold = threshold;
        self
    }

    /// Label in the compact `name@k` grammar.
    pub fn label(&self) -> String {
        self.to_string()
    }

    /// Reject metrics that make no sense for a judgment scheme.
    pub fn check_scheme(&self, scheme: QrelScheme) -> Result<(), MetricError> {
        if self.kind == MetricKind::Ndcg && scheme != QrelScheme::Graded {
            return Err(MetricError::NeedsGraded(self.label()));
        }
        Ok(())
    }
}

impl fmt::Display for MetricSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.k {
            Some(k) => write!(f, "{}@{k}", self.kind.name()),
            None => f.write_str(self.kind.name()),
        }
    }
}

impl FromStr for MetricSpec {
    type Err = MetricError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        let parse_k = |k: &str| -> Result<usize, MetricError> {
            match k.parse::<usize>() {
                Ok(0) => Err(MetricError::InvalidCutoff),
                Ok(k) => Ok(k),
                Err(_) => Err(MetricError::Parse(s.to_string())),
            }
        };
        match lower.split_once('@') {
            None if lower == "mrr" => Ok(MetricSpec::mrr()),
            Some(("hit", k)) => Ok(MetricSpec::hit(parse_k(k)?)),
            Some(("recall", k)) => Ok(MetricSpec::recall(parse_k(k)?)),
            Some(("ndcg", k)) => Ok(MetricSpec::ndcg(parse_k(k)?)),
            _ => Err(MetricError::Parse(s.to_string())),
        }
    }
}

fn top_k(ranked: &RankedList, k: usize) -> impl Iterator<Item = &str> {
    ranked.doc_ids().take(k)
}

/// 1.0 when any relevant document is in the top `k`, else 0.0.
pub fn hit_at_k(ranked: &RankedList, relevant: &BTreeSet<String>, k: usize) -> f64 {
    if top_k(ranked, k).any(|d| relevant.contains(d)) {
        1.0
    } else {
        0.0
    }
}

/// Fraction of the relevant documents found in the top `k`.
pub fn recall_at_k(ranked: &RankedList, relevant: &BTreeSet<String>, k: usize) -> Result<f64, MetricError> {
    if relevant.is_empty() {
        return Err(MetricError::NoRelevantDocs(ranked.query_id.clone()));
    }
    let found = top_k(ranked, k).filter(|d| relevant.contains(*d)).count();
    Ok(found as f64 / relevant.len() as f64)
}

/// Reciprocal rank of the first relevant document, 0.0 if none retrieved.
pub fn mrr(ranked: &RankedList, relevant: &BTreeSet<String>) -> f64 {
    ranked
        .doc_ids()
        .position(|d| relevant.contains(d))
        .map_or(0.0, |idx| 1.0 / (idx + 1) as f64)
}

fn gain(grade: u8) -> f64 {
    2f64.powi(i32::from(grade)) - 1.0
}

fn discount(rank: usize) -> f64 {
    1.0 / ((rank + 1) as f64).log2()
}

/// Normalized DCG over the top `k`. The ideal ranking sorts all judged
/// grades for the query in descending order.
pub fn ndcg_at_k(ranked: &RankedList, graded: &BTreeMap<String, u8>, k: usize) -> Result<f64, MetricError> {
    if !graded.values().any(|g| *g > 0) {
        return Err(MetricError::NoRelevantDocs(ranked.query_id.clone()));
    }
    let dcg: f64 = top_k(ranked, k)
        .enumerate()
        .map(|(idx, doc)| gain(graded.get(doc).copied().unwrap_or(0)) * discount(idx + 1))
        .sum();
    let mut ideal: Vec<u8> = graded.values().copied().collect();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: f64 = ideal
        .into_iter()
        .take(k)
        .enumerate()
        .map(|(idx, grade)| gain(grade) * discount(idx + 1))
        .sum();
    Ok(dcg / idcg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub spec: MetricSpec,
    pub per_query: BTreeMap<String, f64>,
    pub mean: f64,
    pub n_queries: usize,
    /// Run queries skipped because they have no positive judgment.
    pub n_excluded: usize,
}

impl MetricReport {
    fn from_values(spec: MetricSpec, per_query: BTreeMap<String, f64>, n_excluded: usize) -> Self {
        let n_queries = per_query.len();
        let mean = if n_queries == 0 {
            0.0
        } else {
            per_query.values().sum::<f64>() / n_queries as f64
        };
        MetricReport {
            spec,
            per_query,
            mean,
            n_queries,
            n_excluded,
        }
    }
}

/// Score one query under `spec`; `None` when the query has nothing relevant.
pub fn score_query(spec: &MetricSpec, ranked: &RankedList, qrels: &QrelSet) -> Option<f64> {
    match spec.kind {
        MetricKind::Ndcg => {
            let grades = qrels.grades(&ranked.query_id)?;
            ndcg_at_k(ranked, grades, spec.k.unwrap_or(ranked.depth)).ok()
        }
        kind => {
            let relevant = qrels.relevant_docs(&ranked.query_id, spec.threshold).ok()?;
            if relevant.is_empty() {
                return None;
            }
            let k = spec.k.unwrap_or(usize::MAX);
            Some(match kind {
                MetricKind::Hit => hit_at_k(ranked, &relevant, k),
                MetricKind::Recall => recall_at_k(ranked, &relevant, k).ok()?,
                MetricKind::Mrr => mrr(ranked, &relevant),
                MetricKind::Ndcg => unreachable!("handled above"),
            })
        }
    }
}

/// Evaluate every spec over a run. Queries without any positive judgment are
/// left out of the mean and counted in `n_excluded`.
pub fn evaluate_run(run: &BTreeMap<String, RankedList>, qrels: &QrelSet, specs: &[MetricSpec]) -> Vec<MetricReport> {
    if run.is_empty() {
        return Vec::new();
    }
    specs
        .iter()
        .map(|spec| {
            let mut per_query = BTreeMap::new();
            let mut excluded = 0;
            for (query_id, ranked) in run {
                match score_query(spec, ranked, qrels) {
                    Some(value) => {
                        per_query.insert(query_id.clone(), value);
                    }
                    None => excluded += 1,
                }
            }
            MetricReport::from_values(*spec, per_query, excluded)
        })
        .collect()
}

/// Summary table: `metric,k,mean,n_queries`.
pub fn reports_to_csv(reports: &[MetricReport]) -> String {
    let mut out = String::from("metric,k,mean,n_queries\n");
    for report in reports {
        let k = report.spec.k.map(|k| k.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{k},{},{}",
            report.spec.kind.name(),
            report.mean,
            report.n_queries
        )
        .expect("writing to a String cannot fail");
    }
    out
}

/// Per-query table: `query_id,metric,k,value`.
pub fn per_query_csv(reports: &[MetricReport]) -> String {
    let mut out = String::from("query_id,metric,k,value\n");
    for report in reports {
        let k = report.spec.k.map(|k| k.to_string()).unwrap_or_default();
        for (query_id, value) in &report.per_query {
            writeln!(out, "{query_id},{},{k},{value}", report.spec.kind.name())
                .expect("writing to a String cannot fail");
        }
    }
    out
}
