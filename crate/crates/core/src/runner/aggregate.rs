//! Language-level and quadrant aggregation of pair results.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{PairResult, BASELINE_CELL};
use crate::lang::LangCode;

/// Cell name of the per-pair mean over every plan.
pub const ALL_PLANS_SERIES: &str = "all-plans";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LangClass {
    EuropeanLatin,
    Other,
}

impl LangClass {
    pub fn name(&self) -> &'static str {
        match self {
            LangClass::EuropeanLatin => "european-latin",
            LangClass::Other => "other",
        }
    }
}

pub const EUROPEAN_LATIN: [&str; 7] = ["en", "es", "fr", "de", "it", "nl", "pt"];

/// Default classes for `langs`, with `overrides` taking precedence.
pub fn lang_classes<'a, I>(langs: I, overrides: &BTreeMap<LangCode, LangClass>) -> BTreeMap<LangCode, LangClass>
where
    I: IntoIterator<Item = &'a LangCode>,
{
    langs
        .into_iter()
        .map(|&lang| {
            let class = overrides
                .get(&lang)
                .copied()
                .unwrap_or(if EUROPEAN_LATIN.contains(&lang.as_str()) {
                    LangClass::EuropeanLatin
                } else {
                    LangClass::Other
                });
            (lang, class)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AggregateError {
    #[error("no baseline result for {query_lang}-{doc_lang}")]
    MissingBaseline { query_lang: LangCode, doc_lang: LangCode },
    #[error("language {0} has no class")]
    UnclassifiedLanguage(LangCode),
}

pub type Means = BTreeMap<String, f64>;

pub type PairMeans = BTreeMap<(LangCode, LangCode), Means>;

/// Means of one series at every aggregation level.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Aggregate {
    pub by_pair: PairMeans,
    pub by_query_lang: BTreeMap<LangCode, Means>,
    pub by_doc_lang: BTreeMap<LangCode, Means>,
    pub quadrants: BTreeMap<(LangClass, LangClass), Means>,
    pub overall: Means,
}

/// Mean of every metric over the maps that report it.
fn mean_of<'a, I>(items: I) -> Means
where
    I: IntoIterator<Item = &'a Means>,
{
    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for means in items {
        for (metric, value) in means {
            let entry = sums.entry(metric.clone()).or_insert((0.0, 0));
            entry.0 += value;
            entry.1 += 1;
        }
    }
    sums.into_iter().map(|(m, (sum, n))| (m, sum / n as f64)).collect()
}

impl Aggregate {
    /// Aggregate per-pair means. Every language must be in `classes`.
    pub fn from_pairs(by_pair: PairMeans, classes: &BTreeMap<LangCode, LangClass>) -> Result<Self, AggregateError> {
        let class_of = |lang: &LangCode| {
            classes
                .get(lang)
                .copied()
                .ok_or(AggregateError::UnclassifiedLanguage(*lang))
        };
        let mut query_groups: BTreeMap<LangCode, Vec<&Means>> = BTreeMap::new();
        let mut doc_groups: BTreeMap<LangCode, Vec<&Means>> = BTreeMap::new();
        let mut quadrant_groups: BTreeMap<(LangClass, LangClass), Vec<&Means>> = BTreeMap::new();
        for ((q, d), means) in &by_pair {
            query_groups.entry(*q).or_default().push(means);
            doc_groups.entry(*d).or_default().push(means);
            quadrant_groups
                .entry((class_of(q)?, class_of(d)?))
                .or_default()
                .push(means);
        }
        Ok(Aggregate {
            by_query_lang: query_groups.into_iter().map(|(k, v)| (k, mean_of(v))).collect(),
            by_doc_lang: doc_groups.into_iter().map(|(k, v)| (k, mean_of(v))).collect(),
            quadrants: quadrant_groups.into_iter().map(|(k, v)| (k, mean_of(v))).collect(),
            overall: mean_of(by_pair.values()),
            by_pair,
        })
    }
}

/// Every series (baseline, each plan cell, the mean over plans) plus
/// plan-minus-baseline deltas.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AggregateView {
    pub series: BTreeMap<String, Aggregate>,
    pub deltas: BTreeMap<String, Aggregate>,
    pub classes: BTreeMap<LangCode, LangClass>,
}

fn difference(plan: &Means, baseline: &Means) -> Means {
    plan.iter()
        .filter_map(|(metric, value)| baseline.get(metric).map(|b| (metric.clone(), value - b)))
        .collect()
}

pub fn aggregate(
    results: &[PairResult],
    classes: &BTreeMap<LangCode, LangClass>,
) -> Result<AggregateView, AggregateError> {
    let mut per_cell: BTreeMap<String, PairMeans> = BTreeMap::new();
    for result in results {
        per_cell
            .entry(result.cell.clone())
            .or_default()
            .insert((result.query_lang, result.doc_lang), result.means());
    }
    let baseline = per_cell.remove(BASELINE_CELL).unwrap_or_default();
    let plan_pairs: BTreeSet<(LangCode, LangCode)> = per_cell.values().flat_map(|p| p.keys().copied()).collect();
    if let Some(&(query_lang, doc_lang)) = plan_pairs.iter().find(|pair| !baseline.contains_key(pair)) {
        return Err(AggregateError::MissingBaseline { query_lang, doc_lang });
    }

    let mut all_plans: BTreeMap<(LangCode, LangCode), Vec<&Means>> = BTreeMap::new();
    for pairs in per_cell.values() {
        for (pair, means) in pairs {
            all_plans.entry(*pair).or_default().push(means);
        }
    }
    let all_plans: PairMeans = all_plans
        .into_iter()
        .map(|(pair, group)| (pair, mean_of(group)))
        .collect();

    let mut view = AggregateView {
        classes: classes.clone(),
        ..AggregateView::default()
    };
    let mut plan_series: Vec<(String, PairMeans)> = per_cell.into_iter().collect();
    if !all_plans.is_empty() {
        plan_series.push((ALL_PLANS_SERIES.to_string(), all_plans));
    }
    for (cell, pairs) in plan_series {
        let deltas = pairs
            .iter()
            .map(|(pair, means)| (*pair, difference(means, &baseline[pair])))
            .collect();
        view.deltas
            .insert(cell.clone(), Aggregate::from_pairs(deltas, classes)?);
        view.series.insert(cell, Aggregate::from_pairs(pairs, classes)?);
    }
    view.series
        .insert(BASELINE_CELL.to_string(), Aggregate::from_pairs(baseline, classes)?);
    Ok(view)
}

fn fmt_value(value: Option<&f64>) -> String {
    value.map(|v| v.to_string()).unwrap_or_default()
}

/// Rows are query languages, columns document languages.
pub fn heatmap_csv(aggregate: &Aggregate, metric: &str) -> String {
    let rows: BTreeSet<LangCode> = aggregate.by_pair.keys().map(|(q, _)| *q).collect();
    let cols: BTreeSet<LangCode> = aggregate.by_pair.keys().map(|(_, d)| *d).collect();
    let mut out = String::from("query_lang");
    for col in &cols {
        write!(out, ",{col}").expect("string write");
    }
    out.push('\n');
    for row in &rows {
        out.push_str(row.as_str());
        for col in &cols {
            let value = aggregate.by_pair.get(&(*row, *col)).and_then(|m| m.get(metric));
            write!(out, ",{}", fmt_value(value)).expect("string write");
        }
        out.push('\n');
    }
    out
}

/// Long table of every aggregation level: `series,level,row,col,metric,value`.
pub fn levels_csv(view: &AggregateView, deltas: bool) -> String {
    let source = if deltas { &view.deltas } else { &view.series };
    let mut out = String::from("series,level,row,col,metric,value\n");
    let mut emit = |series: &str, level: &str, row: &str, col: &str, means: &Means| {
        for (metric, value) in means {
            writeln!(out, "{series},{level},{row},{col},{metric},{value}").expect("string write");
        }
    };
    for (series, agg) in source {
        for ((q, d), means) in &agg.by_pair {
            emit(series, "pair", q.as_str(), d.as_str(), means);
        }
        for (q, means) in &agg.by_query_lang {
            emit(series, "query-lang", q.as_str(), "", means);
        }
        for (d, means) in &agg.by_doc_lang {
            emit(series, "doc-lang", "", d.as_str(), means);
        }
        for ((qc, dc), means) in &agg.quadrants {
            emit(series, "quadrant", qc.name(), dc.name(), means);
        }
        emit(series, "overall", "", "", &agg.overall);
    }
    out
}

/// Metric labels observed anywhere in the view.
pub fn metric_labels(view: &AggregateView) -> BTreeSet<String> {
    view.series
        .values()
        .flat_map(|a| a.by_pair.values().flat_map(|m| m.keys().cloned()))
        .collect()
}
