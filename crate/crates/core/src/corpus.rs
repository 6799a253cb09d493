//! Document collections, query sets and relevance judgments.
//!
//! Two judgment schemes are supported. Graded qrels carry grades 0..=6 with
//! many relevant documents per query (at most 101 judged). Single-positive
//! qrels carry exactly one document with grade >= 1 per query.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analyzer::Analyzer;
use crate::lang::LangCode;

pub const MAX_GRADE: u8 = 6;
pub const MAX_GRADED_JUDGMENTS: usize = 101;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("collection is empty")]
    EmptyCollection,
    #[error("grade {grade} out of range 0..=6 at line {line}")]
    GradeOutOfRange { line: usize, grade: i64 },
    #[error("query {0:?} has more than one positive judgment")]
    MultiplePositives(String),
    #[error("query {0:?} has no positive judgment")]
    NoPositive(String),
    #[error("query {0:?} has more than {MAX_GRADED_JUDGMENTS} judged documents")]
    TooManyJudgments(String),
    #[error("record at line {line} is tagged {found:?}, expected {expected}")]
    LangMismatch {
        line: usize,
        expected: LangCode,
        found: String,
    },
    #[error("relevance threshold {0} outside 1..=6")]
    InvalidThreshold(u8),
}

pub type Result<T, E = CorpusError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordFormat {
    Jsonl,
    Tsv,
}

impl RecordFormat {
    /// Guess from a file extension, defaulting to JSONL.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("tsv") | Some("txt") => RecordFormat::Tsv,
            _ => RecordFormat::Jsonl,
        }
    }
}

impl FromStr for RecordFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "jsonl" => Ok(RecordFormat::Jsonl),
            "tsv" => Ok(RecordFormat::Tsv),
            other => Err(format!("unknown record format {other:?} (expected jsonl or tsv)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    #[serde(rename = "id")]
    pub doc_id: String,
    pub lang: LangCode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    #[serde(rename = "text")]
    pub body: String,
}

impl Document {
    /// Text that gets indexed: title and body, newline separated.
    pub fn indexed_text(&self) -> String {
        match &self.title {
            Some(title) if !title.is_empty() => format!("{title}\n{}", self.body),
            _ => self.body.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    #[serde(rename = "id")]
    pub query_id: String,
    pub lang: LangCode,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollectionStats {
    pub doc_count: usize,
    pub total_tokens: usize,
    pub avg_doc_length: f64,
}

impl CollectionStats {
    fn compute(documents: &[Document], lang: LangCode) -> Self {
        let analyzer = Analyzer::default();
        let total_tokens = documents
            .iter()
            .map(|d| analyzer.analyze(&d.indexed_text(), lang).len())
            .sum();
        let doc_count = documents.len();
        CollectionStats {
            doc_count,
            total_tokens,
            avg_doc_length: total_tokens as f64 / doc_count as f64,
        }
    }
}

/// A validated, single-language document collection. Immutable once built.
#[derive(Debug, Clone)]
pub struct Collection {
    documents: Vec<Document>,
    doc_lang: LangCode,
    stats: CollectionStats,
}

impl Collection {
    pub fn new(documents: Vec<Document>, doc_lang: LangCode) -> Result<Self> {
        if documents.is_empty() {
            return Err(CorpusError::EmptyCollection);
        }
        let mut seen = HashSet::new();
        for (idx, doc) in documents.iter().enumerate() {
            if doc.doc_id.is_empty() {
                return Err(malformed(idx + 1, "empty document id"));
            }
            if doc.body.trim().is_empty() {
                return Err(malformed(idx + 1, "empty document text"));
            }
            if doc.lang != doc_lang {
                return Err(CorpusError::LangMismatch {
                    line: idx + 1,
                    expected: doc_lang,
                    found: doc.lang.to_string(),
                });
            }
            if !seen.insert(doc.doc_id.as_str()) {
                return Err(CorpusError::DuplicateId(doc.doc_id.clone()));
            }
        }
        let stats = CollectionStats::compute(&documents, doc_lang);
        Ok(Collection {
            documents,
            doc_lang,
            stats,
        })
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn doc_lang(&self) -> LangCode {
        self.doc_lang
    }

    pub fn stats(&self) -> &CollectionStats {
        &self.stats
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }
}

fn malformed(line: usize, reason: impl Into<String>) -> CorpusError {
    CorpusError::MalformedRecord {
        line,
        reason: reason.into(),
    }
}

pub(crate) fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Non-blank lines with 1-based line numbers and any trailing CR removed.
fn records(input: &str) -> impl Iterator<Item = (usize, &str)> {
    input
        .lines()
        .enumerate()
        .map(|(idx, line)| (idx + 1, line.strip_suffix('\r').unwrap_or(line)))
        .filter(|(_, line)| !line.trim().is_empty())
}

fn split_tsv(line_no: usize, line: &str) -> Result<(&str, &str)> {
    let (id, text) = line
        .split_once('\t')
        .ok_or_else(|| malformed(line_no, "expected `id<TAB>text`"))?;
    if id.is_empty() {
        return Err(malformed(line_no, "empty id"));
    }
    Ok((id, text))
}

#[derive(Deserialize)]
struct RawDocument {
    id: String,
    lang: String,
    #[serde(default)]
    title: Option<String>,
    text: String,
}

pub fn parse_documents(input: &str, lang: LangCode, format: RecordFormat) -> Result<Collection> {
    let mut documents = Vec::new();
    for (line_no, line) in records(input) {
        let doc = match format {
            RecordFormat::Jsonl => {
                let raw: RawDocument = serde_json::from_str(line).map_err(|e| malformed(line_no, e.to_string()))?;
                if raw.lang != lang.as_str() {
                    return Err(CorpusError::LangMismatch {
                        line: line_no,
                        expected: lang,
                        found: raw.lang,
                    });
                }
                Document {
                    doc_id: raw.id,
                    lang,
                    title: raw.title,
                    body: raw.text,
                }
            }
            RecordFormat::Tsv => {
                let (id, text) = split_tsv(line_no, line)?;
                Document {
                    doc_id: id.to_string(),
                    lang,
                    title: None,
                    body: text.to_string(),
                }
            }
        };
        if doc.doc_id.is_empty() {
            return Err(malformed(line_no, "empty document id"));
        }
        if doc.body.trim().is_empty() {
            return Err(malformed(line_no, "empty document text"));
        }
        documents.push(doc);
    }
    Collection::new(documents, lang)
}

pub fn load_documents(path: impl AsRef<Path>, lang: LangCode, format: RecordFormat) -> Result<Collection> {
    parse_documents(&read(path.as_ref())?, lang, format)
}

#[derive(Deserialize)]
struct RawQuery {
    id: String,
    #[serde(default)]
    lang: Option<String>,
    text: String,
}

pub fn parse_queries(input: &str, lang: LangCode, format: RecordFormat) -> Result<Vec<Query>> {
    let mut queries = Vec::new();
    let mut seen = HashSet::new();
    for (line_no, line) in records(input) {
        let (id, text) = match format {
            RecordFormat::Tsv => {
                let (id, text) = split_tsv(line_no, line)?;
                (id.to_string(), text.to_string())
            }
            RecordFormat::Jsonl => {
                let raw: RawQuery = serde_json::from_str(line).map_err(|e| malformed(line_no, e.to_string()))?;
                if let Some(found) = raw.lang.filter(|l| l != lang.as_str()) {
                    return Err(CorpusError::LangMismatch {
                        line: line_no,
                        expected: lang,
                        found,
                    });
                }
                if raw.id.is_empty() {
                    return Err(malformed(line_no, "empty id"));
                }
                (raw.id, raw.text)
            }
        };
        if text.trim().is_empty() {
            return Err(malformed(line_no, "empty query text"));
        }
        if !seen.insert(id.clone()) {
            return Err(CorpusError::DuplicateId(id));
        }
        queries.push(Query {
            query_id: id,
            lang,
            text,
        });
    }
    if queries.is_empty() {
        return Err(CorpusError::EmptyCollection);
    }
    Ok(queries)
}

pub fn load_queries(path: impl AsRef<Path>, lang: LangCode, format: RecordFormat) -> Result<Vec<Query>> {
    parse_queries(&read(path.as_ref())?, lang, format)
}

pub fn write_documents_jsonl(collection: &Collection) -> String {
    let mut out = String::new();
    for doc in collection.documents() {
        out.push_str(&serde_json::to_string(doc).expect("document serializes"));
        out.push('\n');
    }
    out
}

pub fn write_documents_tsv(collection: &Collection) -> String {
    collection
        .documents()
        .iter()
        .map(|d| format!("{}\t{}\n", d.doc_id, d.body))
        .collect()
}

pub fn write_queries_tsv(queries: &[Query]) -> String {
    queries
        .iter()
        .map(|q| format!("{}\t{}\n", q.query_id, q.text))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QrelScheme {
    /// Many graded judgments per query.
    Graded,
    /// One positive per query.
    SinglePositive,
}

impl FromStr for QrelScheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "graded" => Ok(QrelScheme::Graded),
            "single-positive" | "single" => Ok(QrelScheme::SinglePositive),
            other => Err(format!(
                "unknown qrels scheme {other:?} (expected graded or single-positive)"
            )),
        }
    }
}

impl fmt::Display for QrelScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QrelScheme::Graded => "graded",
            QrelScheme::SinglePositive => "single-positive",
        })
    }
}

/// Relevance grades keyed by query then document. Unjudged documents are
/// non-relevant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QrelSet {
    entries: BTreeMap<String, BTreeMap<String, u8>>,
    scheme: QrelScheme,
}

impl QrelSet {
    /// Build from `(query_id, doc_id, grade)` triples, validating the scheme.
    pub fn from_entries<I>(entries: I, scheme: QrelScheme) -> Result<Self>
    where
        I: IntoIterator<Item = (String, String, u8)>,
    {
        let mut map: BTreeMap<String, BTreeMap<String, u8>> = BTreeMap::new();
        for (idx, (query_id, doc_id, grade)) in entries.into_iter().enumerate() {
            if grade > MAX_GRADE {
                return Err(CorpusError::GradeOutOfRange {
                    line: idx + 1,
                    grade: grade.into(),
                });
            }
            if map.entry(query_id).or_default().insert(doc_id, grade).is_some() {
                return Err(malformed(idx + 1, "duplicate judgment"));
            }
        }
        let set = QrelSet { entries: map, scheme };
        set.validate()?;
        Ok(set)
    }

    fn validate(&self) -> Result<()> {
        for (query_id, grades) in &self.entries {
            match self.scheme {
                QrelScheme::Graded => {
                    if grades.len() > MAX_GRADED_JUDGMENTS {
                        return Err(CorpusError::TooManyJudgments(query_id.clone()));
                    }
                }
                QrelScheme::SinglePositive => match grades.values().filter(|g| **g >= 1).count() {
                    0 => return Err(CorpusError::NoPositive(query_id.clone())),
                    1 => {}
                    _ => return Err(CorpusError::MultiplePositives(query_id.clone())),
                },
            }
        }
        Ok(())
    }

    pub fn scheme(&self) -> QrelScheme {
        self.scheme
    }

    pub fn grades(&self, query_id: &str) -> Option<&BTreeMap<String, u8>> {
        self.entries.get(query_id)
    }

    pub fn grade(&self, query_id: &str, doc_id: &str) -> u8 {
        self.entries
            .get(query_id)
            .and_then(|g| g.get(doc_id))
            .copied()
            .unwrap_or(0)
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn num_queries(&self) -> usize {
        self.entries.len()
    }

    pub fn num_judgments(&self) -> usize {
        self.entries.values().map(BTreeMap::len).sum()
    }

    /// Documents with grade >= `threshold`. Empty for unknown queries.
    pub fn relevant_docs(&self, query_id: &str, threshold: u8) -> Result<BTreeSet<String>> {
        check_threshold(threshold)?;
        Ok(self
            .entries
            .get(query_id)
            .map(|grades| {
                grades
                    .iter()
                    .filter(|(_, g)| **g >= threshold)
                    .map(|(d, _)| d.clone())
                    .collect()
            })
            .unwrap_or_default())
    }

    /// Canonical TREC qrels text: sorted by query id then document id.
    pub fn to_trec(&self) -> String {
        let mut out = String::new();
        for (query_id, grades) in &self.entries {
            for (doc_id, grade) in grades {
                out.push_str(&format!("{query_id} 0 {doc_id} {grade}\n"));
            }
        }
        out
    }
}

pub fn check_threshold(threshold: u8) -> Result<()> {
    if (1..=MAX_GRADE).contains(&threshold) {
        Ok(())
    } else {
        Err(CorpusError::InvalidThreshold(threshold))
    }
}

/// Free-function form of [`QrelSet::relevant_docs`].
pub fn relevant_docs(qrels: &QrelSet, query_id: &str, threshold: u8) -> Result<BTreeSet<String>> {
    qrels.relevant_docs(query_id, threshold)
}

/// Parse TREC qrels (`query_id 0 doc_id grade`).
pub fn parse_qrels(input: &str, scheme: QrelScheme) -> Result<QrelSet> {
    let mut map: BTreeMap<String, BTreeMap<String, u8>> = BTreeMap::new();
    for (line_no, line) in records(input) {
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [query_id, _iter, doc_id, grade] = fields[..] else {
            return Err(malformed(
                line_no,
                format!("expected 4 fields `query_id 0 doc_id grade`, found {}", fields.len()),
            ));
        };
        let grade: i64 = grade
            .parse()
            .map_err(|_| malformed(line_no, format!("grade {grade:?} is not an integer")))?;
        if !(0..=i64::from(MAX_GRADE)).contains(&grade) {
            return Err(CorpusError::GradeOutOfRange { line: line_no, grade });
        }
        let previous = map
            .entry(query_id.to_string())
            .or_default()
            .insert(doc_id.to_string(), grade as u8);
        if previous.is_some() {
            return Err(malformed(
                line_no,
                format!("duplicate judgment for ({query_id}, {doc_id})"),
            ));
        }
    }
    let set = QrelSet { entries: map, scheme };
    set.validate()?;
    Ok(set)
}

pub fn load_qrels(path: impl AsRef<Path>, scheme: QrelScheme) -> Result<QrelSet> {
    parse_qrels(&read(path.as_ref())?, scheme)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn en() -> LangCode {
        "en".parse().unwrap()
    }

    fn fr() -> LangCode {
        "fr".parse().unwrap()
    }

    #[test]
    fn loads_three_jsonl_documents() {
        let input = concat!(
            "{\"id\":\"d1\",\"lang\":\"en\",\"title\":\"Mercury\",\"text\":\"Roman god\"}\n",
            "{\"id\":\"d2\",\"lang\":\"en\",\"text\":\"the planet\"}\n",
            "{\"id\":\"d3\",\"lang\":\"en\",\"text\":\"a metal\"}\n",
        );
        let collection = parse_documents(input, en(), RecordFormat::Jsonl).unwrap();
        assert_eq!(collection.stats().doc_count, 3);
        assert_eq!(collection.stats().total_tokens, 3 + 2 + 2);
        assert_eq!(collection.documents()[0].title.as_deref(), Some("Mercury"));
    }

    #[test]
    fn duplicate_document_id_rejected() {
        let input = concat!(
            "{\"id\":\"d1\",\"lang\":\"en\",\"text\":\"one\"}\n",
            "{\"id\":\"d1\",\"lang\":\"en\",\"text\":\"two\"}\n",
        );
        let err = parse_documents(input, en(), RecordFormat::Jsonl).unwrap_err();
        assert!(matches!(err, CorpusError::DuplicateId(id) if id == "d1"));
    }

    #[test]
    fn tsv_passages() {
        let input = "p1\tThe name Mercury originates from Roman mythology.\np2\tMercury is a planet.\n";
        let collection = parse_documents(input, en(), RecordFormat::Tsv).unwrap();
        assert_eq!(collection.len(), 2);
        assert_eq!(collection.documents()[1].doc_id, "p2");
        assert_eq!(collection.documents()[1].body, "Mercury is a planet.");
        assert_eq!(write_documents_tsv(&collection), input);
    }

    #[test]
    fn document_errors_are_positioned() {
        let err = parse_documents("{\"id\":\"d1\"", en(), RecordFormat::Jsonl).unwrap_err();
        assert!(matches!(err, CorpusError::MalformedRecord { line: 1, .. }));
        let err = parse_documents(
            "{\"id\":\"d1\",\"lang\":\"fr\",\"text\":\"x\"}",
            en(),
            RecordFormat::Jsonl,
        )
        .unwrap_err();
        assert!(matches!(err, CorpusError::LangMismatch { line: 1, .. }));
        assert!(matches!(
            parse_documents("", en(), RecordFormat::Jsonl),
            Err(CorpusError::EmptyCollection)
        ));
    }

    #[test]
    fn french_query_from_tsv() {
        let queries = parse_queries("q7\tnom d'origine du mercure\n", fr(), RecordFormat::Tsv).unwrap();
        assert_eq!(
            queries,
            vec![Query {
                query_id: "q7".into(),
                lang: fr(),
                text: "nom d'origine du mercure".into()
            }]
        );
    }

    #[test]
    fn query_errors() {
        assert!(matches!(
            parse_queries("", fr(), RecordFormat::Tsv),
            Err(CorpusError::EmptyCollection)
        ));
        assert!(matches!(
            parse_queries("q1 no tab here\n", fr(), RecordFormat::Tsv),
            Err(CorpusError::MalformedRecord { line: 1, .. })
        ));
        assert!(matches!(
            parse_queries("q1\t   \n", fr(), RecordFormat::Tsv),
            Err(CorpusError::MalformedRecord { line: 1, .. })
        ));
        assert!(matches!(
            parse_queries("q1\ta\nq1\tb\n", fr(), RecordFormat::Tsv),
            Err(CorpusError::DuplicateId(id)) if id == "q1"
        ));
    }

    #[test]
    fn qrels_grades() {
        let qrels = parse_qrels("q1 0 d9 6\n", QrelScheme::Graded).unwrap();
        assert_eq!(qrels.grade("q1", "d9"), 6);
        assert_eq!(qrels.grade("q1", "unjudged"), 0);
        assert!(matches!(
            parse_qrels("q1 0 d9 7\n", QrelScheme::Graded),
            Err(CorpusError::GradeOutOfRange { line: 1, grade: 7 })
        ));
        assert!(matches!(
            parse_qrels("q1 0 d1 1\nq1 0 d2 1\n", QrelScheme::SinglePositive),
            Err(CorpusError::MultiplePositives(q)) if q == "q1"
        ));
        assert!(matches!(
            parse_qrels("q1 0 d1 0\n", QrelScheme::SinglePositive),
            Err(CorpusError::NoPositive(q)) if q == "q1"
        ));
        assert!(matches!(
            parse_qrels("q1 0 d1\n", QrelScheme::Graded),
            Err(CorpusError::MalformedRecord { line: 1, .. })
        ));
    }

    #[test]
    fn graded_judgment_cap() {
        let ok: String = (0..101).map(|i| format!("q1 0 d{i} 1\n")).collect();
        assert!(parse_qrels(&ok, QrelScheme::Graded).is_ok());
        let too_many: String = (0..102).map(|i| format!("q1 0 d{i} 1\n")).collect();
        assert!(matches!(
            parse_qrels(&too_many, QrelScheme::Graded),
            Err(CorpusError::TooManyJudgments(_))
        ));
    }

    #[test]
    fn relevant_docs_by_threshold() {
        let qrels = parse_qrels("q1 0 d1 6\nq1 0 d2 3\nq1 0 d3 1\n", QrelScheme::Graded).unwrap();
        let all: Vec<String> = qrels.relevant_docs("q1", 1).unwrap().into_iter().collect();
        assert_eq!(all, vec!["d1", "d2", "d3"]);
        let top: Vec<String> = qrels.relevant_docs("q1", 4).unwrap().into_iter().collect();
        assert_eq!(top, vec!["d1"]);
        assert!(qrels.relevant_docs("q404", 1).unwrap().is_empty());
        assert!(matches!(
            qrels.relevant_docs("q1", 0),
            Err(CorpusError::InvalidThreshold(0))
        ));
        assert!(matches!(
            qrels.relevant_docs("q1", 7),
            Err(CorpusError::InvalidThreshold(7))
        ));
    }

    fn qrel_strategy() -> impl Strategy<Value = Vec<(String, String, u8)>> {
        proptest::collection::btree_map((0u8..5, 0u8..30), 0u8..=6, 1..60).prop_map(|m| {
            m.into_iter()
                .map(|((q, d), g)| (format!("q{q}"), format!("d{d}"), g))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn qrels_round_trip_canonical(entries in qrel_strategy()) {
            let qrels = QrelSet::from_entries(entries, QrelScheme::Graded).unwrap();
            let text = qrels.to_trec();
            let reparsed = parse_qrels(&text, QrelScheme::Graded).unwrap();
            prop_assert_eq!(reparsed.to_trec(), text);
            prop_assert_eq!(reparsed, qrels);
        }

        #[test]
        fn relevant_docs_monotone(entries in qrel_strategy()) {
            let qrels = QrelSet::from_entries(entries, QrelScheme::Graded).unwrap();
            for query in qrels.query_ids() {
                for t in 1..MAX_GRADE {
                    let loose = qrels.relevant_docs(query, t).unwrap();
                    let strict = qrels.relevant_docs(query, t + 1).unwrap();
                    prop_assert!(strict.is_subset(&loose));
                }
            }
        }

        #[test]
        fn single_positive_yields_one_relevant(positives in proptest::collection::vec((0u8..30, 0u8..30, 1u8..=6), 1..20)) {
            let mut text = String::new();
            for (q, (d, neg, grade)) in positives.iter().enumerate() {
                text.push_str(&format!("q{q} 0 p{d} {grade}\n"));
                text.push_str(&format!("q{q} 0 n{neg} 0\n"));
            }
            let qrels = parse_qrels(&text, QrelScheme::SinglePositive).unwrap();
            for query in qrels.query_ids() {
                prop_assert_eq!(qrels.relevant_docs(query, 1).unwrap().len(), 1);
            }
        }

        #[test]
        fn documents_round_trip_and_stats(bodies in proptest::collection::vec("[a-z]{1,8}( [a-z]{1,8}){0,10}", 1..20)) {
            let collection = Collection::new(
                bodies.iter().enumerate().map(|(i, b)| Document {
                    doc_id: format!("d{i}"),
                    lang: en(),
                    title: (i % 2 == 0).then(|| format!("title {i}")),
                    body: b.clone(),
                }).collect(),
                en(),
            ).unwrap();
            let text = write_documents_jsonl(&collection);
            let reparsed = parse_documents(&text, en(), RecordFormat::Jsonl).unwrap();
            prop_assert_eq!(write_documents_jsonl(&reparsed), text);

            let total: usize = reparsed.documents().iter()
                .map(|d| d.indexed_text().split_whitespace().count())
                .sum();
            let stats = reparsed.stats();
            prop_assert_eq!(stats.total_tokens, total);
            prop_assert!((stats.avg_doc_length - total as f64 / stats.doc_count as f64).abs() < 1e-9);
        }
    }
}
