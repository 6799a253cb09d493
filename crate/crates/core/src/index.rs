//! Inverted index with BM25 ranking.
//!
//! Scoring uses the non-negative idf variant
//! `ln(1 + (N - df + 0.5) / (df + 0.5))`, so a document scores zero exactly
//! when it shares no term with the query. Documents are addressed internally
//! by ordinal, assigned in ascending `doc_id` order; postings sorted by
//! ordinal are therefore sorted by `doc_id`, and ordinal order is the
//! tie-break order.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analyzer::Analyzer;
use crate::corpus::Collection;
use crate::lang::LangCode;

pub const INDEX_FORMAT: &str = "xpandir-index";
pub const INDEX_VERSION: u32 = 1;
pub const DEFAULT_K_RETRIEVE: usize = 100;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("cannot build an index from an empty collection")]
    EmptyCollection,
    #[error("unknown document {0:?}")]
    UnknownDocument(String),
    #[error("invalid BM25 parameters k1={k1}, b={b}: need k1 >= 0 and 0 <= b <= 1")]
    InvalidParams { k1: f64, b: f64 },
    #[error("retrieval depth must be at least 1")]
    InvalidDepth,
    #[error("index file line {line}: {reason}")]
    Format { line: usize, reason: String },
    #[error("index i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

impl Bm25Params {
    pub fn new(k1: f64, b: f64) -> Result<Self, IndexError> {
        let params = Bm25Params { k1, b };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), IndexError> {
        if self.k1 >= 0.0 && (0.0..=1.0).contains(&self.b) {
            Ok(())
        } else {
            Err(IndexError::InvalidParams { k1: self.k1, b: self.b })
        }
    }
}

/// `ln(1 + (N - df + 0.5) / (df + 0.5))`; non-negative for `df <= N`.
pub fn idf(doc_count: usize, doc_freq: usize) -> f64 {
    let n = doc_count as f64;
    let df = doc_freq as f64;
    (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
}

/// One term's contribution for a document of length `doc_len`.
pub fn term_weight(params: &Bm25Params, idf: f64, tf: f64, doc_len: f64, avgdl: f64) -> f64 {
    let Bm25Params { k1, b } = *params;
    idf * (tf * (k1 + 1.0)) / (tf + k1 * (1.0 - b + b * doc_len / avgdl))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Posting {
    pub doc: u32,
    pub tf: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvertedIndex {
    doc_ids: Vec<String>,
    doc_lengths: Vec<u32>,
    postings: BTreeMap<String, Vec<Posting>>,
    total_tokens: u64,
    avgdl: f64,
    doc_lang: LangCode,
    analyzer: Analyzer,
}

pub fn build_index(collection: &Collection) -> Result<InvertedIndex, IndexError> {
    InvertedIndex::build(collection, Analyzer::default())
}

impl InvertedIndex {
    pub fn build(collection: &Collection, analyzer: Analyzer) -> Result<Self, IndexError> {
        if collection.is_empty() {
            return Err(IndexError::EmptyCollection);
        }
        let lang = collection.doc_lang();
        let mut docs: Vec<(&str, Vec<String>)> = collection
            .documents()
            .iter()
            .map(|d| (d.doc_id.as_str(), analyzer.analyze(&d.indexed_text(), lang).tokens))
            .collect();
        docs.sort_by(|a, b| a.0.cmp(b.0));

        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        let mut doc_ids = Vec::with_capacity(docs.len());
        let mut doc_lengths = Vec::with_capacity(docs.len());
        for (ordinal, (doc_id, tokens)) in docs.into_iter().enumerate() {
            let mut counts: BTreeMap<String, u32> = BTreeMap::new();
            for token in &tokens {
                *counts.entry(token.clone()).or_insert(0) += 1;
            }
            for (term, tf) in counts {
                postings.entry(term).or_default().push(Posting {
                    doc: ordinal as u32,
                    tf,
                });
            }
            doc_ids.push(doc_id.to_string());
            doc_lengths.push(tokens.len() as u32);
        }
        Ok(Self::assemble(doc_ids, doc_lengths, postings, lang, analyzer))
    }

    fn assemble(
        doc_ids: Vec<String>,
        doc_lengths: Vec<u32>,
        postings: BTreeMap<String, Vec<Posting>>,
        doc_lang: LangCode,
        analyzer: Analyzer,
    ) -> Self {
        let total_tokens: u64 = doc_lengths.iter().map(|&l| u64::from(l)).sum();
        let avgdl = total_tokens as f64 / doc_ids.len() as f64;
        InvertedIndex {
            doc_ids,
            doc_lengths,
            postings,
            total_tokens,
            avgdl,
            doc_lang,
            analyzer,
        }
    }

    pub fn doc_count(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn avgdl(&self) -> f64 {
        self.avgdl
    }

    pub fn doc_lang(&self) -> LangCode {
        self.doc_lang
    }

    pub fn analyzer(&self) -> &Analyzer {
        &self.analyzer
    }

    pub fn vocabulary_size(&self) -> usize {
        self.postings.len()
    }

    /// Document ids in ordinal (ascending) order.
    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn doc_length(&self, doc_id: &str) -> Option<u32> {
        self.ordinal(doc_id).map(|o| self.doc_lengths[o])
    }

    pub fn postings(&self, term: &str) -> Option<&[Posting]> {
        self.postings.get(term).map(Vec::as_slice)
    }

    /// Postings with the ordinals resolved to document ids.
    pub fn postings_by_id(&self, term: &str) -> Vec<(&str, u32)> {
        self.postings(term)
            .unwrap_or_default()
            .iter()
            .map(|p| (self.doc_ids[p.doc as usize].as_str(), p.tf))
            .collect()
    }

    fn ordinal(&self, doc_id: &str) -> Option<usize> {
        self.doc_ids.binary_search_by(|d| d.as_str().cmp(doc_id)).ok()
    }

    /// BM25 score of one document. Every query token contributes once per
    /// occurrence; tokens missing from the index contribute nothing.
    pub fn score(&self, params: &Bm25Params, query_tokens: &[String], doc_id: &str) -> Result<f64, IndexError> {
        let ordinal = self
            .ordinal(doc_id)
            .ok_or_else(|| IndexError::UnknownDocument(doc_id.to_string()))? as u32;
        let doc_len = f64::from(self.doc_lengths[ordinal as usize]);
        let mut score = 0.0;
        for token in query_tokens {
            let Some(list) = self.postings.get(token) else { continue };
            if let Ok(pos) = list.binary_search_by_key(&ordinal, |p| p.doc) {
                let weight = idf(self.doc_count(), list.len());
                score += term_weight(params, weight, f64::from(list[pos].tf), doc_len, self.avgdl);
            }
        }
        Ok(score)
    }

    /// Top-`k` documents for already-analyzed query tokens.
    pub fn search_tokens(
        &self,
        params: &Bm25Params,
        query_id: &str,
        query_tokens: &[String],
        k: usize,
    ) -> Result<RankedList, IndexError> {
        params.validate()?;
        if k == 0 {
            return Err(IndexError::InvalidDepth);
        }
        let mut scores = vec![0.0f64; self.doc_count()];
        let mut touched: Vec<u32> = Vec::new();
        for token in query_tokens {
            let Some(list) = self.postings.get(token) else { continue };
            let weight = idf(self.doc_count(), list.len());
            for posting in list {
                let slot = &mut scores[posting.doc as usize];
                if *slot == 0.0 {
                    touched.push(posting.doc);
                }
                let doc_len = f64::from(self.doc_lengths[posting.doc as usize]);
                *slot += term_weight(params, weight, f64::from(posting.tf), doc_len, self.avgdl);
            }
        }
        touched.sort_unstable();
        touched.dedup();

        let mut hits: Vec<(u32, f64)> = touched
            .into_iter()
            .map(|doc| (doc, scores[doc as usize]))
            .filter(|(_, score)| *score > 0.0)
            .collect();
        let by_rank = |a: &(u32, f64), b: &(u32, f64)| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0));
        if hits.len() > k {
            hits.select_nth_unstable_by(k - 1, by_rank);
            hits.truncate(k);
        }
        hits.sort_unstable_by(by_rank);

        Ok(RankedList {
            query_id: query_id.to_string(),
            entries: hits
                .into_iter()
                .map(|(doc, score)| ScoredDoc {
                    doc_id: self.doc_ids[doc as usize].clone(),
                    score,
                })
                .collect(),
            depth: k,
        })
    }

    /// Serialize as JSON Lines: a version header, one line per document, one
    /// line per term.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let header = IndexHeader {
            format: INDEX_FORMAT.to_string(),
            version: INDEX_VERSION,
            doc_lang: self.doc_lang,
            doc_count: self.doc_count(),
            term_count: self.postings.len(),
            total_tokens: self.total_tokens,
            analyzer: self.analyzer.clone(),
        };
        push_line(&mut out, &header);
        for (doc_id, len) in self.doc_ids.iter().zip(&self.doc_lengths) {
            push_line(
                &mut out,
                &DocLine {
                    doc: doc_id.clone(),
                    len: *len,
                },
            );
        }
        for (term, list) in &self.postings {
            let postings = list.iter().map(|p| (p.doc, p.tf)).collect();
            push_line(
                &mut out,
                &TermLine {
                    term: term.clone(),
                    postings,
                },
            );
        }
        out
    }

    pub fn from_jsonl(input: &str) -> Result<Self, IndexError> {
        let bad = |line: usize, reason: String| IndexError::Format { line, reason };
        let mut lines = input.lines().enumerate().map(|(i, l)| (i + 1, l));
        let (_, first) = lines.next().ok_or_else(|| bad(1, "missing header".into()))?;
        let header: IndexHeader = serde_json::from_str(first).map_err(|e| bad(1, e.to_string()))?;
        if header.format != INDEX_FORMAT || header.version != INDEX_VERSION {
            return Err(bad(
                1,
                format!("unsupported index format {} v{}", header.format, header.version),
            ));
        }
        if header.doc_count == 0 {
            return Err(IndexError::EmptyCollection);
        }
        let mut doc_ids = Vec::with_capacity(header.doc_count);
        let mut doc_lengths = Vec::with_capacity(header.doc_count);
        for _ in 0..header.doc_count {
            let (no, line) = lines.next().ok_or_else(|| bad(0, "truncated document table".into()))?;
            let doc: DocLine = serde_json::from_str(line).map_err(|e| bad(no, e.to_string()))?;
            if doc_ids
                .last()
                .is_some_and(|prev: &String| prev.as_str() >= doc.doc.as_str())
            {
                return Err(bad(no, "document ids not strictly ascending".into()));
            }
            doc_ids.push(doc.doc);
            doc_lengths.push(doc.len);
        }
        let mut postings = BTreeMap::new();
        for (no, line) in lines {
            if line.is_empty() {
                continue;
            }
            let term: TermLine = serde_json::from_str(line).map_err(|e| bad(no, e.to_string()))?;
            let mut list = Vec::with_capacity(term.postings.len());
            for (doc, tf) in term.postings {
                if doc as usize >= doc_ids.len() || tf == 0 {
                    return Err(bad(no, format!("invalid posting ({doc}, {tf})")));
                }
                if list.last().is_some_and(|p: &Posting| p.doc >= doc) {
                    return Err(bad(no, "postings not sorted by document".into()));
                }
                list.push(Posting { doc, tf });
            }
            postings.insert(term.term, list);
        }
        if postings.len() != header.term_count {
            return Err(bad(
                0,
                format!("expected {} terms, found {}", header.term_count, postings.len()),
            ));
        }
        let index = Self::assemble(doc_ids, doc_lengths, postings, header.doc_lang, header.analyzer);
        if index.total_tokens != header.total_tokens {
            return Err(bad(1, "token total does not match document lengths".into()));
        }
        Ok(index)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), IndexError> {
        fs::write(path, self.to_jsonl())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, IndexError> {
        Self::from_jsonl(&fs::read_to_string(path)?)
    }
}

fn push_line<T: Serialize>(out: &mut String, value: &T) {
    out.push_str(&serde_json::to_string(value).expect("index record serializes"));
    out.push('\n');
}

#[derive(Serialize, Deserialize)]
struct IndexHeader {
    format: String,
    version: u32,
    doc_lang: LangCode,
    doc_count: usize,
    term_count: usize,
    total_tokens: u64,
    analyzer: Analyzer,
}

#[derive(Serialize, Deserialize)]
struct DocLine {
    doc: String,
    len: u32,
}

#[derive(Serialize, Deserialize)]
struct TermLine {
    term: String,
    postings: Vec<(u32, u32)>,
}

/// BM25 score of `doc_id` for pre-analyzed query tokens.
pub fn bm25_score(
    index: &InvertedIndex,
    params: &Bm25Params,
    query_tokens: &[String],
    doc_id: &str,
) -> Result<f64, IndexError> {
    index.score(params, query_tokens, doc_id)
}

/// Analyze `query_text` with the index's analyzer and return the top
/// `k_retrieve` documents. Zero-score documents are never returned.
pub fn retrieve(
    index: &InvertedIndex,
    params: &Bm25Params,
    query_id: &str,
    query_text: &str,
    query_lang: LangCode,
    k_retrieve: usize,
) -> Result<RankedList, IndexError> {
    let tokens = index.analyzer().analyze(query_text, query_lang).tokens;
    index.search_tokens(params, query_id, &tokens, k_retrieve)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredDoc {
    pub doc_id: String,
    pub score: f64,
}

/// A ranking for one query, best first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub query_id: String,
    pub entries: Vec<ScoredDoc>,
    pub depth: usize,
}

impl RankedList {
    pub fn empty(query_id: impl Into<String>, depth: usize) -> Self {
        RankedList {
            query_id: query_id.into(),
            entries: Vec::new(),
            depth,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.doc_id.as_str())
    }

    /// True when entries are strictly ordered by (score desc, doc_id asc).
    pub fn is_canonically_sorted(&self) -> bool {
        self.entries.windows(2).all(|w| {
            let (a, b) = (&w[0], &w[1]);
            a.score > b.score || (a.score == b.score && a.doc_id < b.doc_id)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;

    fn en() -> LangCode {
        "en".parse().unwrap()
    }

    fn collection(bodies: &[(&str, &str)]) -> Collection {
        Collection::new(
            bodies
                .iter()
                .map(|(id, body)| Document {
                    doc_id: id.to_string(),
                    lang: en(),
                    title: None,
                    body: body.to_string(),
                })
                .collect(),
            en(),
        )
        .unwrap()
    }

    fn tokens(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn builds_postings_and_lengths() {
        let index = build_index(&collection(&[("d1", "a b a"), ("d2", "b")])).unwrap();
        assert_eq!(index.postings_by_id("a"), vec![("d1", 2)]);
        assert_eq!(index.postings_by_id("b"), vec![("d1", 1), ("d2", 1)]);
        assert_eq!(index.avgdl(), 2.0);
        assert_eq!(index.doc_count(), 2);
    }

    #[test]
    fn single_document() {
        let index = build_index(&collection(&[("only", "x y z w")])).unwrap();
        assert_eq!(index.doc_count(), 1);
        assert_eq!(index.avgdl(), 4.0);
    }

    #[test]
    fn rebuild_is_identical() {
        let c = collection(&[("d2", "b c"), ("d1", "a b a"), ("d3", "c c c")]);
        let first = build_index(&c).unwrap().to_jsonl();
        let second = build_index(&c).unwrap().to_jsonl();
        assert_eq!(first, second);
    }

    #[test]
    fn doc_ids_sorted_regardless_of_input_order() {
        let index = build_index(&collection(&[("z", "a"), ("m", "a"), ("a", "a")])).unwrap();
        assert_eq!(index.doc_ids(), ["a", "m", "z"]);
        assert_eq!(index.postings_by_id("a"), vec![("a", 1), ("m", 1), ("z", 1)]);
    }

    #[test]
    fn absent_terms_score_zero() {
        let index = build_index(&collection(&[("d1", "a b"), ("d2", "a")])).unwrap();
        let params = Bm25Params::default();
        assert_eq!(index.score(&params, &tokens("zzz yyy"), "d1").unwrap(), 0.0);
        let with = index.score(&params, &tokens("a"), "d1").unwrap();
        let with_absent = index.score(&params, &tokens("a zzz"), "d1").unwrap();
        assert_eq!(with, with_absent);
        assert!(matches!(
            index.score(&params, &tokens("a"), "nope"),
            Err(IndexError::UnknownDocument(_))
        ));
    }

    #[test]
    fn shorter_document_wins() {
        // Hand evaluation: N=2, df(a)=2, idf = ln(1 + 0.5/2.5) = ln 1.2.
        // avgdl = 1.5; d1 (len 2): 2.2 / (1 + 1.2 * (0.25 + 0.75 * 2/1.5)) = 2.2/2.5
        // d2 (len 1): 2.2 / (1 + 1.2 * (0.25 + 0.75 / 1.5)) = 2.2/1.9
        let index = build_index(&collection(&[("d1", "a b"), ("d2", "a")])).unwrap();
        let params = Bm25Params::default();
        let q = tokens("a");
        let d1 = index.score(&params, &q, "d1").unwrap();
        let d2 = index.score(&params, &q, "d2").unwrap();
        let idf = 1.2f64.ln();
        assert!((d1 - idf * 2.2 / 2.5).abs() < 1e-12);
        assert!((d2 - idf * 2.2 / 1.9).abs() < 1e-12);
        assert!(d2 > d1);

        let top = retrieve(&index, &params, "q", "a", en(), 1).unwrap();
        assert_eq!(top.doc_ids().collect::<Vec<_>>(), vec!["d2"]);
    }

    #[test]
    fn duplicate_query_terms_count_each_occurrence() {
        let index = build_index(&collection(&[("d1", "a b"), ("d2", "b c")])).unwrap();
        let params = Bm25Params::default();
        let once = index.score(&params, &tokens("a"), "d1").unwrap();
        let twice = index.score(&params, &tokens("a a"), "d1").unwrap();
        assert!((twice - 2.0 * once).abs() < 1e-12);
    }

    #[test]
    fn no_vocabulary_overlap_gives_empty_list() {
        let index = build_index(&collection(&[("d1", "a b"), ("d2", "a")])).unwrap();
        let ranked = retrieve(&index, &Bm25Params::default(), "q", "nothing here", en(), 10).unwrap();
        assert!(ranked.is_empty());
        assert_eq!(ranked.depth, 10);
    }

    #[test]
    fn ties_break_by_doc_id() {
        let index = build_index(&collection(&[("c", "x"), ("a", "x"), ("b", "x"), ("d", "y")])).unwrap();
        let ranked = retrieve(&index, &Bm25Params::default(), "q", "x", en(), 2).unwrap();
        assert_eq!(ranked.doc_ids().collect::<Vec<_>>(), vec!["a", "b"]);
        assert!(ranked.is_canonically_sorted());
    }

    #[test]
    fn invalid_arguments() {
        let index = build_index(&collection(&[("d1", "a")])).unwrap();
        assert!(matches!(
            retrieve(&index, &Bm25Params::default(), "q", "a", en(), 0),
            Err(IndexError::InvalidDepth)
        ));
        assert!(Bm25Params::new(-0.1, 0.5).is_err());
        assert!(Bm25Params::new(1.2, 1.5).is_err());
        assert!(Bm25Params::new(0.0, 0.0).is_ok());
    }

    #[test]
    fn idf_is_nonnegative() {
        for n in 1..200 {
            for df in 1..=n {
                assert!(idf(n, df) >= 0.0);
            }
        }
    }

    #[test]
    fn jsonl_round_trip_and_corruption() {
        let index = build_index(&collection(&[("d1", "a b a"), ("d2", "b 東京")])).unwrap();
        let text = index.to_jsonl();
        assert!(text.starts_with("{\"format\":\"xpandir-index\",\"version\":1"));
        let reloaded = InvertedIndex::from_jsonl(&text).unwrap();
        assert_eq!(reloaded, index);
        assert_eq!(reloaded.to_jsonl(), text);

        let broken = text.replacen("\"version\":1", "\"version\":9", 1);
        assert!(matches!(
            InvertedIndex::from_jsonl(&broken),
            Err(IndexError::Format { line: 1, .. })
        ));
        let truncated: String = text.lines().take(2).map(|l| format!("{l}\n")).collect();
        assert!(InvertedIndex::from_jsonl(&truncated).is_err());
    }
}
