//! Cross-lingual generative query expansion toolkit.
//!
//! The pipeline runs in three stages: a query is translated into the document
//! language and expanded into a pseudo-document by a language model
//! ([`expand`], backed by [`gateway`]), the resulting text is ranked with BM25
//! ([`index`]), and rankings are scored against relevance judgments
//! ([`metrics`]). [`runner`] drives the full experiment matrix over language
//! pairs and aggregates results.

pub mod analyzer;
pub mod corpus;
pub mod expand;
pub mod gateway;
pub mod index;
pub mod lang;
pub mod metrics;
pub mod prompts;
pub mod runner;
pub mod trec;

pub use analyzer::{analyze, Analyzer, TokenStream};
pub use corpus::{Collection, Document, QrelScheme, QrelSet, Query, RecordFormat};
pub use index::{bm25_score, build_index, retrieve, Bm25Params, InvertedIndex, RankedList, ScoredDoc};
pub use lang::{LangCode, LangRegistry};
