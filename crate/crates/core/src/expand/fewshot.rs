//! Example pools for few-shot prompting.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use super::ExpandError;
use crate::analyzer::Analyzer;
use crate::corpus::{CorpusError, RecordFormat};
use crate::lang::LangCode;

/// Example passages are cut to this many analyzer tokens.
pub const FEWSHOT_PASSAGE_TOKENS: usize = 512;

/// Distinct query/passage pairs in one language.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FewshotPool {
    pub lang: LangCode,
    pairs: Vec<(String, String)>,
}

#[derive(Deserialize)]
struct PoolRecord {
    query: String,
    passage: String,
}

fn malformed(line: usize, reason: impl Into<String>) -> CorpusError {
    CorpusError::MalformedRecord {
        line,
        reason: reason.into(),
    }
}

impl FewshotPool {
    /// Build a pool, dropping repeated pairs and truncating long passages.
    pub fn new<I>(lang: LangCode, pairs: I) -> Self
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let analyzer = Analyzer::default();
        let mut seen = BTreeSet::new();
        let pairs = pairs
            .into_iter()
            .map(|(q, p)| {
                let passage = analyzer.truncate_to_tokens(p.trim(), lang, FEWSHOT_PASSAGE_TOKENS);
                (q.trim().to_string(), passage)
            })
            .filter(|pair| seen.insert(pair.clone()))
            .collect();
        FewshotPool { lang, pairs }
    }

    /// TSV rows are `query<TAB>passage` or `id<TAB>query<TAB>passage`; JSONL
    /// records carry `query` and `passage` fields.
    pub fn parse(input: &str, lang: LangCode, format: RecordFormat) -> Result<Self, CorpusError> {
        let mut pairs = Vec::new();
        for (idx, line) in input.lines().enumerate() {
            let line_no = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let pair = match format {
                RecordFormat::Tsv => {
                    let fields: Vec<&str> = line.split('\t').collect();
                    match fields.as_slice() {
                        [query, passage] | [_, query, passage] => (query.to_string(), passage.to_string()),
                        _ => return Err(malformed(line_no, "expected query<TAB>passage")),
                    }
                }
                RecordFormat::Jsonl => {
                    let record: PoolRecord =
                        serde_json::from_str(line).map_err(|e| malformed(line_no, e.to_string()))?;
                    (record.query, record.passage)
                }
            };
            if pair.0.trim().is_empty() || pair.1.trim().is_empty() {
                return Err(malformed(line_no, "empty query or passage"));
            }
            pairs.push(pair);
        }
        if pairs.is_empty() {
            return Err(CorpusError::EmptyCollection);
        }
        Ok(Self::new(lang, pairs))
    }

    pub fn load(path: impl AsRef<Path>, lang: LangCode) -> Result<Self, CorpusError> {
        let path = path.as_ref();
        Self::parse(&crate::corpus::read(path)?, lang, RecordFormat::from_path(path))
    }

    pub fn pairs(&self) -> &[(String, String)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

fn same_text(a: &str, b: &str) -> bool {
    a.trim().to_lowercase() == b.trim().to_lowercase()
}

/// Draw `count` distinct pairs in seeded-shuffle order, skipping any pair
/// whose query equals one of `exclude` (ignoring case and outer whitespace).
pub fn sample_fewshot(
    pool: &FewshotPool,
    count: usize,
    rng_seed: u64,
    exclude: &[&str],
) -> Result<Vec<(String, String)>, ExpandError> {
    let mut eligible: Vec<&(String, String)> = pool
        .pairs
        .iter()
        .filter(|(q, _)| !exclude.iter().any(|e| same_text(q, e)))
        .collect();
    if eligible.len() < count {
        return Err(ExpandError::PoolTooSmall {
            available: eligible.len(),
            requested: count,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    eligible.shuffle(&mut rng);
    Ok(eligible.into_iter().take(count).cloned().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn en() -> LangCode {
        "en".parse().unwrap()
    }

    fn pool(n: usize) -> FewshotPool {
        FewshotPool::new(en(), (0..n).map(|i| (format!("query {i}"), format!("passage {i}"))))
    }

    #[test]
    fn whole_pool_when_count_matches() {
        let pool = pool(5);
        let sample = sample_fewshot(&pool, 5, 42, &[]).unwrap();
        let drawn: BTreeSet<_> = sample.iter().cloned().collect();
        let all: BTreeSet<_> = pool.pairs().iter().cloned().collect();
        assert_eq!(drawn, all);
    }

    #[test]
    fn too_small_pool() {
        assert!(matches!(
            sample_fewshot(&pool(3), 5, 0, &[]),
            Err(ExpandError::PoolTooSmall {
                available: 3,
                requested: 5
            })
        ));
    }

    #[test]
    fn excluded_query_never_drawn() {
        let pool = pool(6);
        for seed in 0..50 {
            let sample = sample_fewshot(&pool, 5, seed, &["Query 2"]).unwrap();
            assert!(sample.iter().all(|(q, _)| q != "query 2"));
        }
        assert!(sample_fewshot(&pool, 6, 0, &["query 2"]).is_err());
    }

    #[test]
    fn duplicates_collapse_and_passages_truncate() {
        let long = vec!["word"; 600].join(" ");
        let pool = FewshotPool::new(
            en(),
            vec![("a".into(), "b".into()), ("a".into(), "b".into()), ("c".into(), long)],
        );
        assert_eq!(pool.len(), 2);
        let tokens = Analyzer::default().analyze(&pool.pairs()[1].1, en()).tokens;
        assert_eq!(tokens.len(), FEWSHOT_PASSAGE_TOKENS);
    }

    #[test]
    fn parse_formats() {
        let tsv = FewshotPool::parse("q1\tp1\nid2\tq2\tp2\n", en(), RecordFormat::Tsv).unwrap();
        assert_eq!(tsv.pairs()[1], ("q2".to_string(), "p2".to_string()));
        let jsonl = FewshotPool::parse("{\"query\":\"q\",\"passage\":\"p\"}\n", en(), RecordFormat::Jsonl).unwrap();
        assert_eq!(jsonl.len(), 1);
        assert!(matches!(
            FewshotPool::parse("q1\tp1\nonly\n", en(), RecordFormat::Tsv),
            Err(CorpusError::MalformedRecord { line: 2, .. })
        ));
    }

    proptest! {
        #[test]
        fn sampling_is_deterministic_and_distinct(n in 1usize..30, seed in any::<u64>(), frac in 0.0f64..=1.0) {
            let pool = pool(n);
            let count = ((n as f64 * frac) as usize).max(1);
            let first = sample_fewshot(&pool, count, seed, &[]).unwrap();
            prop_assert_eq!(&first, &sample_fewshot(&pool, count, seed, &[]).unwrap());
            prop_assert_eq!(first.len(), count);
            let distinct: BTreeSet<_> = first.iter().collect();
            prop_assert_eq!(distinct.len(), count);
        }
    }
}
