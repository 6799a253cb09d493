//! JSON Lines cache of expanded queries.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use thiserror::Error;

use super::{ExpandedQuery, ExpansionPlan};

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("expansion cache line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("expansion cache i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CacheKey {
    pub query_id: String,
    pub fingerprint: String,
    pub backend_id: String,
}

impl CacheKey {
    pub fn new(query_id: &str, plan: &ExpansionPlan) -> Self {
        CacheKey {
            query_id: query_id.to_string(),
            fingerprint: plan.fingerprint(),
            backend_id: plan.backend_id.clone(),
        }
    }
}

/// Expanded queries keyed by (query id, plan fingerprint, backend id).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExpansionCache {
    entries: BTreeMap<CacheKey, ExpandedQuery>,
}

impl ExpansionCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(input: &str) -> Result<Self, CacheError> {
        let mut cache = Self::new();
        for (idx, line) in input.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: ExpandedQuery = serde_json::from_str(line).map_err(|e| CacheError::Malformed {
                line: idx + 1,
                reason: e.to_string(),
            })?;
            cache.insert(record);
        }
        Ok(cache)
    }

    /// Read a cache file; a missing file is an empty cache.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, CacheError> {
        match fs::read_to_string(path) {
            Ok(input) => Self::parse(&input),
            Err(err) if err.kind() == std::io::ErrorKind::NotFound => Ok(Self::new()),
            Err(err) => Err(err.into()),
        }
    }

    pub fn get(&self, query_id: &str, plan: &ExpansionPlan) -> Option<&ExpandedQuery> {
        self.entries.get(&CacheKey::new(query_id, plan))
    }

    pub fn insert(&mut self, record: ExpandedQuery) {
        self.entries
            .insert(CacheKey::new(&record.query_id, &record.plan), record);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn records(&self) -> impl Iterator<Item = &ExpandedQuery> {
        self.entries.values()
    }

    /// One record per line in key order.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for record in self.entries.values() {
            out.push_str(&serde_json::to_string(record).expect("expanded query serializes"));
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CacheError> {
        let path = path.as_ref();
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, self.to_jsonl())?;
        Ok(())
    }
}
