//! TREC run files: `query_id Q0 doc_id rank score run_tag`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::index::{RankedList, ScoredDoc};

#[derive(Debug, Error)]
pub enum RunFormatError {
    #[error("run file line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("run file i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// Parsed run: ranked lists keyed by query id, plus the run tag.
#[derive(Debug, Clone, PartialEq)]
pub struct Run {
    pub tag: String,
    pub lists: BTreeMap<String, RankedList>,
}

/// Canonical run text: queries in id order, entries in rank order starting at
/// 1, scores with six decimals.
pub fn write_run<'a, I>(lists: I, tag: &str) -> String
where
    I: IntoIterator<Item = &'a RankedList>,
{
    let mut sorted: Vec<&RankedList> = lists.into_iter().collect();
    sorted.sort_by(|a, b| a.query_id.cmp(&b.query_id));
    let mut out = String::new();
    for list in sorted {
        for (idx, entry) in list.entries.iter().enumerate() {
            writeln!(
                out,
                "{} Q0 {} {} {:.6} {}",
                list.query_id,
                entry.doc_id,
                idx + 1,
                entry.score,
                tag
            )
            .expect("writing to a String cannot fail");
        }
    }
    out
}

pub fn parse_run(input: &str) -> Result<Run, RunFormatError> {
    let bad = |line: usize, reason: String| RunFormatError::Malformed { line, reason };
    let mut rows: BTreeMap<String, Vec<(usize, usize, ScoredDoc)>> = BTreeMap::new();
    let mut tag: Option<String> = None;
    for (idx, raw) in input.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [query_id, _q0, doc_id, rank, score, run_tag] = fields[..] else {
            return Err(bad(
                line_no,
                format!(
                    "expected 6 fields `query_id Q0 doc_id rank score tag`, found {}",
                    fields.len()
                ),
            ));
        };
        let rank: usize = rank
            .parse()
            .map_err(|_| bad(line_no, format!("rank {rank:?} is not a positive integer")))?;
        if rank == 0 {
            return Err(bad(line_no, "ranks start at 1".into()));
        }
        let score: f64 = score
            .parse()
            .map_err(|_| bad(line_no, format!("score {score:?} is not a number")))?;
        if !score.is_finite() {
            return Err(bad(line_no, format!("score {score} is not finite")));
        }
        match &tag {
            None => tag = Some(run_tag.to_string()),
            Some(existing) if existing != run_tag => {
                return Err(bad(line_no, format!("run tag {run_tag:?} differs from {existing:?}")));
            }
            Some(_) => {}
        }
        rows.entry(query_id.to_string()).or_default().push((
            rank,
            line_no,
            ScoredDoc {
                doc_id: doc_id.to_string(),
                score,
            },
        ));
    }

    let mut lists = BTreeMap::new();
    for (query_id, mut entries) in rows {
        entries.sort_by_key(|(rank, _, _)| *rank);
        let mut seen = std::collections::HashSet::new();
        for window in entries.windows(2) {
            if window[0].0 == window[1].0 {
                return Err(bad(
                    window[1].1,
                    format!("duplicate rank {} for query {query_id}", window[1].0),
                ));
            }
        }
        for (_, line_no, entry) in &entries {
            if !seen.insert(entry.doc_id.clone()) {
                return Err(bad(
                    *line_no,
                    format!("document {} listed twice for query {query_id}", entry.doc_id),
                ));
            }
        }
        let entries: Vec<ScoredDoc> = entries.into_iter().map(|(_, _, e)| e).collect();
        let depth = entries.len();
        lists.insert(
            query_id.clone(),
            RankedList {
                query_id,
                entries,
                depth,
            },
        );
    }
    Ok(Run {
        tag: tag.unwrap_or_default(),
        lists,
    })
}

pub fn load_run(path: impl AsRef<Path>) -> Result<Run, RunFormatError> {
    parse_run(&fs::read_to_string(path)?)
}
