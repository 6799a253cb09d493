#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use xpandir::runner::ExperimentConfig;

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn toy_dir() -> PathBuf {
    fixture_dir().join("toy")
}

/// The toy experiment writing into `output`.
pub fn toy_config(output: &Path) -> ExperimentConfig {
    let mut config = ExperimentConfig::load(toy_dir().join("experiment.toml")).unwrap();
    config.output_dir = output.to_path_buf();
    config
}

/// Every file under `root` with its bytes, keyed by relative path.
pub fn snapshot(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    out
}

/// Lowercased ASCII-alphanumeric runs. Matches the analyzer on plain
/// English text without apostrophes or digits glued to letters.
pub fn naive_tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

/// Exhaustive BM25 over pre-tokenized documents.
pub struct NaiveBm25 {
    ids: Vec<String>,
    lengths: Vec<f64>,
    tfs: Vec<HashMap<String, f64>>,
    df: HashMap<String, f64>,
    avgdl: f64,
}

impl NaiveBm25 {
    pub fn new(docs: &[(String, Vec<String>)]) -> Self {
        let mut tfs = Vec::new();
        let mut df: HashMap<String, f64> = HashMap::new();
        for (_, tokens) in docs {
            let mut tf: HashMap<String, f64> = HashMap::new();
            for t in tokens {
                *tf.entry(t.clone()).or_default() += 1.0;
            }
            for t in tf.keys() {
                *df.entry(t.clone()).or_default() += 1.0;
            }
            tfs.push(tf);
        }
        let lengths: Vec<f64> = docs.iter().map(|(_, t)| t.len() as f64).collect();
        NaiveBm25 {
            ids: docs.iter().map(|(id, _)| id.clone()).collect(),
            avgdl: lengths.iter().sum::<f64>() / docs.len() as f64,
            lengths,
            tfs,
            df,
        }
    }

    /// Score every document, drop zeros, sort by score descending then id
    /// ascending, keep `k`.
    pub fn search(&self, query: &[String], k1: f64, b: f64, k: usize) -> Vec<(String, f64)> {
        let n = self.ids.len() as f64;
        let mut scored: Vec<(String, f64)> = Vec::new();
        for (i, id) in self.ids.iter().enumerate() {
            let dl = self.lengths[i];
            let mut score = 0.0;
            for q in query {
                let Some(&tf) = self.tfs[i].get(q) else { continue };
                let d = self.df[q];
                let idf = (1.0 + (n - d + 0.5) / (d + 0.5)).ln();
                score += idf * (tf * (k1 + 1.0)) / (tf + k1 * (1.0 - b + b * dl / self.avgdl));
            }
            if score > 0.0 {
                scored.push((id.clone(), score));
            }
        }
        scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
        scored.truncate(k);
        scored
    }
}

pub fn naive_bm25(docs: &[(String, Vec<String>)], query: &[String], k1: f64, b: f64, k: usize) -> Vec<(String, f64)> {
    NaiveBm25::new(docs).search(query, k1, b, k)
}

pub fn naive_hit(ranking: &[String], relevant: &HashSet<String>, k: usize) -> f64 {
    for (i, doc) in ranking.iter().enumerate() {
        if i >= k {
            break;
        }
        if relevant.contains(doc) {
            return 1.0;
        }
    }
    0.0
}

pub fn naive_recall(ranking: &[String], relevant: &HashSet<String>, k: usize) -> f64 {
    let mut found = 0usize;
    for (i, doc) in ranking.iter().enumerate() {
        if i < k && relevant.contains(doc) {
            found += 1;
        }
    }
    found as f64 / relevant.len() as f64
}

pub fn naive_mrr(ranking: &[String], relevant: &HashSet<String>) -> f64 {
    for (i, doc) in ranking.iter().enumerate() {
        if relevant.contains(doc) {
            return 1.0 / (i as f64 + 1.0);
        }
    }
    0.0
}

pub fn naive_ndcg(ranking: &[String], grades: &HashMap<String, u8>, k: usize) -> f64 {
    let gain = |g: u8| 2f64.powf(g as f64) - 1.0;
    let mut dcg = 0.0;
    for (i, doc) in ranking.iter().enumerate() {
        if i >= k {
            break;
        }
        let g = grades.get(doc).copied().unwrap_or(0);
        dcg += gain(g) / (i as f64 + 2.0).log2();
    }
    let mut ideal: Vec<u8> = grades.values().copied().collect();
    ideal.sort();
    ideal.reverse();
    let mut idcg = 0.0;
    for (i, g) in ideal.iter().enumerate() {
        if i >= k {
            break;
        }
        idcg += gain(*g) / (i as f64 + 2.0).log2();
    }
    dcg / idcg
}

/// Read the toy fixture's mock script as (system filter, match) -> response.
pub fn toy_script() -> HashMap<(String, String), String> {
    let text = fs::read_to_string(toy_dir().join("mock.jsonl")).unwrap();
    text.lines()
        .map(|line| {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            (
                (
                    v["system"].as_str().unwrap().to_string(),
                    v["match"].as_str().unwrap().to_string(),
                ),
                v["response"].as_str().unwrap().to_string(),
            )
        })
        .collect()
}

pub fn toy_queries() -> Vec<(String, String)> {
    fs::read_to_string(toy_dir().join("queries.fr.tsv"))
        .unwrap()
        .lines()
        .map(|l| {
            let (id, text) = l.split_once('\t').unwrap();
            (id.to_string(), text.to_string())
        })
        .collect()
}

pub fn toy_docs() -> Vec<(String, Vec<String>)> {
    let mut docs: Vec<(String, Vec<String>)> = fs::read_to_string(toy_dir().join("docs.en.jsonl"))
        .unwrap()
        .lines()
        .map(|l| {
            let v: serde_json::Value = serde_json::from_str(l).unwrap();
            let text = format!("{}\n{}", v["title"].as_str().unwrap(), v["text"].as_str().unwrap());
            (v["id"].as_str().unwrap().to_string(), naive_tokens(&text))
        })
        .collect();
    docs.sort();
    docs
}

pub fn toy_qrels() -> HashMap<String, HashMap<String, u8>> {
    let mut out: HashMap<String, HashMap<String, u8>> = HashMap::new();
    for line in fs::read_to_string(toy_dir().join("qrels.fr-en.txt")).unwrap().lines() {
        let f: Vec<&str> = line.split_whitespace().collect();
        out.entry(f[0].to_string())
            .or_default()
            .insert(f[2].to_string(), f[3].parse().unwrap());
    }
    out
}

/// Retrieval text of each toy condition, derived from the mock script by
/// following the translate/expand flow by hand.
pub fn toy_condition_texts(condition: &str) -> Vec<(String, String)> {
    let script = toy_script();
    let tr = |text: &str| script[&("translation model".to_string(), text.to_string())].clone();
    let gen = |text: &str| script[&("passage".to_string(), text.to_string())].clone();
    toy_queries()
        .into_iter()
        .map(|(id, fr)| {
            let en = tr(&fr);
            let text = match condition {
                "baseline" => en,
                "te-doc" => gen(&en),
                "te-qd" => format!("{en}\n{}", gen(&en)),
                "et-doc" => tr(&gen(&fr)),
                "et-qd" => format!("{en}\n{}", tr(&gen(&fr))),
                other => panic!("unknown condition {other}"),
            };
            (id, text)
        })
        .collect()
}

pub const TOY_CONDITIONS: [&str; 5] = ["baseline", "te-doc", "te-qd", "et-doc", "et-qd"];

/// Oracle Recall@10 of a toy condition (relevance threshold 1).
pub fn toy_oracle_recall10(condition: &str) -> f64 {
    let docs = toy_docs();
    let qrels = toy_qrels();
    let texts = toy_condition_texts(condition);
    let mut total = 0.0;
    for (id, text) in &texts {
        let ranking: Vec<String> = naive_bm25(&docs, &naive_tokens(text), 1.2, 0.75, 100)
            .into_iter()
            .map(|(d, _)| d)
            .collect();
        let relevant: HashSet<String> = qrels[id]
            .iter()
            .filter(|(_, g)| **g >= 1)
            .map(|(d, _)| d.clone())
            .collect();
        total += naive_recall(&ranking, &relevant, 10);
    }
    total / texts.len() as f64
}

/// Frozen Recall@10 per toy condition.
pub fn toy_golden_recall10() -> BTreeMap<String, f64> {
    fs::read_to_string(toy_dir().join("golden_recall10.tsv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let (c, v) = l.split_once('\t').unwrap();
            (c.to_string(), v.parse().unwrap())
        })
        .collect()
}

/// Condition name of a plan cell on the toy fixture.
pub fn toy_condition(plan: &xpandir::expand::ExpansionPlan) -> String {
    format!("{}-{}", plan.order.short(), plan.retrieval_form.short())
}
