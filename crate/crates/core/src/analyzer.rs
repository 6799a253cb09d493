//! Text analysis shared by indexing and query processing.
//!
//! The chain is NFKC normalization, Unicode word segmentation, case folding.
//! Runs of Han, Hiragana and Katakana are not word-segmented; they are
//! emitted as overlapping character bigrams instead (a single character run
//! yields a unigram). Stemming and stopword removal are off unless enabled.

use std::collections::BTreeSet;

use rust_stemmers::{Algorithm, Stemmer};
use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;
use unicode_segmentation::UnicodeSegmentation;

use crate::lang::LangCode;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenStream {
    pub tokens: Vec<String>,
    pub source_lang: LangCode,
}

impl TokenStream {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Analyze with the default chain (no stemming, no stopwords).
pub fn analyze(text: &str, lang: LangCode) -> TokenStream {
    Analyzer::default().analyze(text, lang)
}

/// Configurable analysis chain. The default is the plain chain used for all
/// experiments.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Analyzer {
    #[serde(default)]
    stem: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    stopwords: Option<BTreeSet<String>>,
}

impl Analyzer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Enable Snowball stemming for languages that have an algorithm.
    pub fn with_stemming(mut self, enabled: bool) -> Self {
        self.stem = enabled;
        self
    }

    /// Drop tokens found in `words` (compared after case folding).
    pub fn with_stopwords<I, S>(mut self, words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let set = words.into_iter().map(|w| fold(w.as_ref())).collect();
        self.stopwords = Some(set);
        self
    }

    pub fn is_default(&self) -> bool {
        !self.stem && self.stopwords.is_none()
    }

    pub fn analyze(&self, text: &str, lang: LangCode) -> TokenStream {
        let normalized: String = text.nfkc().collect();
        let tokens = self
            .tokens_with_spans(&normalized, lang)
            .into_iter()
            .map(|(token, _)| token)
            .collect();
        TokenStream {
            tokens,
            source_lang: lang,
        }
    }

    /// Cut `text` after its `max_tokens`-th token. Text that is already
    /// short enough is returned unchanged; otherwise the result is a prefix of
    /// the NFKC form of `text`.
    pub fn truncate_to_tokens(&self, text: &str, lang: LangCode, max_tokens: usize) -> String {
        let normalized: String = text.nfkc().collect();
        let spans = self.tokens_with_spans(&normalized, lang);
        if spans.len() <= max_tokens {
            return text.to_string();
        }
        if max_tokens == 0 {
            return String::new();
        }
        let end = spans[max_tokens - 1].1 .1;
        normalized[..end].to_string()
    }

    fn tokens_with_spans(&self, normalized: &str, lang: LangCode) -> Vec<(String, (usize, usize))> {
        let stemmer = if self.stem {
            stemmer_for(lang).map(Stemmer::create)
        } else {
            None
        };
        let mut out = Vec::new();
        for (start, end, is_cjk) in script_runs(normalized) {
            let run = &normalized[start..end];
            if is_cjk {
                push_bigrams(run, start, &mut out);
            } else {
                for (offset, word) in run.unicode_word_indices() {
                    let mut token = fold(word);
                    if let Some(stemmer) = &stemmer {
                        token = stemmer.stem(&token).into_owned();
                    }
                    if token.is_empty() || token.chars().any(char::is_whitespace) {
                        continue;
                    }
                    out.push((token, (start + offset, start + offset + word.len())));
                }
            }
        }
        if let Some(stopwords) = &self.stopwords {
            out.retain(|(token, _)| !stopwords.contains(token));
        }
        out
    }
}

fn fold(word: &str) -> String {
    caseless::default_case_fold_str(word).nfkc().collect()
}

fn stemmer_for(lang: LangCode) -> Option<Algorithm> {
    Some(match lang.as_str() {
        "ar" => Algorithm::Arabic,
        "de" => Algorithm::German,
        "en" => Algorithm::English,
        "es" => Algorithm::Spanish,
        "fr" => Algorithm::French,
        "it" => Algorithm::Italian,
        "nl" => Algorithm::Dutch,
        "pt" => Algorithm::Portuguese,
        "ru" => Algorithm::Russian,
        _ => return None,
    })
}

/// Han, Hiragana and Katakana letters. Kana punctuation such as the middle
/// dot is excluded so it splits runs.
pub fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x3005 | 0x3007
        | 0x3041..=0x309F
        | 0x30A1..=0x30FA
        | 0x30FC..=0x30FF
        | 0x31F0..=0x31FF
        | 0x3400..=0x4DBF
        | 0x4E00..=0x9FFF
        | 0xF900..=0xFAFF
        | 0x20000..=0x2A6DF
        | 0x2A700..=0x2EBEF
        | 0x30000..=0x3134F)
}

/// Split into maximal byte ranges that are either all CJK or all non-CJK.
fn script_runs(text: &str) -> Vec<(usize, usize, bool)> {
    let mut runs: Vec<(usize, usize, bool)> = Vec::new();
    for (idx, c) in text.char_indices() {
        let cjk = is_cjk(c);
        let end = idx + c.len_utf8();
        match runs.last_mut() {
            Some(last) if last.2 == cjk => last.1 = end,
            _ => runs.push((idx, end, cjk)),
        }
    }
    runs
}

fn push_bigrams(run: &str, base: usize, out: &mut Vec<(String, (usize, usize))>) {
    let chars: Vec<(usize, char)> = run.char_indices().collect();
    if chars.len() == 1 {
        let (offset, c) = chars[0];
        out.push((c.to_string(), (base + offset, base + offset + c.len_utf8())));
        return;
    }
    for pair in chars.windows(2) {
        let (start, first) = pair[0];
        let (second_at, second) = pair[1];
        let mut token = String::with_capacity(first.len_utf8() + second.len_utf8());
        token.push(first);
        token.push(second);
        out.push((token, (base + start, base + second_at + second.len_utf8())));
    }
}
