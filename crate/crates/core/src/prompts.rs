//! Prompt templates for expansion and translation.
//!
//! Expansion prompts are fixed strings; only the query (and, for few-shot,
//! the example pairs) is interpolated.

use crate::lang::LangCode;

/// System message for zero-shot, chain-of-thought and rephrase-and-respond.
pub const EXPANSION_SYSTEM: &str = "You are a text expansion model. Respond only with the requested passage. \
Stop naturally at the end of the passage and avoid repetition.";

/// System message for few-shot prompting.
pub const FEWSHOT_SYSTEM: &str = "Given example query\u{2013}passage pairs, produce one short, relevant passage \
about the final query. Respond only with the passage; stop naturally at the end of the passage and avoid repetition.";

pub const ZERO_SHOT_INSTRUCTION: &str = "Please write a passage to answer the question.";
pub const ZERO_SHOT_LABEL: &str = "Question: ";
pub const COT_INSTRUCTION: &str = "Answer the following query, give the rationale before answering:";
pub const RAR_INSTRUCTION: &str = "Rephrase and expand the question, and respond.";
pub const FEWSHOT_INSTRUCTION: &str = "Please write a passage that answers the given query:";

pub const TRANSLATION_SYSTEM: &str = "You are a translation model. Respond only with the translation.";
const TRANSLATION_LEAD: &str = "Translate the following text from ";

pub fn zero_shot_user(query: &str) -> String {
    format!("{ZERO_SHOT_INSTRUCTION}\n{ZERO_SHOT_LABEL}{query}")
}

pub fn cot_user(query: &str) -> String {
    format!("{COT_INSTRUCTION} {query}")
}

pub fn rar_user(query: &str) -> String {
    format!("{RAR_INSTRUCTION} {query}")
}

/// Header, a blank line, each example as `Query:`/`Passage:` lines followed
/// by a blank line, then the open final query.
pub fn fewshot_user<Q, P>(query: &str, examples: &[(Q, P)]) -> String
where
    Q: AsRef<str>,
    P: AsRef<str>,
{
    let mut out = format!("{FEWSHOT_INSTRUCTION}\n\n");
    for (example_query, passage) in examples {
        out.push_str("Query: ");
        out.push_str(example_query.as_ref());
        out.push_str("\nPassage: ");
        out.push_str(passage.as_ref());
        out.push_str("\n\n");
    }
    out.push_str("Query: ");
    out.push_str(query);
    out.push_str("\nPassage:");
    out
}

pub fn translation_user(text: &str, src: LangCode, tgt: LangCode) -> String {
    format!(
        "{TRANSLATION_LEAD}{} to {}:\n{text}",
        src.english_name(),
        tgt.english_name()
    )
}

/// Recover the interpolated text (query or text to translate) from a user
/// message built by this module. Unrecognized messages are returned whole.
pub fn payload(user_message: &str) -> &str {
    if let Some(rest) = user_message.strip_prefix(FEWSHOT_INSTRUCTION) {
        if let (Some(start), Some(body)) = (rest.rfind("Query: "), rest.strip_suffix("\nPassage:")) {
            if start + "Query: ".len() <= body.len() {
                return &body[start + "Query: ".len()..];
            }
        }
    }
    if let Some(rest) = user_message.strip_prefix(ZERO_SHOT_INSTRUCTION) {
        if let Some(query) = rest.strip_prefix('\n').and_then(|r| r.strip_prefix(ZERO_SHOT_LABEL)) {
            return query;
        }
    }
    if let Some(rest) = user_message.strip_prefix(COT_INSTRUCTION) {
        return rest.strip_prefix(' ').unwrap_or(rest);
    }
    if let Some(rest) = user_message.strip_prefix(RAR_INSTRUCTION) {
        return rest.strip_prefix(' ').unwrap_or(rest);
    }
    if user_message.starts_with(TRANSLATION_LEAD) {
        if let Some((_, text)) = user_message.split_once('\n') {
            return text;
        }
    }
    user_message
}
