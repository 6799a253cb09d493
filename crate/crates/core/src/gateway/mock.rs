//! Scripted backend.
//!
//! A script is a JSON Lines file. Rule records look like
//! `{"match": "...", "kind": "exact"|"contains"|"payload", "system": "...", "response": "..."}`
//! where `kind` defaults to `exact` and the optional `system` is a substring
//! the system message must contain. `payload` rules compare against the text
//! interpolated into a known prompt template (the query, or the text to
//! translate). A record `{"default": "..."}` sets the fallback response.
//!
//! Lookup order: exact rules, then payload rules, then contains rules (each in
//! file order), then the default. Responses may use `<query>` (the payload)
//! and `<user>` (the whole user message) placeholders.

use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Backend, ChatRequest, Completion, TransportError};
use crate::prompts;

#[derive(Debug, Error)]
pub enum MockScriptError {
    #[error("mock script line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("mock script i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchKind {
    #[default]
    Exact,
    Contains,
    Payload,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockRule {
    #[serde(rename = "match")]
    pub pattern: String,
    #[serde(default)]
    pub kind: MatchKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<String>,
    pub response: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MockScript {
    pub rules: Vec<MockRule>,
    pub default: Option<String>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ScriptRecord {
    Default { default: String },
    Rule(MockRule),
}

fn normalize(text: &str) -> String {
    text.replace("\r\n", "\n").trim().to_string()
}

impl MockScript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_default(mut self, response: impl Into<String>) -> Self {
        self.default = Some(response.into());
        self
    }

    pub fn rule(mut self, kind: MatchKind, pattern: impl Into<String>, response: impl Into<String>) -> Self {
        self.rules.push(MockRule {
            pattern: pattern.into(),
            kind,
            system: None,
            response: response.into(),
        });
        self
    }

    pub fn rule_for_system(
        mut self,
        system: impl Into<String>,
        kind: MatchKind,
        pattern: impl Into<String>,
        response: impl Into<String>,
    ) -> Self {
        self.rules.push(MockRule {
            pattern: pattern.into(),
            kind,
            system: Some(system.into()),
            response: response.into(),
        });
        self
    }

    pub fn parse(input: &str) -> Result<Self, MockScriptError> {
        let mut script = MockScript::new();
        for (idx, line) in input.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: ScriptRecord = serde_json::from_str(line).map_err(|e| MockScriptError::Malformed {
                line: idx + 1,
                reason: e.to_string(),
            })?;
            match record {
                ScriptRecord::Default { default } => script.default = Some(default),
                ScriptRecord::Rule(rule) => script.rules.push(rule),
            }
        }
        Ok(script)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, MockScriptError> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for rule in &self.rules {
            out.push_str(&serde_json::to_string(rule).expect("rule serializes"));
            out.push('\n');
        }
        if let Some(default) = &self.default {
            out.push_str(&serde_json::json!({ "default": default }).to_string());
            out.push('\n');
        }
        out
    }

    /// The scripted response for `(system, user)`, placeholders filled in.
    pub fn respond(&self, system: &str, user: &str) -> Option<String> {
        let system = normalize(system);
        let user = normalize(user);
        let payload = normalize(prompts::payload(&user));
        let applies = |rule: &&MockRule| {
            rule.system
                .as_deref()
                .is_none_or(|needle| system.contains(&normalize(needle)))
        };
        let by_kind = |kind: MatchKind| {
            self.rules
                .iter()
                .filter(move |r| r.kind == kind)
                .filter(applies)
                .find(|rule| {
                    let pattern = normalize(&rule.pattern);
                    match kind {
                        MatchKind::Exact => user == pattern,
                        MatchKind::Payload => payload == pattern,
                        MatchKind::Contains => user.contains(&pattern),
                    }
                })
        };
        let template = by_kind(MatchKind::Exact)
            .or_else(|| by_kind(MatchKind::Payload))
            .or_else(|| by_kind(MatchKind::Contains))
            .map(|rule| rule.response.as_str())
            .or(self.default.as_deref())?;
        Some(template.replace("<query>", &payload).replace("<user>", &user))
    }
}

/// Deterministic backend answering from a [`MockScript`].
#[derive(Debug)]
pub struct MockBackend {
    id: String,
    script: MockScript,
    fail_first: u64,
    calls: AtomicU64,
}

impl MockBackend {
    pub fn new(id: impl Into<String>, script: MockScript) -> Self {
        MockBackend {
            id: id.into(),
            script,
            fail_first: 0,
            calls: AtomicU64::new(0),
        }
    }

    /// Answer the first `n` calls with a simulated rate-limit error.
    pub fn failing_first(mut self, n: u64) -> Self {
        self.fail_first = n;
        self
    }

    pub fn script(&self) -> &MockScript {
        &self.script
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Backend for MockBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, request: &ChatRequest) -> Result<Completion, TransportError> {
        let call = self.calls.fetch_add(1, Ordering::SeqCst);
        if call < self.fail_first {
            return Err(TransportError::Transient("simulated HTTP 429".into()));
        }
        let text = self
            .script
            .respond(&request.system_message, &request.user_message)
            .ok_or_else(|| TransportError::Rejected("no scripted response matches the request".into()))?;
        Ok(Completion {
            text,
            truncated: false,
            simulated_latency_ms: Some(0),
        })
    }
}
