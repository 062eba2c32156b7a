use std::collections::HashMap;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{canned, BackendError, ChatBackend, StepId, WireRequest};

/// One line of a mock script file.
///
/// `match` is `*` (any instruction), `sha256:<hex>` (exact instruction hash)
/// or any other string, which must occur as a substring of the instruction.
/// Several records with the same `(step_id, match)` form a sequence replayed
/// in order; the last response repeats once the sequence is exhausted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptRecord {
    pub step_id: StepId,
    #[serde(rename = "match")]
    pub matcher: String,
    pub response: String,
}

#[derive(Debug, Error)]
pub enum ScriptError {
    #[error("cannot read script {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("script line {line}: {message}")]
    BadLine { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordedCall {
    pub step: StepId,
    pub wire: WireRequest,
}

#[derive(Debug)]
struct Rule {
    step: StepId,
    matcher: String,
    responses: Vec<String>,
}

impl Rule {
    fn matches(&self, step: StepId, instruction: &str, key: &str) -> bool {
        if step != self.step {
            return false;
        }
        if self.matcher == "*" {
            return true;
        }
        match self.matcher.strip_prefix("sha256:") {
            Some(hex) => hex.eq_ignore_ascii_case(key),
            None => instruction.contains(&self.matcher),
        }
    }
}

/// Deterministic scripted backend. Unscripted requests get a canned,
/// minimally valid payload for their step.
#[derive(Debug, Default)]
pub struct MockChatBackend {
    rules: Vec<Rule>,
    cursors: Mutex<HashMap<usize, usize>>,
    calls: Mutex<Vec<RecordedCall>>,
}

/// Hex SHA-256 of an instruction, the key scripts use for exact matches.
pub fn instruction_key(instruction: &str) -> String {
    hex::encode(Sha256::digest(instruction.as_bytes()))
}

impl MockChatBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_records(records: impl IntoIterator<Item = ScriptRecord>) -> Self {
        let mut mock = Self::new();
        for record in records {
            mock.push(record.step_id, record.matcher, record.response);
        }
        mock
    }

    pub fn from_jsonl(text: &str) -> Result<Self, ScriptError> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: ScriptRecord = serde_json::from_str(line).map_err(|e| ScriptError::BadLine {
                line: i + 1,
                message: e.to_string(),
            })?;
            records.push(record);
        }
        Ok(Self::from_records(records))
    }

    pub fn from_file(path: &Path) -> Result<Self, ScriptError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScriptError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_jsonl(&text)
    }

    /// Appends a scripted response. Builder-style helper for tests.
    pub fn script(mut self, step: StepId, matcher: impl Into<String>, response: impl Into<String>) -> Self {
        self.push(step, matcher.into(), response.into());
        self
    }

    fn push(&mut self, step: StepId, matcher: String, response: String) {
        match self
            .rules
            .iter_mut()
            .find(|r| r.step == step && r.matcher == matcher)
        {
            Some(rule) => rule.responses.push(response),
            None => self.rules.push(Rule {
                step,
                matcher,
                responses: vec![response],
            }),
        }
    }

    pub fn calls(&self) -> Vec<RecordedCall> {
        self.calls.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }
}

impl ChatBackend for MockChatBackend {
    fn id(&self) -> &str {
        "mock"
    }

    fn send(&self, step: StepId, request: &WireRequest) -> Result<String, BackendError> {
        self.calls
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .push(RecordedCall {
                step,
                wire: request.clone(),
            });
        let instruction = request.instruction();
        let key = instruction_key(instruction);
        let hit = self
            .rules
            .iter()
            .position(|r| r.matches(step, instruction, &key));
        match hit {
            Some(idx) => {
                let rule = &self.rules[idx];
                let mut cursors = self.cursors.lock().unwrap_or_else(|e| e.into_inner());
                let cursor = cursors.entry(idx).or_insert(0);
                let response = rule.responses[(*cursor).min(rule.responses.len() - 1)].clone();
                *cursor += 1;
                Ok(response)
            }
            None => Ok(canned::respond(step, instruction, &key)),
        }
    }
}
