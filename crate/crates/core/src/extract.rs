//! Recovering structured payloads from chatty completions.
//!
//! JSON payloads are located by taking the first fenced block (```` ``` ````)
//! if there is one, and otherwise the first bracket-balanced region of the
//! text. Line-oriented payloads (numbered lists, persona lines, device image
//! lines, planner blocks) are parsed line by line.

use std::collections::HashSet;
use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::dialogue::{SharingInfo, Speaker, Utterance, SHARING_KEYS};
use crate::event_graph::{EventGraph, RawEdge, RawEventNode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemaKind {
    NumberedList,
    PersonaLineList,
    EventGraph,
    Session,
    DeviceImageList,
    PlanBlock,
    Plain,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExtractError {
    #[error("empty completion")]
    Empty,
    #[error("parse error at byte {offset}: expected {expected}")]
    Parse { offset: usize, expected: String },
    #[error("{0}")]
    SchemaMismatch(SchemaMismatch),
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SchemaMismatch {
    pub context: String,
    pub missing: Vec<String>,
    pub extra: Vec<String>,
    pub detail: Option<String>,
}

impl fmt::Display for SchemaMismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "schema mismatch in {}", self.context)?;
        if !self.missing.is_empty() {
            write!(f, "; missing keys {:?}", self.missing)?;
        }
        if !self.extra.is_empty() {
            write!(f, "; unexpected keys {:?}", self.extra)?;
        }
        if let Some(detail) = &self.detail {
            write!(f, "; {detail}")?;
        }
        Ok(())
    }
}

fn mismatch(context: impl Into<String>, detail: impl Into<String>) -> ExtractError {
    ExtractError::SchemaMismatch(SchemaMismatch {
        context: context.into(),
        detail: Some(detail.into()),
        ..Default::default()
    })
}

/// `<persona sentence> (<entity key>: <entity value>)`
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonaLine {
    pub sentence: String,
    pub entity_key: String,
    pub entity_value: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PersonaLines {
    pub lines: Vec<PersonaLine>,
    /// Non-blank lines that did not match the pattern.
    pub skipped: usize,
}

/// `<image_description> (Category: <image_category>)`
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceLine {
    pub description: String,
    pub categories: Vec<String>,
    /// False when the category suffix was missing and defaulted.
    pub categorized: bool,
}

/// Planner answer: the module name and, for the personalized generator, the
/// rewritten description.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanBlock {
    pub module: String,
    pub modified_description: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParsedPayload {
    NumberedList(Vec<String>),
    PersonaLines(PersonaLines),
    EventGraph(EventGraph),
    Session(Vec<Utterance>),
    DeviceImages(Vec<DeviceLine>),
    Plan(PlanBlock),
    Plain(String),
}

impl ParsedPayload {
    pub fn kind(&self) -> SchemaKind {
        match self {
            ParsedPayload::NumberedList(_) => SchemaKind::NumberedList,
            ParsedPayload::PersonaLines(_) => SchemaKind::PersonaLineList,
            ParsedPayload::EventGraph(_) => SchemaKind::EventGraph,
            ParsedPayload::Session(_) => SchemaKind::Session,
            ParsedPayload::DeviceImages(_) => SchemaKind::DeviceImageList,
            ParsedPayload::Plan(_) => SchemaKind::PlanBlock,
            ParsedPayload::Plain(_) => SchemaKind::Plain,
        }
    }

    /// Canonical text form; extracting it again yields an equal payload.
    pub fn render(&self) -> String {
        match self {
            ParsedPayload::NumberedList(items) => numbered(items.iter().map(String::as_str)),
            ParsedPayload::PersonaLines(p) => numbered(p.lines.iter().map(|l| {
                format!("{} ({}: {})", l.sentence, l.entity_key, l.entity_value)
            })),
            ParsedPayload::EventGraph(g) => g.to_json(),
            ParsedPayload::Session(turns) => {
                serde_json::to_string_pretty(turns).expect("session serialization is infallible")
            }
            ParsedPayload::DeviceImages(lines) => numbered(lines.iter().map(|l| {
                if l.categorized {
                    format!("{} (Category: {})", l.description, l.categories.join(", "))
                } else {
                    l.description.clone()
                }
            })),
            ParsedPayload::Plan(plan) => match &plan.modified_description {
                Some(m) => format!("Module: {}\nModified Image Description: {}", plan.module, m),
                None => format!("Module: {}", plan.module),
            },
            ParsedPayload::Plain(text) => text.clone(),
        }
    }
}

fn numbered<S: AsRef<str>>(items: impl Iterator<Item = S>) -> String {
    items
        .enumerate()
        .map(|(i, s)| format!("{}. {}", i + 1, s.as_ref()))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn extract_structured(text: &str, kind: SchemaKind) -> Result<ParsedPayload, ExtractError> {
    if text.trim().is_empty() {
        return Err(ExtractError::Empty);
    }
    Ok(match kind {
        SchemaKind::NumberedList => ParsedPayload::NumberedList(parse_numbered_list(text)?),
        SchemaKind::PersonaLineList => ParsedPayload::PersonaLines(parse_persona_lines(text)),
        SchemaKind::EventGraph => ParsedPayload::EventGraph(parse_event_graph(text)?),
        SchemaKind::Session => ParsedPayload::Session(parse_session(text)?),
        SchemaKind::DeviceImageList => ParsedPayload::DeviceImages(parse_device_lines(text)),
        SchemaKind::PlanBlock => ParsedPayload::Plan(parse_plan_block(text)?),
        SchemaKind::Plain => ParsedPayload::Plain(text.trim().to_string()),
    })
}

/// Byte range of the JSON region inside `text`.
pub fn locate_json(text: &str) -> Result<(usize, usize), ExtractError> {
    let (base, body) = match text.find("```") {
        Some(open) => {
            let after_fence = open + 3;
            // Skip an info string such as ```json.
            let content_start = text[after_fence..]
                .find('\n')
                .map(|nl| after_fence + nl + 1)
                .unwrap_or(text.len());
            let content_end = text[content_start..]
                .find("```")
                .map(|close| content_start + close)
                .unwrap_or(text.len());
            (content_start, &text[content_start..content_end])
        }
        None => (0, text),
    };
    let start = body.find(['[', '{']).ok_or(ExtractError::Parse {
        offset: base + body.len(),
        expected: "`[` or `{` opening a JSON value".into(),
    })?;
    let end = balanced_end(&body[start..]).map_err(|(offset, expected)| ExtractError::Parse {
        offset: base + start + offset,
        expected,
    })?;
    Ok((base + start, base + start + end))
}

/// Length of the bracket-balanced prefix of `s` (which starts with a bracket),
/// or the offset and expectation at which scanning ran out of input.
fn balanced_end(s: &str) -> Result<usize, (usize, String)> {
    let mut stack: Vec<char> = Vec::new();
    let mut in_string = false;
    let mut escaped = false;
    for (i, c) in s.char_indices() {
        if in_string {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' => in_string = true,
            '[' => stack.push(']'),
            '{' => stack.push('}'),
            ']' | '}' => {
                if stack.pop() != Some(c) {
                    return Err((i, "matching bracket".into()));
                }
                if stack.is_empty() {
                    return Ok(i + 1);
                }
            }
            _ => {}
        }
    }
    let expected = if in_string {
        "closing `\"`".to_string()
    } else {
        format!("closing `{}`", stack.last().copied().unwrap_or(']'))
    };
    Err((s.len(), expected))
}

fn line_col_to_offset(text: &str, line: usize, column: usize) -> usize {
    let mut offset = 0;
    for (i, l) in text.split_inclusive('\n').enumerate() {
        if i + 1 == line {
            return offset + column.saturating_sub(1).min(l.len());
        }
        offset += l.len();
    }
    text.len()
}

/// Parses the located JSON region of `text` into a value.
pub fn extract_json(text: &str) -> Result<Value, ExtractError> {
    let (start, end) = locate_json(text)?;
    let region = &text[start..end];
    serde_json::from_str(region).map_err(|e| ExtractError::Parse {
        offset: start + line_col_to_offset(region, e.line(), e.column()),
        expected: format!("valid JSON ({e})"),
    })
}

fn check_keys(
    context: &str,
    object: &Map<String, Value>,
    required: &[&str],
    optional: &[&str],
) -> Result<(), ExtractError> {
    let missing: Vec<String> = required
        .iter()
        .filter(|k| !object.contains_key(**k))
        .map(|k| k.to_string())
        .collect();
    let extra: Vec<String> = object
        .keys()
        .filter(|k| !required.contains(&k.as_str()) && !optional.contains(&k.as_str()))
        .cloned()
        .collect();
    if missing.is_empty() && extra.is_empty() {
        Ok(())
    } else {
        Err(ExtractError::SchemaMismatch(SchemaMismatch {
            context: context.into(),
            missing,
            extra,
            detail: None,
        }))
    }
}

/// Identifiers arrive as strings or integers; both are kept as strings.
fn id_string(context: &str, key: &str, value: &Value) -> Result<String, ExtractError> {
    match value {
        Value::String(s) => Ok(s.trim().to_string()),
        Value::Number(n) => Ok(n.to_string()),
        other => Err(mismatch(context, format!("`{key}` must be a string or integer, got {other}"))),
    }
}

fn text_field(context: &str, key: &str, value: &Value) -> Result<String, ExtractError> {
    match value {
        Value::String(s) => Ok(s.clone()),
        other => Err(mismatch(context, format!("`{key}` must be a string, got {other}"))),
    }
}

fn as_array<'a>(value: &'a Value, what: &str) -> Result<&'a Vec<Value>, ExtractError> {
    value
        .as_array()
        .ok_or_else(|| mismatch(what, "expected a JSON list"))
}

fn as_object<'a>(value: &'a Value, context: &str) -> Result<&'a Map<String, Value>, ExtractError> {
    value
        .as_object()
        .ok_or_else(|| mismatch(context, "expected a JSON object"))
}

pub const EVENT_KEYS: [&str; 4] = ["id", "event", "date", "caused_by"];
pub const EDGE_KEYS: [&str; 4] = [
    "caused_by:id",
    "caused_by:time_interval",
    "caused_by:experience_op",
    "caused_by:experience",
];

/// Locates and key-checks an event graph without typing its fields.
pub fn parse_raw_event_graph(text: &str) -> Result<Vec<RawEventNode>, ExtractError> {
    let value = extract_json(text)?;
    let entries = as_array(&value, "event graph")?;
    let mut nodes = Vec::with_capacity(entries.len());
    for (i, entry) in entries.iter().enumerate() {
        let context = format!("event graph entry {i}");
        let object = as_object(entry, &context)?;
        check_keys(&context, object, &EVENT_KEYS, &[])?;
        let caused_by = match &object["caused_by"] {
            Value::Null => None,
            Value::Object(edge) if edge.is_empty() => None,
            Value::Object(edge) => {
                let edge_context = format!("{context} caused_by");
                check_keys(&edge_context, edge, &EDGE_KEYS, &[])?;
                Some(RawEdge {
                    parent_id: id_string(&edge_context, EDGE_KEYS[0], &edge[EDGE_KEYS[0]])?,
                    time_interval: text_field(&edge_context, EDGE_KEYS[1], &edge[EDGE_KEYS[1]])?,
                    experience_op: text_field(&edge_context, EDGE_KEYS[2], &edge[EDGE_KEYS[2]])?,
                    experience: text_field(&edge_context, EDGE_KEYS[3], &edge[EDGE_KEYS[3]])?,
                })
            }
            other => return Err(mismatch(&context, format!("`caused_by` must be an object, got {other}"))),
        };
        nodes.push(RawEventNode {
            id: id_string(&context, "id", &object["id"])?,
            event: text_field(&context, "event", &object["event"])?,
            date: text_field(&context, "date", &object["date"])?,
            caused_by,
        });
    }
    Ok(nodes)
}

pub fn parse_event_graph(text: &str) -> Result<EventGraph, ExtractError> {
    let raw = parse_raw_event_graph(text)?;
    EventGraph::from_raw(&raw).map_err(|e| mismatch("event graph", e.to_string()))
}

pub const UTTERANCE_KEYS: [&str; 4] = ["utterance_id", "speaker", "utterance", "sharing_info"];

pub fn parse_session(text: &str) -> Result<Vec<Utterance>, ExtractError> {
    let value = extract_json(text)?;
    let entries = as_array(&value, "session")?;
    let mut turns = Vec::with_capacity(entries.len());
    let mut ids = HashSet::new();
    for (i, entry) in entries.iter().enumerate() {
        let context = format!("session entry {i}");
        let object = as_object(entry, &context)?;
        check_keys(&context, object, &UTTERANCE_KEYS, &[])?;
        let utterance_id = id_string(&context, "utterance_id", &object["utterance_id"])?;
        if !ids.insert(utterance_id.clone()) {
            return Err(mismatch(&context, format!("duplicate utterance_id `{utterance_id}`")));
        }
        let speaker = Speaker::from_label(&text_field(&context, "speaker", &object["speaker"])?);
        let utterance = match &object["utterance"] {
            Value::Null => String::new(),
            other => text_field(&context, "utterance", other)?,
        };
        let sharing_info = match &object["sharing_info"] {
            Value::Null => SharingInfo::default(),
            Value::Object(map) => {
                let sharing_context = format!("{context} sharing_info");
                check_keys(&sharing_context, map, &[], &SHARING_KEYS)?;
                SharingInfo::deserialize(Value::Object(map.clone()))
                    .map_err(|e| mismatch(&sharing_context, e.to_string()))?
            }
            other => return Err(mismatch(&context, format!("`sharing_info` must be an object, got {other}"))),
        };
        turns.push(Utterance {
            utterance_id,
            speaker,
            utterance,
            sharing_info,
            image: None,
        });
    }
    Ok(turns)
}

fn numbered_line_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*(\d+)\s*[.)]\s*(.*?)\s*$").expect("valid regex"))
}

pub fn parse_numbered_list(text: &str) -> Result<Vec<String>, ExtractError> {
    let items: Vec<String> = text
        .lines()
        .filter_map(|line| numbered_line_re().captures(line))
        .map(|c| c[2].to_string())
        .filter(|s| !s.is_empty())
        .collect();
    if items.is_empty() {
        return Err(ExtractError::Parse {
            offset: 0,
            expected: "a numbered list item such as `1. ...`".into(),
        });
    }
    Ok(items)
}

/// Strips an optional `N.` / `N)` prefix from a list line.
fn strip_number(line: &str) -> &str {
    let trimmed = line.trim();
    match numbered_line_re().captures(trimmed) {
        Some(c) => c.get(2).map(|m| m.as_str()).unwrap_or(""),
        None => trimmed,
    }
}

fn persona_line_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^(?P<sentence>.+?)\s*\((?P<key>[^():]+):\s*(?P<value>[^()]+?)\s*\)\s*\.?$")
            .expect("valid regex")
    })
}

/// Completions continue a prompt ending in `1.`, so the first line may lack
/// its number.
pub fn parse_persona_lines(text: &str) -> PersonaLines {
    let mut out = PersonaLines::default();
    for line in text.lines() {
        let line = strip_number(line);
        if line.is_empty() {
            continue;
        }
        match persona_line_re().captures(line) {
            Some(c) => {
                let sentence = c["sentence"].trim();
                let key = c["key"].trim();
                let value = c["value"].trim();
                if sentence.is_empty() || key.is_empty() || value.is_empty() {
                    out.skipped += 1;
                } else {
                    out.lines.push(PersonaLine {
                        sentence: sentence.to_string(),
                        entity_key: key.to_string(),
                        entity_value: value.to_string(),
                    });
                }
            }
            None => out.skipped += 1,
        }
    }
    out
}

fn category_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)^(?P<desc>.*?)\s*\(\s*categor(?:y|ies)\s*:\s*(?P<cats>[^()]*)\)\s*\.?$")
            .expect("valid regex")
    })
}

pub const UNCATEGORIZED: &str = "uncategorized";

pub fn parse_device_lines(text: &str) -> Vec<DeviceLine> {
    let mut lines = Vec::new();
    for line in text.lines() {
        let line = strip_number(line);
        if line.is_empty() {
            continue;
        }
        match category_re().captures(line) {
            Some(c) => {
                let categories: Vec<String> = c["cats"]
                    .split(',')
                    .map(|s| s.trim().to_string())
                    .filter(|s| !s.is_empty())
                    .collect();
                let categorized = !categories.is_empty();
                lines.push(DeviceLine {
                    description: c["desc"].trim().to_string(),
                    categories: if categorized {
                        categories
                    } else {
                        vec![UNCATEGORIZED.to_string()]
                    },
                    categorized,
                });
            }
            None => {
                tracing::warn!(line, "device image line has no category suffix");
                lines.push(DeviceLine {
                    description: line.to_string(),
                    categories: vec![UNCATEGORIZED.to_string()],
                    categorized: false,
                });
            }
        }
    }
    lines.retain(|l| !l.description.is_empty());
    lines
}

fn clean_label_value(s: &str) -> String {
    s.trim().trim_matches('*').trim().to_string()
}

/// Reads `Module:` and `Modified Image Description:` lines. A completion that
/// starts with the bare module name (continuing the prompt's `Module:`) is
/// accepted too.
pub fn parse_plan_block(text: &str) -> Result<PlanBlock, ExtractError> {
    let mut module = None;
    let mut modified = None;
    let mut first_free_line = None;
    for line in text.lines() {
        let stripped = line.trim().trim_start_matches('*').trim();
        if stripped.is_empty() {
            continue;
        }
        let lower = stripped.to_ascii_lowercase();
        if let Some(rest) = lower.strip_prefix("modified image description") {
            let offset = stripped.len() - rest.len();
            let value = stripped[offset..].trim_start_matches([':', '*', ' ']);
            modified = Some(clean_label_value(value));
        } else if let Some(rest) = lower.strip_prefix("module") {
            let offset = stripped.len() - rest.len();
            if rest.trim_start().starts_with(':') || rest.trim_start().starts_with("*:") {
                let value = stripped[offset..].trim_start_matches([':', '*', ' ']);
                module = Some(clean_label_value(value));
            }
        } else if first_free_line.is_none() && module.is_none() {
            first_free_line = Some(clean_label_value(stripped));
        }
    }
    let module = module
        .filter(|m| !m.is_empty())
        .or(first_free_line)
        .ok_or(ExtractError::Parse {
            offset: text.len(),
            expected: "a `Module:` line".into(),
        })?;
    Ok(PlanBlock {
        module,
        modified_description: modified.filter(|m| !m.is_empty()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const GRAPH: &str = r#"Sure! Here is the graph:
```json
[
  {"id": 1, "event": "Ana starts a new job.", "date": "2023.01.02", "caused_by": {}},
  {"id": 2, "event": "Ana meets her team.", "date": "2023.01.09", "caused_by": {
    "caused_by:id": 1, "caused_by:time_interval": "1 week",
    "caused_by:experience_op": "add", "caused_by:experience": "Ana learned the ropes."}}
]
```
Let me know if you need more."#;

    #[test]
    fn fenced_event_graph() {
        let payload = extract_structured(GRAPH, SchemaKind::EventGraph).unwrap();
        let ParsedPayload::EventGraph(graph) = payload else { panic!() };
        assert_eq!(graph.nodes.len(), 2);
        assert_eq!(graph.nodes[1].caused_by.as_ref().unwrap().parent_id, "1");
    }

    #[test]
    fn bare_region_is_found_without_fence() {
        let text = "Here you go: [1, [2, 3]] and trailing words [9]";
        let (s, e) = locate_json(text).unwrap();
        assert_eq!(&text[s..e], "[1, [2, 3]]");
    }

    #[test]
    fn brackets_inside_strings_are_ignored() {
        let text = r#"{"a": "]}\"[", "b": [1]} tail"#;
        let (s, e) = locate_json(text).unwrap();
        assert_eq!(&text[s..e], r#"{"a": "]}\"[", "b": [1]}"#);
    }

    #[test]
    fn truncated_block_reports_truncation_offset() {
        let text = r#"[{"id": "1", "event": "x", "date": "2023.01.01", "caused_by": {}"#;
        let err = extract_structured(text, SchemaKind::EventGraph).unwrap_err();
        assert_eq!(
            err,
            ExtractError::Parse {
                offset: text.len(),
                expected: "closing `}`".into()
            }
        );
    }

    #[test]
    fn missing_and_extra_keys_are_listed() {
        let text = r#"[{"id": "1", "event": "x", "when": "2023.01.01", "caused_by": {}}]"#;
        let err = extract_structured(text, SchemaKind::EventGraph).unwrap_err();
        let ExtractError::SchemaMismatch(m) = err else { panic!("{err:?}") };
        assert_eq!(m.missing, ["date"]);
        assert_eq!(m.extra, ["when"]);
    }

    #[test]
    fn unknown_unit_is_a_schema_mismatch() {
        let text = GRAPH.replace("1 week", "1 fortnight");
        let err = extract_structured(&text, SchemaKind::EventGraph).unwrap_err();
        assert!(matches!(err, ExtractError::SchemaMismatch(ref m) if m.detail.as_deref().unwrap().contains("fortnight")));
    }

    #[test]
    fn numbered_list_minimal() {
        assert_eq!(
            extract_structured("1. foo\n2. bar", SchemaKind::NumberedList).unwrap(),
            ParsedPayload::NumberedList(vec!["foo".into(), "bar".into()])
        );
        assert!(matches!(
            extract_structured("no items here", SchemaKind::NumberedList),
            Err(ExtractError::Parse { offset: 0, .. })
        ));
    }

    #[test]
    fn empty_text_is_rejected() {
        assert_eq!(extract_structured("  \n", SchemaKind::Plain), Err(ExtractError::Empty));
    }

    #[test]
    fn persona_lines_skip_mismatches() {
        let text = " I am from London. (city-state: London)\n2. I hate rain.\n3. I love Paris (city-state: Paris).";
        let parsed = parse_persona_lines(text);
        assert_eq!(parsed.skipped, 1);
        assert_eq!(parsed.lines.len(), 2);
        assert_eq!(parsed.lines[0].sentence, "I am from London.");
        assert_eq!(parsed.lines[0].entity_key, "city-state");
        assert_eq!(parsed.lines[1].entity_value, "Paris");
    }

    #[test]
    fn device_lines_split_categories() {
        let text = "A photo of a young Tom playing basketball in a middle school gymnasium (Category: Past Memory, Sport)\n2. A sunset over the bay";
        let lines = parse_device_lines(text);
        assert_eq!(lines[0].categories, ["Past Memory", "Sport"]);
        assert_eq!(
            lines[0].description,
            "A photo of a young Tom playing basketball in a middle school gymnasium"
        );
        assert_eq!(lines[1].categories, [UNCATEGORIZED]);
        assert!(!lines[1].categorized);
    }

    #[test]
    fn plan_blocks() {
        let p = parse_plan_block("Module: Personalized Text-to-Image Generator\nModified Image Description: A selfie of a man [img] at home").unwrap();
        assert_eq!(p.module, "Personalized Text-to-Image Generator");
        assert_eq!(p.modified_description.as_deref(), Some("A selfie of a man [img] at home"));
        let p = parse_plan_block(" Web Search\n").unwrap();
        assert_eq!(p.module, "Web Search");
        assert_eq!(p.modified_description, None);
        let p = parse_plan_block("**Module:** Image Database Retrieval").unwrap();
        assert_eq!(p.module, "Image Database Retrieval");
    }

    #[test]
    fn session_sharing_info() {
        let text = r#"[
 {"utterance_id": 1, "speaker": "User", "utterance": "Look at this!", "sharing_info": {}},
 {"utterance_id": 2, "speaker": "User", "utterance": "", "sharing_info": {"rationale": "to show", "image_description": "A dog", "image_source": "mobile", "keywords": ["dog"], "image_id_from_mobile": "2"}},
 {"utterance_id": 3, "speaker": "AI Assistant", "utterance": "Cute!", "sharing_info": {}}
]"#;
        let turns = parse_session(text).unwrap();
        assert_eq!(turns.len(), 3);
        assert_eq!(turns[2].speaker, Speaker::Assistant);
        assert!(turns[1].sharing_info.is_sharing());
        let dup = text.replace("\"utterance_id\": 3", "\"utterance_id\": 2");
        assert!(parse_session(&dup).is_err());
    }
}
