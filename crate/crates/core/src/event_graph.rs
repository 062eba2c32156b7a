//! Temporal event graphs.
//!
//! A graph is a list of dated life events. Every event except the initial
//! one may point at the earlier event that caused it; that edge carries the
//! elapsed time interval and an experience operation (`add` a new
//! experience or `update` a past one). Sessions are scheduled one per event
//! in date order.
//!
//! Two representations exist. [`RawEventNode`] holds the records exactly as a
//! model emitted them (all strings) so the validator can report malformed
//! dates, units and operations. [`EventGraph`] is the typed form that the rest
//! of the pipeline consumes; it serializes back to the same wire keys.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, Days, NaiveDate};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub const DATE_FORMAT: &str = "%Y.%m.%d";
pub const MIN_EVENTS: usize = 5;

/// Default date horizon: no event may be dated after April 2024.
pub fn default_horizon() -> NaiveDate {
    NaiveDate::from_ymd_opt(2024, 4, 30).expect("valid constant date")
}

pub fn format_date(date: NaiveDate) -> String {
    date.format(DATE_FORMAT).to_string()
}

/// Parses `%Y.%m.%d`, accepting only strings that re-serialize bit-exactly
/// (zero-padded month and day, four-digit year).
pub fn parse_date(text: &str) -> Option<NaiveDate> {
    let date = NaiveDate::parse_from_str(text, DATE_FORMAT).ok()?;
    (format_date(date) == text).then_some(date)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeUnit {
    Hour,
    Day,
    Week,
    Month,
    Year,
}

impl TimeUnit {
    pub const ALL: [TimeUnit; 5] = [
        TimeUnit::Hour,
        TimeUnit::Day,
        TimeUnit::Week,
        TimeUnit::Month,
        TimeUnit::Year,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TimeUnit::Hour => "hour",
            TimeUnit::Day => "day",
            TimeUnit::Week => "week",
            TimeUnit::Month => "month",
            TimeUnit::Year => "year",
        }
    }
}

impl FromStr for TimeUnit {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        // Plural forms ("3 weeks") are common in completions.
        let singular = s.strip_suffix('s').unwrap_or(&s);
        TimeUnit::ALL
            .into_iter()
            .find(|u| u.as_str() == singular)
            .ok_or(())
    }
}

/// `<count> <unit>`, e.g. `2 week`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TimeInterval {
    pub count: u32,
    pub unit: TimeUnit,
}

impl TimeInterval {
    pub const fn new(count: u32, unit: TimeUnit) -> Self {
        Self { count, unit }
    }

    /// True when the interval spans at least one calendar day.
    pub fn crosses_midnight(&self) -> bool {
        match self.unit {
            TimeUnit::Hour => self.count >= 24,
            _ => self.count > 0,
        }
    }

    /// Approximate length in days (30.44-day months, 365.25-day years).
    pub fn approx_days(&self) -> f64 {
        let count = f64::from(self.count);
        match self.unit {
            TimeUnit::Hour => count / 24.0,
            TimeUnit::Day => count,
            TimeUnit::Week => count * 7.0,
            TimeUnit::Month => count * 30.44,
            TimeUnit::Year => count * 365.25,
        }
    }
}

impl fmt::Display for TimeInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.count, self.unit.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("bad time interval `{0}`")]
pub struct BadInterval(pub String);

impl FromStr for TimeInterval {
    type Err = BadInterval;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || BadInterval(s.to_string());
        let mut parts = s.split_whitespace();
        let count = parts.next().ok_or_else(bad)?;
        let unit = parts.next().ok_or_else(bad)?;
        if parts.next().is_some() {
            return Err(bad());
        }
        let count: u32 = count.parse().map_err(|_| bad())?;
        let unit: TimeUnit = unit.parse().map_err(|_| bad())?;
        Ok(Self { count, unit })
    }
}

impl Serialize for TimeInterval {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TimeInterval {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

fn days_in_month(year: i32, month: u32) -> u32 {
    let (next_year, next_month) = if month == 12 { (year + 1, 1) } else { (year, month + 1) };
    NaiveDate::from_ymd_opt(next_year, next_month, 1)
        .and_then(|d| d.pred_opt())
        .map(|d| d.day())
        .unwrap_or(28)
}

fn add_months(date: NaiveDate, months: u64) -> NaiveDate {
    let total = i64::from(date.year()) * 12 + i64::from(date.month0()) + months as i64;
    let Ok(year) = i32::try_from(total.div_euclid(12)) else {
        return NaiveDate::MAX;
    };
    let month = total.rem_euclid(12) as u32 + 1;
    let day = date.day().min(days_in_month(year, month));
    NaiveDate::from_ymd_opt(year, month, day).unwrap_or(NaiveDate::MAX)
}

/// Serde adapter writing dates as `%Y.%m.%d` strings.
pub mod date_format {
    use chrono::NaiveDate;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(date: &NaiveDate, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(&super::format_date(*date))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<NaiveDate, D::Error> {
        let text = String::deserialize(deserializer)?;
        super::parse_date(&text)
            .ok_or_else(|| serde::de::Error::custom(format!("bad date `{text}`")))
    }
}

/// Calendar-aware `date + interval`.
///
/// Month and year steps clamp the day to the target month's last day. Hours
/// advance the date only by whole accumulated days. Saturates at
/// [`NaiveDate::MAX`].
pub fn apply_interval(date: NaiveDate, interval: TimeInterval) -> NaiveDate {
    let count = u64::from(interval.count);
    let add_days = |days: u64| date.checked_add_days(Days::new(days)).unwrap_or(NaiveDate::MAX);
    match interval.unit {
        TimeUnit::Hour => add_days(count / 24),
        TimeUnit::Day => add_days(count),
        TimeUnit::Week => add_days(count * 7),
        TimeUnit::Month => add_months(date, count),
        TimeUnit::Year => add_months(date, count * 12),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperienceOp {
    Add,
    Update,
}

impl ExperienceOp {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperienceOp::Add => "add",
            ExperienceOp::Update => "update",
        }
    }
}

impl FromStr for ExperienceOp {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "add" => Ok(ExperienceOp::Add),
            "update" => Ok(ExperienceOp::Update),
            _ => Err(()),
        }
    }
}

/// Edge record as emitted, keyed with the literal `caused_by:` prefixes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawEdge {
    #[serde(rename = "caused_by:id")]
    pub parent_id: String,
    #[serde(rename = "caused_by:time_interval")]
    pub time_interval: String,
    #[serde(rename = "caused_by:experience_op")]
    pub experience_op: String,
    #[serde(rename = "caused_by:experience")]
    pub experience: String,
}

/// Node record as emitted; `caused_by` is `None` for an empty dictionary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawEventNode {
    pub id: String,
    pub event: String,
    pub date: String,
    pub caused_by: Option<RawEdge>,
}

#[derive(Serialize, Deserialize)]
struct RawNodeWire {
    id: String,
    event: String,
    date: String,
    caused_by: RawEdgeWire,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RawEdgeWire {
    Edge(RawEdge),
    Empty(EmptyObject),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EmptyObject {}

impl Serialize for RawEventNode {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        RawNodeWire {
            id: self.id.clone(),
            event: self.event.clone(),
            date: self.date.clone(),
            caused_by: match &self.caused_by {
                Some(edge) => RawEdgeWire::Edge(edge.clone()),
                None => RawEdgeWire::Empty(EmptyObject {}),
            },
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for RawEventNode {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let wire = RawNodeWire::deserialize(deserializer)?;
        Ok(RawEventNode {
            id: wire.id,
            event: wire.event,
            date: wire.date,
            caused_by: match wire.caused_by {
                RawEdgeWire::Edge(edge) => Some(edge),
                RawEdgeWire::Empty(_) => None,
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CausalEdge {
    pub parent_id: String,
    pub time_interval: TimeInterval,
    pub experience_op: ExperienceOp,
    pub experience: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventNode {
    pub id: String,
    pub event: String,
    pub date: NaiveDate,
    pub caused_by: Option<CausalEdge>,
}

impl EventNode {
    pub fn to_raw(&self) -> RawEventNode {
        RawEventNode {
            id: self.id.clone(),
            event: self.event.clone(),
            date: format_date(self.date),
            caused_by: self.caused_by.as_ref().map(|e| RawEdge {
                parent_id: e.parent_id.clone(),
                time_interval: e.time_interval.to_string(),
                experience_op: e.experience_op.as_str().to_string(),
                experience: e.experience.clone(),
            }),
        }
    }
}

/// Why a raw record could not be typed.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TypingError {
    #[error("node `{id}`: date `{date}` is not %Y.%m.%d")]
    Date { id: String, date: String },
    #[error("node `{id}`: time interval `{interval}` is not `<count> <hour|day|week|month|year>`")]
    Unit { id: String, interval: String },
    #[error("node `{id}`: experience_op `{op}` is not add/update")]
    Op { id: String, op: String },
}

impl RawEventNode {
    pub fn to_typed(&self) -> Result<EventNode, TypingError> {
        let date = parse_date(&self.date).ok_or_else(|| TypingError::Date {
            id: self.id.clone(),
            date: self.date.clone(),
        })?;
        let caused_by = match &self.caused_by {
            None => None,
            Some(edge) => Some(CausalEdge {
                parent_id: edge.parent_id.clone(),
                time_interval: parse_edge_interval(&edge.time_interval).ok_or_else(|| {
                    TypingError::Unit {
                        id: self.id.clone(),
                        interval: edge.time_interval.clone(),
                    }
                })?,
                experience_op: edge.experience_op.parse().map_err(|_| TypingError::Op {
                    id: self.id.clone(),
                    op: edge.experience_op.clone(),
                })?,
                experience: edge.experience.clone(),
            }),
        };
        Ok(EventNode {
            id: self.id.clone(),
            event: self.event.clone(),
            date,
            caused_by,
        })
    }
}

/// Edge intervals must have a positive count.
fn parse_edge_interval(text: &str) -> Option<TimeInterval> {
    text.parse::<TimeInterval>().ok().filter(|i| i.count > 0)
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EventGraph {
    pub nodes: Vec<EventNode>,
}

impl EventGraph {
    pub fn new(nodes: Vec<EventNode>) -> Self {
        Self { nodes }
    }

    pub fn from_raw(raw: &[RawEventNode]) -> Result<Self, TypingError> {
        raw.iter()
            .map(RawEventNode::to_typed)
            .collect::<Result<Vec<_>, _>>()
            .map(Self::new)
    }

    pub fn to_raw(&self) -> Vec<RawEventNode> {
        self.nodes.iter().map(EventNode::to_raw).collect()
    }

    pub fn node(&self, id: &str) -> Option<&EventNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn validate(&self, rules: &GraphRules) -> ValidationReport {
        validate_event_graph(&self.to_raw(), rules)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph serialization is infallible")
    }
}

impl Serialize for EventGraph {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_raw().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for EventGraph {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = Vec::<RawEventNode>::deserialize(deserializer)?;
        EventGraph::from_raw(&raw).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GraphViolation {
    DuplicateId,
    DanglingParent,
    Cycle,
    CausalityViolation,
    DateHorizon,
    TooFewEvents,
    BadDateFormat,
    BadUnit,
    BadOp,
    NonEmptyRootEdge,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation<K> {
    pub kind: K,
    pub subject: Option<String>,
    pub detail: String,
}

/// Zero or more violations; empty means valid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Report<K> {
    pub violations: Vec<Violation<K>>,
}

impl<K> Default for Report<K> {
    fn default() -> Self {
        Self {
            violations: Vec::new(),
        }
    }
}

impl<K: Copy + Eq> Report<K> {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn push(&mut self, kind: K, subject: Option<&str>, detail: impl Into<String>) {
        self.violations.push(Violation {
            kind,
            subject: subject.map(str::to_string),
            detail: detail.into(),
        });
    }

    pub fn kinds(&self) -> Vec<K> {
        let mut kinds: Vec<K> = Vec::new();
        for v in &self.violations {
            if !kinds.contains(&v.kind) {
                kinds.push(v.kind);
            }
        }
        kinds
    }

    pub fn contains(&self, kind: K) -> bool {
        self.violations.iter().any(|v| v.kind == kind)
    }
}

pub type ValidationReport = Report<GraphViolation>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GraphRules {
    pub min_events: usize,
    pub horizon: NaiveDate,
}

impl Default for GraphRules {
    fn default() -> Self {
        Self {
            min_events: MIN_EVENTS,
            horizon: default_horizon(),
        }
    }
}

/// Checks a raw graph and reports every violation found.
///
/// A child may share its parent's date only when the edge interval is
/// shorter than a day (`"5 hour"`); otherwise it must be strictly later.
pub fn validate_event_graph(nodes: &[RawEventNode], rules: &GraphRules) -> ValidationReport {
    use GraphViolation::*;
    let mut report = ValidationReport::default();

    if nodes.len() < rules.min_events {
        report.push(
            TooFewEvents,
            None,
            format!("{} events, need at least {}", nodes.len(), rules.min_events),
        );
    }

    let mut seen = HashSet::new();
    for node in nodes {
        if !seen.insert(node.id.as_str()) {
            report.push(DuplicateId, Some(&node.id), "id appears more than once");
        }
    }

    if let Some(first) = nodes.first() {
        if first.caused_by.is_some() {
            report.push(
                NonEmptyRootEdge,
                Some(&first.id),
                "the initial event must have an empty caused_by",
            );
        }
    }

    let mut dates: HashMap<&str, NaiveDate> = HashMap::new();
    for node in nodes {
        match parse_date(&node.date) {
            Some(date) => {
                if date > rules.horizon {
                    report.push(
                        DateHorizon,
                        Some(&node.id),
                        format!("{} is after {}", node.date, format_date(rules.horizon)),
                    );
                }
                dates.entry(node.id.as_str()).or_insert(date);
            }
            None => report.push(
                BadDateFormat,
                Some(&node.id),
                format!("`{}` is not %Y.%m.%d", node.date),
            ),
        }
    }

    let ids: HashSet<&str> = nodes.iter().map(|n| n.id.as_str()).collect();
    for node in nodes {
        let Some(edge) = &node.caused_by else { continue };
        let interval = parse_edge_interval(&edge.time_interval);
        if interval.is_none() {
            report.push(
                BadUnit,
                Some(&node.id),
                format!("`{}` is not `<count> <unit>`", edge.time_interval),
            );
        }
        if edge.experience_op.parse::<ExperienceOp>().is_err() {
            report.push(
                BadOp,
                Some(&node.id),
                format!("`{}` is not add/update", edge.experience_op),
            );
        }
        if !ids.contains(edge.parent_id.as_str()) {
            report.push(
                DanglingParent,
                Some(&node.id),
                format!("parent `{}` does not exist", edge.parent_id),
            );
            continue;
        }
        if let (Some(&child), Some(&parent)) = (
            dates.get(node.id.as_str()),
            dates.get(edge.parent_id.as_str()),
        ) {
            let same_day_ok = interval.is_some_and(|i| !i.crosses_midnight());
            if child < parent || (child == parent && !same_day_ok) {
                report.push(
                    CausalityViolation,
                    Some(&node.id),
                    format!(
                        "dated {} but caused by `{}` dated {}",
                        format_date(child),
                        edge.parent_id,
                        format_date(parent)
                    ),
                );
            }
        }
    }

    for cycle in find_cycles(nodes) {
        report.push(Cycle, Some(&cycle[0]), format!("cycle through {}", cycle.join(" -> ")));
    }

    report
}

/// Each node has at most one parent, so every cycle is found by walking
/// parent pointers. Returns each cycle once, starting from its first-listed
/// member.
fn find_cycles(nodes: &[RawEventNode]) -> Vec<Vec<String>> {
    let parent: HashMap<&str, &str> = nodes
        .iter()
        .filter_map(|n| n.caused_by.as_ref().map(|e| (n.id.as_str(), e.parent_id.as_str())))
        .collect();
    let order: HashMap<&str, usize> = nodes
        .iter()
        .enumerate()
        .rev()
        .map(|(i, n)| (n.id.as_str(), i))
        .collect();
    let mut reported: HashSet<&str> = HashSet::new();
    let mut cycles = Vec::new();
    for node in nodes {
        let start = node.id.as_str();
        let mut path = vec![start];
        let mut current = start;
        while let Some(&next) = parent.get(current) {
            if let Some(pos) = path.iter().position(|&p| p == next) {
                let members = &path[pos..];
                if members.iter().all(|m| !reported.contains(m)) {
                    let first = members
                        .iter()
                        .enumerate()
                        .min_by_key(|(_, m)| order.get(**m).copied().unwrap_or(usize::MAX))
                        .map(|(i, _)| i)
                        .unwrap_or(0);
                    let mut rotated: Vec<String> = members[first..]
                        .iter()
                        .chain(&members[..first])
                        .map(|m| m.to_string())
                        .collect();
                    rotated.push(rotated[0].clone());
                    reported.extend(members.iter().copied());
                    cycles.push(rotated);
                }
                break;
            }
            if path.len() > nodes.len() {
                break;
            }
            path.push(next);
            current = next;
        }
    }
    cycles
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("event graph contains a cycle")]
pub struct CycleError;

/// One scheduled session: the event plus the edge that leads into it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScheduledEvent {
    pub node: EventNode,
    pub incoming: Option<CausalEdge>,
}

/// Topological order of the graph, earliest date first, ties broken by the
/// order the events were emitted in.
pub fn linearize_sessions(graph: &EventGraph) -> Result<Vec<ScheduledEvent>, CycleError> {
    let index: HashMap<&str, usize> = graph
        .nodes
        .iter()
        .enumerate()
        .rev()
        .map(|(i, n)| (n.id.as_str(), i))
        .collect();
    let n = graph.nodes.len();
    let mut indegree = vec![0usize; n];
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, node) in graph.nodes.iter().enumerate() {
        if let Some(parent) = node
            .caused_by
            .as_ref()
            .and_then(|e| index.get(e.parent_id.as_str()))
        {
            indegree[i] += 1;
            children[*parent].push(i);
        }
    }
    let mut ready: BinaryHeap<Reverse<(NaiveDate, usize)>> = indegree
        .iter()
        .enumerate()
        .filter(|(_, d)| **d == 0)
        .map(|(i, _)| Reverse((graph.nodes[i].date, i)))
        .collect();
    let mut out = Vec::with_capacity(n);
    while let Some(Reverse((_, i))) = ready.pop() {
        let node = &graph.nodes[i];
        out.push(ScheduledEvent {
            node: node.clone(),
            incoming: node.caused_by.clone(),
        });
        for &child in &children[i] {
            indegree[child] -= 1;
            if indegree[child] == 0 {
                ready.push(Reverse((graph.nodes[child].date, child)));
            }
        }
    }
    if out.len() == n {
        Ok(out)
    } else {
        Err(CycleError)
    }
}

/// Failure to obtain a valid graph from the model.
#[derive(Debug, Error)]
pub enum GraphGenError {
    #[error(transparent)]
    Extract(#[from] crate::extract::ExtractError),
    #[error("generated graph failed validation: {0:?}")]
    ValidationFailed(ValidationReport),
    #[error(transparent)]
    Gateway(#[from] crate::gateway::GatewayError),
}

impl From<crate::gateway::GenerationError<GraphGenError>> for GraphGenError {
    fn from(err: crate::gateway::GenerationError<GraphGenError>) -> Self {
        match err {
            crate::gateway::GenerationError::Gateway(e) => GraphGenError::Gateway(e),
            crate::gateway::GenerationError::Rejected(e) => e,
        }
    }
}

/// Requests a graph for `name` seeded by `initial_event`; one regeneration is
/// attempted when the first completion fails to parse or validate.
pub fn generate_event_graph(
    gateway: &crate::gateway::Gateway,
    name: &str,
    initial_event: &str,
    rules: &GraphRules,
) -> Result<EventGraph, GraphGenError> {
    let request = crate::prompts::event_graph_request(name, initial_event);
    let (graph, _) = gateway.complete_parsed(&request, |text| {
        let raw = crate::extract::parse_raw_event_graph(text)?;
        let report = validate_event_graph(&raw, rules);
        if !report.is_empty() {
            return Err(GraphGenError::ValidationFailed(report));
        }
        EventGraph::from_raw(&raw).map_err(|e| {
            let mut report = ValidationReport::default();
            report.push(GraphViolation::BadDateFormat, None, e.to_string());
            GraphGenError::ValidationFailed(report)
        })
    })?;
    Ok(graph)
}
