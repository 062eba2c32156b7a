//! Multi-session dialogue with image-sharing moments, and rolling summaries.

use std::collections::HashMap;
use std::fmt;

use chrono::NaiveDate;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;
use thiserror::Error;

use crate::aligner::AlignedImage;
use crate::device::DeviceImageDesc;
use crate::event_graph::{date_format, format_date, Report, ScheduledEvent, TimeInterval, TimeUnit};
use crate::extract::{parse_session, ExtractError};
use crate::gateway::{Gateway, GatewayError, GenerationError};
use crate::prompts::{self, NthRound, ProfileFields};

pub const SHARING_KEYS: [&str; 5] = [
    "rationale",
    "image_description",
    "image_source",
    "keywords",
    "image_id_from_mobile",
];
pub const NEW_ADDED_IMAGE: &str = "new added image";
pub const MIN_TURNS: usize = 4;
pub const DEFAULT_MIN_SHARING: usize = 1;
pub const SOURCE_INTERNET: &str = "internet";
pub const SOURCE_MOBILE: &str = "mobile";
/// Category given to device images added during a conversation.
pub const ADDED_CATEGORY: &str = "added in conversation";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    User,
    Assistant,
}

impl Speaker {
    /// Any label mentioning the assistant maps to [`Speaker::Assistant`];
    /// everything else (usually the user's name) to [`Speaker::User`].
    pub fn from_label(label: &str) -> Self {
        let lower = label.to_lowercase();
        if lower.contains("assistant") || lower.trim() == "ai" {
            Speaker::Assistant
        } else {
            Speaker::User
        }
    }
}

/// Value of `image_id_from_mobile`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MobileImageId {
    Index(u32),
    NewAdded,
    Other(String),
}

impl MobileImageId {
    fn from_text(text: &str) -> Option<Self> {
        let t = text.trim();
        let lower = t.to_lowercase();
        if t.is_empty() || matches!(lower.as_str(), "none" | "n/a" | "null") {
            return None;
        }
        if lower == NEW_ADDED_IMAGE {
            return Some(MobileImageId::NewAdded);
        }
        Some(match t.parse::<u32>() {
            Ok(i) => MobileImageId::Index(i),
            Err(_) => MobileImageId::Other(t.to_string()),
        })
    }
}

impl fmt::Display for MobileImageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MobileImageId::Index(i) => write!(f, "{i}"),
            MobileImageId::NewAdded => f.write_str(NEW_ADDED_IMAGE),
            MobileImageId::Other(s) => f.write_str(s),
        }
    }
}

impl Serialize for MobileImageId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            MobileImageId::Index(i) => serializer.serialize_u32(*i),
            other => serializer.collect_str(other),
        }
    }
}

fn mobile_id<'de, D: Deserializer<'de>>(deserializer: D) -> Result<Option<MobileImageId>, D::Error> {
    Ok(match Value::deserialize(deserializer)? {
        Value::Null => None,
        Value::Number(n) => match n.as_u64().and_then(|v| u32::try_from(v).ok()) {
            Some(i) => Some(MobileImageId::Index(i)),
            None => Some(MobileImageId::Other(n.to_string())),
        },
        Value::String(s) => MobileImageId::from_text(&s),
        other => return Err(D::Error::custom(format!("unexpected image id {other}"))),
    })
}

/// Keywords arrive as a list or as one comma-separated string.
fn keywords<'de, D: Deserializer<'de>>(deserializer: D) -> Result<Option<Vec<String>>, D::Error> {
    Ok(match Value::deserialize(deserializer)? {
        Value::Null => None,
        Value::String(s) => Some(
            s.split(',')
                .map(|k| k.trim().to_string())
                .filter(|k| !k.is_empty())
                .collect(),
        ),
        Value::Array(items) => Some(
            items
                .into_iter()
                .map(|v| match v {
                    Value::String(s) => Ok(s.trim().to_string()),
                    other => Err(D::Error::custom(format!("keyword must be a string, got {other}"))),
                })
                .collect::<Result<_, _>>()?,
        ),
        other => return Err(D::Error::custom(format!("unexpected keywords {other}"))),
    })
}

fn text<'de, D: Deserializer<'de>>(deserializer: D) -> Result<Option<String>, D::Error> {
    Ok(Option::<String>::deserialize(deserializer)?.filter(|s| !s.trim().is_empty()))
}

/// Image-sharing moment. All fields absent means the turn shares nothing.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SharingInfo {
    #[serde(default, deserialize_with = "text", skip_serializing_if = "Option::is_none")]
    pub rationale: Option<String>,
    #[serde(default, deserialize_with = "text", skip_serializing_if = "Option::is_none")]
    pub image_description: Option<String>,
    /// Kept as written so an invalid source can be reported.
    #[serde(default, deserialize_with = "text", skip_serializing_if = "Option::is_none")]
    pub image_source: Option<String>,
    #[serde(default, deserialize_with = "keywords", skip_serializing_if = "Option::is_none")]
    pub keywords: Option<Vec<String>>,
    #[serde(default, deserialize_with = "mobile_id", skip_serializing_if = "Option::is_none")]
    pub image_id_from_mobile: Option<MobileImageId>,
}

impl SharingInfo {
    pub fn is_sharing(&self) -> bool {
        self.rationale.is_some()
            || self.image_description.is_some()
            || self.image_source.is_some()
            || self.keywords.is_some()
            || self.image_id_from_mobile.is_some()
    }

    pub fn source(&self) -> Option<String> {
        self.image_source.as_ref().map(|s| s.trim().to_lowercase())
    }

    pub fn is_mobile(&self) -> bool {
        self.source().as_deref() == Some(SOURCE_MOBILE)
    }

    pub fn is_internet(&self) -> bool {
        self.source().as_deref() == Some(SOURCE_INTERNET)
    }
}

/// How a sharing turn's image was realized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ImageResolution {
    /// Refers to the episode's device image with this index.
    Device { index: u32 },
    Aligned { image: AlignedImage },
    Unresolved { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub utterance_id: String,
    pub speaker: Speaker,
    pub utterance: String,
    pub sharing_info: SharingInfo,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<ImageResolution>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionFlag {
    /// Fewer than the minimum number of turns even after regeneration.
    FewTurns,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub round_index: u32,
    #[serde(with = "date_format")]
    pub date: NaiveDate,
    pub event: String,
    pub incoming_interval: Option<TimeInterval>,
    pub experience: Option<String>,
    pub turns: Vec<Utterance>,
    pub summary: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<SessionFlag>,
}

impl Session {
    pub fn sharing_turns(&self) -> impl Iterator<Item = &Utterance> {
        self.turns.iter().filter(|t| t.sharing_info.is_sharing())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DialogueViolation {
    BadSource,
    BadMobileIndex,
    NonEmptySharingUtterance,
    MissingSharingKeys,
    SharingCountBelowMin,
}

pub type DialogueReport = Report<DialogueViolation>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueRules {
    pub min_sharing: usize,
}

impl Default for DialogueRules {
    fn default() -> Self {
        Self {
            min_sharing: DEFAULT_MIN_SHARING,
        }
    }
}

/// Checks the turn list of one session against the device images known at
/// that point (the generated five plus any added earlier).
pub fn validate_turns(turns: &[Utterance], device_images: &[DeviceImageDesc], rules: &DialogueRules) -> DialogueReport {
    let mut report = DialogueReport::default();
    let mut sharing = 0;
    for turn in turns {
        let info = &turn.sharing_info;
        if !info.is_sharing() {
            continue;
        }
        sharing += 1;
        let id = Some(turn.utterance_id.as_str());
        if !turn.utterance.trim().is_empty() {
            report.push(
                DialogueViolation::NonEmptySharingUtterance,
                id,
                "sharing turn carries utterance text",
            );
        }
        let source = info.source();
        match source.as_deref() {
            Some(SOURCE_INTERNET) | Some(SOURCE_MOBILE) => {}
            Some(other) => report.push(DialogueViolation::BadSource, id, format!("image_source `{other}`")),
            None => {}
        }
        let mut missing: Vec<&str> = Vec::new();
        if info.rationale.is_none() {
            missing.push("rationale");
        }
        if info.image_description.is_none() {
            missing.push("image_description");
        }
        if info.image_source.is_none() {
            missing.push("image_source");
        }
        if info.keywords.as_ref().is_none_or(|k| k.is_empty()) {
            missing.push("keywords");
        }
        if info.is_mobile() {
            match &info.image_id_from_mobile {
                None => missing.push("image_id_from_mobile"),
                Some(MobileImageId::NewAdded) => {}
                Some(MobileImageId::Index(i)) if device_images.iter().any(|d| d.index == *i) => {}
                Some(other) => report.push(
                    DialogueViolation::BadMobileIndex,
                    id,
                    format!("image_id_from_mobile `{other}` matches no device image"),
                ),
            }
        }
        if !missing.is_empty() {
            report.push(
                DialogueViolation::MissingSharingKeys,
                id,
                format!("missing {}", missing.join(", ")),
            );
        }
    }
    if sharing < rules.min_sharing {
        report.push(
            DialogueViolation::SharingCountBelowMin,
            None,
            format!("{sharing} sharing turn(s), need {}", rules.min_sharing),
        );
    }
    report
}

pub fn validate_session(session: &Session, device_images: &[DeviceImageDesc], rules: &DialogueRules) -> DialogueReport {
    validate_turns(&session.turns, device_images, rules)
}

#[derive(Debug, Error)]
pub enum DialogueError {
    #[error("no image-sharing turn after regeneration")]
    NoSharingTurn,
    #[error("session rejected: {0:?}")]
    Invalid(Vec<DialogueViolation>),
    #[error(transparent)]
    Extract(#[from] ExtractError),
    #[error("empty dialogue")]
    EmptyDialogue,
    #[error("summary repeats itself")]
    RepetitiveSummary,
    #[error("n-th round summary needs the previous summary, interval and date")]
    MissingPrevious,
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

impl From<GenerationError<DialogueError>> for DialogueError {
    fn from(err: GenerationError<DialogueError>) -> Self {
        match err {
            GenerationError::Gateway(e) => DialogueError::Gateway(e),
            GenerationError::Rejected(e) => e,
        }
    }
}

/// Everything one dialogue round is conditioned on.
#[derive(Debug, Clone)]
pub struct SessionContext<'a> {
    pub profile: ProfileFields<'a>,
    pub device_images: &'a [DeviceImageDesc],
    pub item: &'a ScheduledEvent,
    pub round_index: u32,
    /// (date, event) of every earlier round, oldest first.
    pub history: &'a [(String, String)],
    pub last_date: Option<NaiveDate>,
}

/// Interval shown to the n-th round prompt: the causal edge's interval, or
/// the day gap to the previous session when the event has no parent.
pub fn shown_interval(item: &ScheduledEvent, last_date: NaiveDate) -> TimeInterval {
    match &item.incoming {
        Some(edge) => edge.time_interval,
        None => {
            let days = (item.node.date - last_date).num_days().max(0);
            TimeInterval::new(u32::try_from(days).unwrap_or(u32::MAX), TimeUnit::Day)
        }
    }
}

pub fn session_request(ctx: &SessionContext<'_>) -> crate::gateway::ChatRequest {
    let listing = prompts::device_listing(ctx.device_images.iter().map(|d| (d.index, d.description.as_str())));
    let date = format_date(ctx.item.node.date);
    match (ctx.round_index, ctx.last_date) {
        (1, _) | (_, None) => prompts::dialogue_first_request(&ctx.profile, &listing, &date, &ctx.item.node.event),
        (_, Some(last)) => {
            let history = prompts::event_history(ctx.history.iter().map(|(d, e)| (d.as_str(), e.as_str())));
            let interval = shown_interval(ctx.item, last).to_string();
            let last_date = format_date(last);
            let experience = ctx
                .item
                .incoming
                .as_ref()
                .map(|e| e.experience.as_str())
                .unwrap_or("");
            prompts::dialogue_nth_request(
                &ctx.profile,
                &listing,
                &NthRound {
                    event_history: &history,
                    time_interval: &interval,
                    last_date: &last_date,
                    date: &date,
                    experience,
                    event: &ctx.item.node.event,
                },
            )
        }
    }
}

fn accept_turns(text: &str, ctx: &SessionContext<'_>, rules: &DialogueRules) -> Result<Vec<Utterance>, DialogueError> {
    let turns = parse_session(text)?;
    let report = validate_turns(&turns, ctx.device_images, rules);
    if report.is_empty() {
        return Ok(turns);
    }
    if report.kinds() == [DialogueViolation::SharingCountBelowMin] {
        return Err(DialogueError::NoSharingTurn);
    }
    Err(DialogueError::Invalid(report.kinds()))
}

/// Generates one round. Invalid turn lists are regenerated once; a session
/// still shorter than [`MIN_TURNS`] after one more regeneration is kept and
/// flagged.
pub fn generate_session(gateway: &Gateway, ctx: &SessionContext<'_>, rules: &DialogueRules) -> Result<Session, DialogueError> {
    let request = session_request(ctx);
    let (mut turns, _) = gateway.complete_parsed(&request, |text| accept_turns(text, ctx, rules))?;
    let mut flags = Vec::new();
    if turns.len() < MIN_TURNS {
        match gateway.complete_parsed(&request, |text| accept_turns(text, ctx, rules)) {
            Ok((retry, _)) if retry.len() >= MIN_TURNS => turns = retry,
            _ => flags.push(SessionFlag::FewTurns),
        }
    }
    Ok(Session {
        round_index: ctx.round_index,
        date: ctx.item.node.date,
        event: ctx.item.node.event.clone(),
        incoming_interval: ctx.item.incoming.as_ref().map(|e| e.time_interval),
        experience: ctx.item.incoming.as_ref().map(|e| e.experience.clone()),
        turns,
        summary: None,
        flags,
    })
}

/// Appends a device image for every `new added image` turn, numbering from
/// the next free index, and points the turn at it.
pub fn attach_new_images(session: &mut Session, device_images: &mut Vec<DeviceImageDesc>) -> usize {
    let mut added = 0;
    for turn in &mut session.turns {
        let info = &turn.sharing_info;
        if !(info.is_mobile() && info.image_id_from_mobile == Some(MobileImageId::NewAdded)) {
            continue;
        }
        let index = device_images.iter().map(|d| d.index).max().unwrap_or(0) + 1;
        device_images.push(DeviceImageDesc {
            index,
            description: info.image_description.clone().unwrap_or_default(),
            categories: vec![ADDED_CATEGORY.to_string()],
            aligned_image: None,
        });
        turn.image = Some(ImageResolution::Device { index });
        added += 1;
    }
    added
}

/// Plain-text transcript fed to the summarizer.
pub fn dialogue_text(turns: &[Utterance], user_name: &str) -> String {
    turns
        .iter()
        .map(|t| {
            let speaker = match t.speaker {
                Speaker::User => user_name,
                Speaker::Assistant => "AI Assistant",
            };
            match &t.sharing_info.image_description {
                Some(desc) if t.sharing_info.is_sharing() => format!("{speaker}: [Sharing Image] {desc}"),
                _ => format!("{speaker}: {}", t.utterance),
            }
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Highest number of occurrences of any run of `n` consecutive words.
pub fn max_shingle_repeats(text: &str, n: usize) -> usize {
    let words: Vec<String> = text
        .split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|w| !w.is_empty())
        .collect();
    if n == 0 || words.len() < n {
        return 0;
    }
    let mut counts: HashMap<&[String], usize> = HashMap::new();
    for window in words.windows(n) {
        *counts.entry(window).or_default() += 1;
    }
    counts.values().copied().max().unwrap_or(0)
}

pub const SHINGLE_WORDS: usize = 8;
pub const MAX_SHINGLE_REPEATS: usize = 2;

/// Context a later-round summary continues from.
#[derive(Debug, Clone, Copy)]
pub struct PreviousSummary<'a> {
    pub summary: &'a str,
    pub time_interval: &'a str,
    pub last_date: &'a str,
}

pub fn summarize_session(
    gateway: &Gateway,
    name: &str,
    date: &str,
    dialogue: &str,
    previous: Option<PreviousSummary<'_>>,
) -> Result<String, DialogueError> {
    if dialogue.trim().is_empty() {
        return Err(DialogueError::EmptyDialogue);
    }
    let request = match previous {
        None => prompts::summary_first_request(name, date, dialogue),
        Some(prev) => {
            if prev.summary.trim().is_empty() || prev.time_interval.trim().is_empty() || prev.last_date.trim().is_empty() {
                return Err(DialogueError::MissingPrevious);
            }
            prompts::summary_nth_request(name, date, dialogue, prev.summary, prev.time_interval, prev.last_date)
        }
    };
    let (summary, _) = gateway.complete_parsed(&request, |text| {
        if max_shingle_repeats(text, SHINGLE_WORDS) > MAX_SHINGLE_REPEATS {
            Err(DialogueError::RepetitiveSummary)
        } else {
            Ok(text.trim().to_string())
        }
    })?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event_graph::{parse_date, CausalEdge, EventNode, ExperienceOp};
    use crate::gateway::{MockChatBackend, StepId};
    use std::sync::Arc;

    fn devices() -> Vec<DeviceImageDesc> {
        (1..=5)
            .map(|index| DeviceImageDesc {
                index,
                description: format!("photo {index}"),
                categories: vec!["Selfie".into()],
                aligned_image: None,
            })
            .collect()
    }

    fn sharing_turn(id: &str, info: serde_json::Value, utterance: &str) -> Utterance {
        Utterance {
            utterance_id: id.into(),
            speaker: Speaker::User,
            utterance: utterance.into(),
            sharing_info: serde_json::from_value(info).unwrap(),
            image: None,
        }
    }

    fn full_mobile(index: serde_json::Value) -> serde_json::Value {
        serde_json::json!({"rationale": "r", "image_description": "d", "image_source": "mobile", "keywords": ["k"], "image_id_from_mobile": index})
    }

    #[test]
    fn valid_device_reference() {
        let turns = vec![sharing_turn("1", full_mobile(2.into()), "")];
        assert!(validate_turns(&turns, &devices(), &DialogueRules::default()).is_empty());
    }

    #[test]
    fn violation_classes() {
        let rules = DialogueRules::default();
        let disk = serde_json::json!({"rationale": "r", "image_description": "d", "image_source": "disk", "keywords": ["k"]});
        let report = validate_turns(&[sharing_turn("1", disk, "")], &devices(), &rules);
        assert_eq!(report.kinds(), [DialogueViolation::BadSource]);

        let report = validate_turns(&[sharing_turn("1", full_mobile(7.into()), "")], &devices(), &rules);
        assert_eq!(report.kinds(), [DialogueViolation::BadMobileIndex]);

        let report = validate_turns(&[sharing_turn("1", full_mobile(1.into()), "look!")], &devices(), &rules);
        assert_eq!(report.kinds(), [DialogueViolation::NonEmptySharingUtterance]);

        let partial = serde_json::json!({"image_description": "d", "image_source": "internet"});
        let report = validate_turns(&[sharing_turn("1", partial, "")], &devices(), &rules);
        assert_eq!(report.kinds(), [DialogueViolation::MissingSharingKeys]);

        let plain = sharing_turn("1", serde_json::json!({}), "hello");
        let report = validate_turns(&[plain], &devices(), &rules);
        assert_eq!(report.kinds(), [DialogueViolation::SharingCountBelowMin]);
    }

    #[test]
    fn new_added_images_extend_the_device_list() {
        let mut session = Session {
            round_index: 1,
            date: parse_date("2023.01.01").unwrap(),
            event: "e".into(),
            incoming_interval: None,
            experience: None,
            turns: vec![sharing_turn("1", full_mobile("new added image".into()), "")],
            summary: None,
            flags: vec![],
        };
        let mut images = devices();
        assert!(validate_session(&session, &images, &DialogueRules::default()).is_empty());
        assert_eq!(attach_new_images(&mut session, &mut images), 1);
        assert_eq!(images.last().unwrap().index, 6);
        assert_eq!(session.turns[0].image, Some(ImageResolution::Device { index: 6 }));
    }

    #[test]
    fn sharing_info_serializes_empty_as_object() {
        let turn = sharing_turn("1", serde_json::json!({}), "hi");
        let json = serde_json::to_string(&turn).unwrap();
        assert!(json.contains(r#""sharing_info":{}"#));
        let back: Utterance = serde_json::from_str(&json).unwrap();
        assert_eq!(back, turn);
    }

    fn scheduled(date: &str, incoming: Option<CausalEdge>) -> ScheduledEvent {
        ScheduledEvent {
            node: EventNode {
                id: "2".into(),
                event: "Tom joins a league.".into(),
                date: parse_date(date).unwrap(),
                caused_by: incoming.clone(),
            },
            incoming,
        }
    }

    fn profile() -> ProfileFields<'static> {
        ProfileFields {
            name: "Tom",
            age: 32,
            gender: "male",
            birthplace: "United States of America",
            residence: "United States of America",
        }
    }

    #[test]
    fn prompts_by_round() {
        let images = devices();
        let item = scheduled("2023.02.01", None);
        let first = session_request(&SessionContext {
            profile: profile(),
            device_images: &images,
            item: &item,
            round_index: 1,
            history: &[],
            last_date: None,
        });
        assert!(first
            .instruction
            .contains("The topic of the conversation between the AI assistant and Tom on 2023.02.01 today"));
        let edge = CausalEdge {
            parent_id: "1".into(),
            time_interval: "2 week".parse().unwrap(),
            experience_op: ExperienceOp::Add,
            experience: "Tom practiced daily.".into(),
        };
        let item = scheduled("2023.02.01", Some(edge));
        let history = vec![("2023.01.18".to_string(), "Tom buys shoes.".to_string())];
        let nth = session_request(&SessionContext {
            profile: profile(),
            device_images: &images,
            item: &item,
            round_index: 3,
            history: &history,
            last_date: parse_date("2023.01.18"),
        });
        assert!(nth.instruction.contains("2 week later from the 2023.01.18, on 2023.02.01 today"));
        assert!(nth.instruction.contains("- 2023.01.18: Tom buys shoes."));
    }

    #[test]
    fn scripted_session_flags_few_turns() {
        let script = r#"[{"utterance_id": "1", "speaker": "Tom", "utterance": "", "sharing_info": {"rationale": "r", "image_description": "d", "image_source": "mobile", "keywords": ["k"], "image_id_from_mobile": 2}}]"#;
        let gw = Gateway::new(Arc::new(MockChatBackend::new().script(StepId::Dialogue, "*", script)));
        let images = devices();
        let item = scheduled("2023.02.01", None);
        let ctx = SessionContext {
            profile: profile(),
            device_images: &images,
            item: &item,
            round_index: 1,
            history: &[],
            last_date: None,
        };
        let session = generate_session(&gw, &ctx, &DialogueRules::default()).unwrap();
        assert_eq!(session.flags, [SessionFlag::FewTurns]);
        assert_eq!(session.turns.len(), 1);
    }

    #[test]
    fn no_sharing_turn_is_an_error() {
        let script = r#"[{"utterance_id": "1", "speaker": "Tom", "utterance": "hi", "sharing_info": {}}]"#;
        let gw = Gateway::new(Arc::new(MockChatBackend::new().script(StepId::Dialogue, "*", script)));
        let images = devices();
        let item = scheduled("2023.02.01", None);
        let ctx = SessionContext {
            profile: profile(),
            device_images: &images,
            item: &item,
            round_index: 1,
            history: &[],
            last_date: None,
        };
        assert!(matches!(
            generate_session(&gw, &ctx, &DialogueRules::default()),
            Err(DialogueError::NoSharingTurn)
        ));
    }

    #[test]
    fn summaries() {
        let gw = Gateway::new(Arc::new(MockChatBackend::new().script(StepId::Summary, "*", "Tom talked about basketball.")));
        assert!(matches!(
            summarize_session(&gw, "Tom", "2023.01.01", "  ", None),
            Err(DialogueError::EmptyDialogue)
        ));
        assert_eq!(
            summarize_session(&gw, "Tom", "2023.01.01", "Tom: hi", None).unwrap(),
            "Tom talked about basketball."
        );
        let repetitive = "we talked about the game and the team today. ".repeat(3);
        let gw = Gateway::new(Arc::new(MockChatBackend::new().script(StepId::Summary, "*", repetitive)));
        assert!(matches!(
            summarize_session(&gw, "Tom", "2023.01.01", "Tom: hi", None),
            Err(DialogueError::RepetitiveSummary)
        ));
    }

    #[test]
    fn shingles() {
        assert_eq!(max_shingle_repeats("a b c", 8), 0);
        assert_eq!(max_shingle_repeats(&"one two three four five six seven eight ".repeat(3), 8), 3);
    }
}
