//! Post-generation filtering.
//!
//! Gates run in a fixed order: session count, persona dedup, text safety,
//! image safety, image-text alignment and unresolved sharing turns. By
//! default the chain stops at the first failing gate; with `full_report`
//! every gate runs and every reason is recorded.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use base64::Engine as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aligner::AlignedImage;
use crate::artifacts::ArtifactStore;
use crate::dialogue::ImageResolution;
use crate::profile::dedup_personas;
use crate::retrieval::{cosine, Embedder, HashEmbedder};
use crate::store::Episode;
use crate::sync::Semaphore;

pub const DEFAULT_ALIGNMENT_THRESHOLD: f64 = 0.2;
pub const DEFAULT_MIN_SESSIONS: usize = 4;
pub const DEFAULT_MAX_SESSIONS: usize = 6;
pub const DEFAULT_MIN_PERSONAS: usize = 3;
pub const DEFAULT_HOOK_CONCURRENCY: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FilterReason {
    SessionCount,
    DuplicatePersona,
    SafetyFlag,
    NSFWFlag,
    UnalignedImage,
    UnresolvedImage,
}

impl FilterReason {
    pub const ALL: [FilterReason; 6] = [
        FilterReason::SessionCount,
        FilterReason::DuplicatePersona,
        FilterReason::SafetyFlag,
        FilterReason::NSFWFlag,
        FilterReason::UnalignedImage,
        FilterReason::UnresolvedImage,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterDecision {
    /// True exactly when `reasons` is empty.
    pub kept: bool,
    pub reasons: Vec<FilterReason>,
    /// Problems that did not drop the episode (unaligned images outside
    /// strict mode).
    pub flags: Vec<FilterReason>,
    /// Persona attributes removed as duplicates.
    pub deduplicated: usize,
}

impl FilterDecision {
    fn new() -> Self {
        Self {
            kept: true,
            reasons: Vec::new(),
            flags: Vec::new(),
            deduplicated: 0,
        }
    }

    fn drop_for(&mut self, reason: FilterReason) {
        if !self.reasons.contains(&reason) {
            self.reasons.push(reason);
        }
        self.kept = false;
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum FilterError {
    /// A configured classifier could not be reached. The episode is held,
    /// not dropped.
    #[error("{hook} hook unavailable: {detail}")]
    HookUnavailable { hook: &'static str, detail: String },
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("{0}")]
pub struct HookError(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub flag: bool,
    #[serde(default)]
    pub score: f64,
}

impl Verdict {
    pub const PASS: Verdict = Verdict { flag: false, score: 0.0 };

    /// Flagged by the classifier itself or by the configured score threshold.
    pub fn is_flagged(&self, threshold: Option<f64>) -> bool {
        self.flag || threshold.is_some_and(|t| self.score >= t)
    }
}

pub trait TextClassifier: Send + Sync {
    fn id(&self) -> String;
    fn classify(&self, text: &str) -> Result<Verdict, HookError>;
}

pub trait ImageClassifier: Send + Sync {
    fn id(&self) -> String;
    fn classify(&self, image: &[u8]) -> Result<Verdict, HookError>;
}

pub trait AlignmentScorer: Send + Sync {
    fn id(&self) -> String;
    fn score(&self, image: &AlignedImage, description: &str) -> Result<f64, HookError>;
}

/// One scripted verdict: applies when the text contains `match` (or, for
/// images, when the image's SHA-256 hex equals it). `*` matches everything.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HookScript {
    #[serde(rename = "match")]
    pub matcher: String,
    pub flag: bool,
    #[serde(default)]
    pub score: f64,
}

fn parse_scripts(text: &str) -> Result<Vec<HookScript>, HookError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| HookError(format!("script line {}: {e}", i + 1))))
        .collect()
}

/// Passes everything unless a script entry matches.
#[derive(Debug, Clone, Default)]
pub struct MockTextClassifier {
    scripts: Vec<HookScript>,
    unavailable: bool,
}

impl MockTextClassifier {
    pub fn pass() -> Self {
        Self::default()
    }

    pub fn unavailable() -> Self {
        Self {
            scripts: Vec::new(),
            unavailable: true,
        }
    }

    pub fn flag_containing(mut self, needle: impl Into<String>) -> Self {
        self.scripts.push(HookScript {
            matcher: needle.into(),
            flag: true,
            score: 1.0,
        });
        self
    }

    pub fn from_jsonl(text: &str) -> Result<Self, HookError> {
        Ok(Self {
            scripts: parse_scripts(text)?,
            unavailable: false,
        })
    }
}

impl TextClassifier for MockTextClassifier {
    fn id(&self) -> String {
        "mock-text-classifier".into()
    }

    fn classify(&self, text: &str) -> Result<Verdict, HookError> {
        if self.unavailable {
            return Err(HookError("mock classifier configured as unavailable".into()));
        }
        Ok(self
            .scripts
            .iter()
            .find(|s| s.matcher == "*" || text.contains(&s.matcher))
            .map(|s| Verdict {
                flag: s.flag,
                score: s.score,
            })
            .unwrap_or(Verdict::PASS))
    }
}

#[derive(Debug, Clone, Default)]
pub struct MockImageClassifier {
    scripts: Vec<HookScript>,
    unavailable: bool,
}

impl MockImageClassifier {
    pub fn pass() -> Self {
        Self::default()
    }

    pub fn unavailable() -> Self {
        Self {
            scripts: Vec::new(),
            unavailable: true,
        }
    }

    /// Flags the image whose SHA-256 hex digest is `digest`.
    pub fn flag_digest(mut self, digest: impl Into<String>) -> Self {
        self.scripts.push(HookScript {
            matcher: digest.into(),
            flag: true,
            score: 1.0,
        });
        self
    }

    pub fn from_jsonl(text: &str) -> Result<Self, HookError> {
        Ok(Self {
            scripts: parse_scripts(text)?,
            unavailable: false,
        })
    }
}

impl ImageClassifier for MockImageClassifier {
    fn id(&self) -> String {
        "mock-image-classifier".into()
    }

    fn classify(&self, image: &[u8]) -> Result<Verdict, HookError> {
        if self.unavailable {
            return Err(HookError("mock classifier configured as unavailable".into()));
        }
        let digest = crate::artifacts::ArtifactRef::of(image);
        Ok(self
            .scripts
            .iter()
            .find(|s| s.matcher == "*" || s.matcher == digest.as_str())
            .map(|s| Verdict {
                flag: s.flag,
                score: s.score,
            })
            .unwrap_or(Verdict::PASS))
    }
}

/// Cosine between hash embeddings of the description and of the image's
/// caption (or its provenance string when there is no caption).
pub struct MockAlignmentScorer {
    embedder: HashEmbedder,
}

impl MockAlignmentScorer {
    pub fn new(embedder: HashEmbedder) -> Self {
        Self { embedder }
    }
}

impl Default for MockAlignmentScorer {
    fn default() -> Self {
        Self::new(HashEmbedder::default())
    }
}

impl AlignmentScorer for MockAlignmentScorer {
    fn id(&self) -> String {
        format!("mock-scorer:{}", self.embedder.id())
    }

    fn score(&self, image: &AlignedImage, description: &str) -> Result<f64, HookError> {
        let text = image.caption.as_deref().unwrap_or(&image.provenance);
        Ok(cosine(&self.embedder.embed_one(description), &self.embedder.embed_one(text)))
    }
}

/// A scorer that is always down; stands in for a live scorer that is not
/// deployed.
pub struct UnavailableScorer;

impl AlignmentScorer for UnavailableScorer {
    fn id(&self) -> String {
        "unavailable".into()
    }

    fn score(&self, _: &AlignedImage, _: &str) -> Result<f64, HookError> {
        Err(HookError("no alignment scorer deployed".into()))
    }
}

/// HTTP classifier: POST `{"text": ...}` or `{"image": <base64>}`, reply
/// `{"flag": bool, "score": number}`.
pub struct HttpClassifier {
    endpoint: String,
    client: reqwest::blocking::Client,
}

impl HttpClassifier {
    pub fn new(endpoint: impl Into<String>) -> Result<Self, HookError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(60))
            .build()
            .map_err(|e| HookError(e.to_string()))?;
        Ok(Self {
            endpoint: endpoint.into(),
            client,
        })
    }

    fn post(&self, body: serde_json::Value) -> Result<Verdict, HookError> {
        let response = self
            .client
            .post(&self.endpoint)
            .json(&body)
            .send()
            .map_err(|e| HookError(e.to_string()))?;
        if !response.status().is_success() {
            return Err(HookError(format!("HTTP {}", response.status())));
        }
        response.json::<Verdict>().map_err(|e| HookError(e.to_string()))
    }
}

impl TextClassifier for HttpClassifier {
    fn id(&self) -> String {
        format!("http:{}", self.endpoint)
    }

    fn classify(&self, text: &str) -> Result<Verdict, HookError> {
        self.post(serde_json::json!({ "text": text }))
    }
}

impl ImageClassifier for HttpClassifier {
    fn id(&self) -> String {
        format!("http:{}", self.endpoint)
    }

    fn classify(&self, image: &[u8]) -> Result<Verdict, HookError> {
        self.post(serde_json::json!({ "image": base64::engine::general_purpose::STANDARD.encode(image) }))
    }
}

/// HTTP scorer: POST `{"text": description, "image": <base64>}`, reply
/// `{"score": number}`.
pub struct HttpAlignmentScorer {
    endpoint: String,
    artifacts: ArtifactStore,
    client: reqwest::blocking::Client,
}

impl HttpAlignmentScorer {
    pub fn new(endpoint: impl Into<String>, artifacts: ArtifactStore) -> Result<Self, HookError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(60))
            .build()
            .map_err(|e| HookError(e.to_string()))?;
        Ok(Self {
            endpoint: endpoint.into(),
            artifacts,
            client,
        })
    }
}

#[derive(Deserialize)]
struct ScoreReply {
    score: f64,
}

impl AlignmentScorer for HttpAlignmentScorer {
    fn id(&self) -> String {
        format!("http:{}", self.endpoint)
    }

    fn score(&self, image: &AlignedImage, description: &str) -> Result<f64, HookError> {
        let bytes = self.artifacts.get(&image.artifact_ref).map_err(|e| HookError(e.to_string()))?;
        let body = serde_json::json!({
            "text": description,
            "image": base64::engine::general_purpose::STANDARD.encode(bytes),
        });
        let response = self
            .client
            .post(&self.endpoint)
            .json(&body)
            .send()
            .map_err(|e| HookError(e.to_string()))?;
        if !response.status().is_success() {
            return Err(HookError(format!("HTTP {}", response.status())));
        }
        Ok(response.json::<ScoreReply>().map_err(|e| HookError(e.to_string()))?.score)
    }
}

/// Second chance for an image that scored below the threshold. Returns the
/// replacement, if any.
pub trait Realigner: Send + Sync {
    fn realign(&self, episode: &Episode, description: &str, failed: &AlignedImage) -> Option<AlignedImage>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterConfig {
    pub min_sessions: usize,
    pub max_sessions: usize,
    pub min_personas: usize,
    pub alignment_threshold: f64,
    /// Score at or above which the text classifier's verdict flags.
    pub safety_threshold: Option<f64>,
    pub nsfw_threshold: Option<f64>,
    /// Drop episodes with unaligned images instead of flagging them.
    pub strict: bool,
    /// Run every gate even after one has failed.
    pub full_report: bool,
    pub hook_concurrency: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            min_sessions: DEFAULT_MIN_SESSIONS,
            max_sessions: DEFAULT_MAX_SESSIONS,
            min_personas: DEFAULT_MIN_PERSONAS,
            alignment_threshold: DEFAULT_ALIGNMENT_THRESHOLD,
            safety_threshold: None,
            nsfw_threshold: None,
            strict: false,
            full_report: false,
            hook_concurrency: DEFAULT_HOOK_CONCURRENCY,
        }
    }
}

pub struct FilterChain {
    config: FilterConfig,
    text: Arc<dyn TextClassifier>,
    image: Arc<dyn ImageClassifier>,
    scorer: Arc<dyn AlignmentScorer>,
    artifacts: Option<ArtifactStore>,
    realigner: Option<Arc<dyn Realigner>>,
    limit: Semaphore,
}

impl FilterChain {
    /// A chain with constant-pass classifiers and the hash-embedding scorer.
    pub fn with_mocks(config: FilterConfig) -> Self {
        Self::new(
            config,
            Arc::new(MockTextClassifier::pass()),
            Arc::new(MockImageClassifier::pass()),
            Arc::new(MockAlignmentScorer::default()),
        )
    }

    pub fn new(
        config: FilterConfig,
        text: Arc<dyn TextClassifier>,
        image: Arc<dyn ImageClassifier>,
        scorer: Arc<dyn AlignmentScorer>,
    ) -> Self {
        let limit = Semaphore::new(config.hook_concurrency.max(1));
        Self {
            config,
            text,
            image,
            scorer,
            artifacts: None,
            realigner: None,
            limit,
        }
    }

    /// Image bytes for the NSFW hook come from here; without a store the
    /// image hook is skipped.
    pub fn with_artifacts(mut self, artifacts: ArtifactStore) -> Self {
        self.artifacts = Some(artifacts);
        self
    }

    pub fn with_realigner(mut self, realigner: Arc<dyn Realigner>) -> Self {
        self.realigner = Some(realigner);
        self
    }

    pub fn config(&self) -> &FilterConfig {
        &self.config
    }

    pub fn hook_ids(&self) -> BTreeMap<String, String> {
        BTreeMap::from([
            ("safety".to_string(), self.text.id()),
            ("nsfw".to_string(), self.image.id()),
            ("scorer".to_string(), self.scorer.id()),
        ])
    }

    fn unavailable(hook: &'static str, e: HookError) -> FilterError {
        FilterError::HookUnavailable { hook, detail: e.0 }
    }

    /// Applies every gate to `episode`. Duplicate persona attributes are
    /// removed in place and alignment scores are written onto the images.
    pub fn filter_episode(&self, episode: &mut Episode) -> Result<FilterDecision, FilterError> {
        let mut decision = FilterDecision::new();
        let cfg = &self.config;
        let stop = |d: &FilterDecision| !d.kept && !cfg.full_report;

        let sessions = episode.sessions.len();
        if sessions < cfg.min_sessions || sessions > cfg.max_sessions {
            decision.drop_for(FilterReason::SessionCount);
        }
        if stop(&decision) {
            return Ok(decision);
        }

        decision.deduplicated = dedup_personas(&mut episode.persona_attributes);
        if decision.deduplicated > 0 {
            tracing::info!(episode = %episode.episode_id, removed = decision.deduplicated, "duplicate persona attributes removed");
        }
        if episode.persona_attributes.len() < cfg.min_personas {
            decision.drop_for(FilterReason::DuplicatePersona);
        }
        if stop(&decision) {
            return Ok(decision);
        }

        for turn in episode.sessions.iter().flat_map(|s| &s.turns) {
            if turn.utterance.trim().is_empty() {
                continue;
            }
            let verdict = {
                let _permit = self.limit.acquire();
                self.text.classify(&turn.utterance)
            }
            .map_err(|e| Self::unavailable("safety", e))?;
            if verdict.is_flagged(cfg.safety_threshold) {
                decision.drop_for(FilterReason::SafetyFlag);
                break;
            }
        }
        if stop(&decision) {
            return Ok(decision);
        }

        if let Some(artifacts) = &self.artifacts {
            let refs: Vec<_> = crate::store::image_refs(episode).cloned().collect();
            for r in refs {
                let bytes = match artifacts.get(&r) {
                    Ok(b) => b,
                    Err(e) => {
                        tracing::warn!(artifact = %r, error = %e, "image artifact unreadable");
                        decision.drop_for(FilterReason::UnresolvedImage);
                        continue;
                    }
                };
                let verdict = {
                    let _permit = self.limit.acquire();
                    self.image.classify(&bytes)
                }
                .map_err(|e| Self::unavailable("nsfw", e))?;
                if verdict.is_flagged(cfg.nsfw_threshold) {
                    decision.drop_for(FilterReason::NSFWFlag);
                    break;
                }
            }
        }
        if stop(&decision) {
            return Ok(decision);
        }

        if self.alignment_gate(episode)? {
            if cfg.strict {
                decision.drop_for(FilterReason::UnalignedImage);
            } else {
                decision.flags.push(FilterReason::UnalignedImage);
            }
        }
        if stop(&decision) {
            return Ok(decision);
        }

        let unresolved = episode
            .sessions
            .iter()
            .flat_map(|s| s.sharing_turns())
            .any(|t| matches!(t.image, None | Some(ImageResolution::Unresolved { .. })));
        if unresolved {
            decision.drop_for(FilterReason::UnresolvedImage);
        }
        Ok(decision)
    }

    fn score(&self, image: &AlignedImage, description: &str) -> Result<f64, FilterError> {
        let _permit = self.limit.acquire();
        self.scorer.score(image, description).map_err(|e| Self::unavailable("scorer", e))
    }

    /// Scores every aligned image, gives each low scorer one realignment, and
    /// reports whether any image is still below the threshold.
    fn alignment_gate(&self, episode: &mut Episode) -> Result<bool, FilterError> {
        let threshold = self.config.alignment_threshold;
        let mut targets: Vec<(ImageSlot, String, AlignedImage)> = Vec::new();
        for (i, d) in episode.device_images.iter().enumerate() {
            if let Some(img) = &d.aligned_image {
                targets.push((ImageSlot::Device(i), d.description.clone(), img.clone()));
            }
        }
        for (si, s) in episode.sessions.iter().enumerate() {
            for (ti, t) in s.turns.iter().enumerate() {
                if let Some(ImageResolution::Aligned { image }) = &t.image {
                    let desc = t.sharing_info.image_description.clone().unwrap_or_default();
                    targets.push((ImageSlot::Turn(si, ti), desc, image.clone()));
                }
            }
        }
        let mut unaligned = false;
        for (slot, description, mut image) in targets {
            let mut score = self.score(&image, &description)?;
            if score < threshold {
                if let Some(replacement) = self.realigner.as_ref().and_then(|r| r.realign(episode, &description, &image)) {
                    let second = self.score(&replacement, &description)?;
                    if second > score {
                        image = replacement;
                        score = second;
                    }
                }
            }
            image.score = Some(score);
            if score < threshold {
                unaligned = true;
            }
            match slot {
                ImageSlot::Device(i) => episode.device_images[i].aligned_image = Some(image),
                ImageSlot::Turn(si, ti) => {
                    episode.sessions[si].turns[ti].image = Some(ImageResolution::Aligned { image })
                }
            }
        }
        Ok(unaligned)
    }
}

enum ImageSlot {
    Device(usize),
    Turn(usize, usize),
}

/// Count of each drop reason across decisions.
pub fn tally<'a>(decisions: impl IntoIterator<Item = &'a FilterDecision>) -> BTreeMap<FilterReason, usize> {
    let mut counts = BTreeMap::new();
    for d in decisions {
        for r in &d.reasons {
            *counts.entry(*r).or_insert(0) += 1;
        }
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aligner::PlanKind;
    use crate::artifacts::ArtifactRef;

    fn image(caption: &str) -> AlignedImage {
        AlignedImage {
            artifact_ref: ArtifactRef::of(caption.as_bytes()),
            source: PlanKind::Retrieval,
            provenance: "corpus:test/1".into(),
            score: None,
            caption: Some(caption.into()),
        }
    }

    #[test]
    fn identical_caption_scores_one() {
        let scorer = MockAlignmentScorer::default();
        let d = "A photo of a golden retriever playing in the park";
        let s = scorer.score(&image(d), d).unwrap();
        assert!((s - 1.0).abs() < 1e-6, "{s}");
    }

    #[test]
    fn unrelated_pair_scores_below_default_threshold() {
        let scorer = MockAlignmentScorer::default();
        let s = scorer
            .score(
                &image("Screenshot of a spreadsheet with quarterly tax figures"),
                "A photo of a golden retriever playing in the park",
            )
            .unwrap();
        assert!(s < DEFAULT_ALIGNMENT_THRESHOLD, "{s}");
    }

    #[test]
    fn verdict_threshold() {
        let v = Verdict { flag: false, score: 0.7 };
        assert!(!v.is_flagged(None));
        assert!(v.is_flagged(Some(0.5)));
        assert!(!v.is_flagged(Some(0.8)));
    }

    #[test]
    fn scripted_text_classifier() {
        let c = MockTextClassifier::from_jsonl("{\"match\": \"forbidden\", \"flag\": true, \"score\": 0.9}\n").unwrap();
        assert!(c.classify("a forbidden word").unwrap().flag);
        assert!(!c.classify("fine").unwrap().flag);
        assert!(MockTextClassifier::unavailable().classify("x").is_err());
    }
}
