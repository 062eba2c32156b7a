//! Episode records and their JSONL store.
//!
//! One episode per line. A run may prepend a header line carrying the
//! configuration hash and seeds; readers skip it. Image bytes live beside the
//! store in a content-addressed `artifacts/` directory.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::artifacts::{ArtifactError, ArtifactStore};
use crate::device::{DeviceImageDesc, DEVICE_IMAGE_COUNT};
use crate::dialogue::{validate_session, DialogueRules, ImageResolution, Session};
use crate::event_graph::{linearize_sessions, EventGraph, GraphRules, Report};
use crate::lexicon::Lexicon;
use crate::profile::{CommonsenseEntry, Demographics, FaceAttributeSet, Narrative, PersonaAttribute};

pub const ARTIFACT_DIR: &str = "artifacts";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    /// Backend identifier per service (chat, t2i, search, embed, ...).
    pub backend_ids: BTreeMap<String, String>,
    pub pipeline_version: String,
    /// Stage name to timestamp. Runs against mocks use a frozen clock.
    pub timestamps: BTreeMap<String, String>,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub episode_id: String,
    pub name: String,
    pub demographics: Demographics,
    pub face_attributes: FaceAttributeSet,
    pub persona_attributes: Vec<PersonaAttribute>,
    pub commonsense_entries: Vec<CommonsenseEntry>,
    pub narrative: Narrative,
    pub device_images: Vec<DeviceImageDesc>,
    pub event_graph: EventGraph,
    /// Sessions in schedule order; each carries its own summary.
    pub sessions: Vec<Session>,
    pub provenance: Provenance,
}

impl Episode {
    pub fn summaries(&self) -> impl Iterator<Item = &str> {
        self.sessions.iter().filter_map(|s| s.summary.as_deref())
    }
}

/// First line of a store written by a generation run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunHeader {
    pub config_hash: String,
    pub seed: u64,
    pub pipeline_version: String,
    pub episodes_requested: usize,
}

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    run_header: RunHeader,
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {detail}")]
    CorruptLine { line: usize, detail: String },
    #[error("episode `{0}` not found")]
    MissingEpisode(String),
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
}

/// A line that did not parse as an episode.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CorruptLine {
    /// 1-based line number.
    pub line: usize,
    pub detail: String,
}

#[derive(Debug, Default)]
pub struct StoreScan {
    pub header: Option<RunHeader>,
    /// Episodes with their 1-based line numbers.
    pub episodes: Vec<(usize, Episode)>,
    pub corrupt: Vec<CorruptLine>,
}

pub struct EpisodeStore {
    path: PathBuf,
}

impl EpisodeStore {
    /// Opens (without creating) the store at `path`.
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into() }
    }

    /// Creates the parent directory and an empty store file.
    pub fn create(path: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let store = Self::new(path);
        if let Some(parent) = store.path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| store.io(e))?;
        }
        File::create(&store.path).map_err(|e| store.io(e))?;
        Ok(store)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn artifact_dir(&self) -> PathBuf {
        self.path.parent().unwrap_or(Path::new(".")).join(ARTIFACT_DIR)
    }

    pub fn artifacts(&self) -> Result<ArtifactStore, StoreError> {
        Ok(ArtifactStore::open(self.artifact_dir())?)
    }

    fn io(&self, source: std::io::Error) -> StoreError {
        StoreError::Io {
            path: self.path.clone(),
            source,
        }
    }

    /// Appends one line under an exclusive advisory lock and returns the byte
    /// offset it starts at.
    fn append_line(&self, line: &str) -> Result<u64, StoreError> {
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| self.io(e))?;
        file.lock().map_err(|e| self.io(e))?;
        let result = (|| {
            let offset = file.seek(SeekFrom::End(0))?;
            let mut buf = String::with_capacity(line.len() + 1);
            buf.push_str(line);
            buf.push('\n');
            file.write_all(buf.as_bytes())?;
            file.flush()?;
            Ok(offset)
        })();
        let _ = file.unlock();
        result.map_err(|e| self.io(e))
    }

    pub fn write_header(&self, header: &RunHeader) -> Result<u64, StoreError> {
        let line = serde_json::to_string(&HeaderLine {
            run_header: header.clone(),
        })
        .expect("header serialization is infallible");
        self.append_line(&line)
    }

    pub fn write_episode(&self, episode: &Episode) -> Result<u64, StoreError> {
        let line = serde_json::to_string(episode).expect("episode serialization is infallible");
        self.append_line(&line)
    }

    /// Reads every line, isolating the ones that fail to parse.
    pub fn scan(&self) -> Result<StoreScan, StoreError> {
        let file = File::open(&self.path).map_err(|e| self.io(e))?;
        let mut scan = StoreScan::default();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let number = i + 1;
            let line = match line {
                Ok(l) => l,
                Err(e) => {
                    scan.corrupt.push(CorruptLine {
                        line: number,
                        detail: e.to_string(),
                    });
                    continue;
                }
            };
            if line.trim().is_empty() {
                continue;
            }
            if line.starts_with("{\"run_header\"") {
                match serde_json::from_str::<HeaderLine>(&line) {
                    Ok(h) => scan.header = Some(h.run_header),
                    Err(e) => scan.corrupt.push(CorruptLine {
                        line: number,
                        detail: e.to_string(),
                    }),
                }
                continue;
            }
            match serde_json::from_str::<Episode>(&line) {
                Ok(ep) => scan.episodes.push((number, ep)),
                Err(e) => scan.corrupt.push(CorruptLine {
                    line: number,
                    detail: e.to_string(),
                }),
            }
        }
        Ok(scan)
    }

    /// All readable episodes; fails on the first corrupt line.
    pub fn read_all(&self) -> Result<Vec<Episode>, StoreError> {
        let scan = self.scan()?;
        if let Some(bad) = scan.corrupt.into_iter().next() {
            return Err(StoreError::CorruptLine {
                line: bad.line,
                detail: bad.detail,
            });
        }
        Ok(scan.episodes.into_iter().map(|(_, e)| e).collect())
    }

    pub fn read_episode(&self, episode_id: &str) -> Result<Episode, StoreError> {
        self.scan()?
            .episodes
            .into_iter()
            .map(|(_, e)| e)
            .find(|e| e.episode_id == episode_id)
            .ok_or_else(|| StoreError::MissingEpisode(episode_id.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EpisodeViolation {
    Demographics,
    FaceAttributes,
    Personas,
    Narrative,
    DeviceImages,
    EventGraph,
    Schedule,
    Session,
    ImageReference,
    Provenance,
}

pub type EpisodeReport = Report<EpisodeViolation>;

/// Rules applied when re-validating a stored episode.
#[derive(Debug, Clone, Default)]
pub struct EpisodeRules {
    pub graph: GraphRules,
    pub dialogue: DialogueRules,
}

/// Runs every module validator over a stored episode.
pub fn validate_episode(episode: &Episode, lexicon: &Lexicon, rules: &EpisodeRules) -> EpisodeReport {
    use EpisodeViolation as V;
    let mut report = EpisodeReport::default();
    let id = Some(episode.episode_id.as_str());

    if let Err(e) = episode.demographics.validate(lexicon) {
        report.push(V::Demographics, id, e.to_string());
    }
    if !episode.face_attributes.matches(&episode.demographics) {
        report.push(V::FaceAttributes, id, "face attributes disagree with demographics");
    }
    if FaceAttributeSet::render(&episode.face_attributes.attributes) != episode.face_attributes.rendered_prompt {
        report.push(V::FaceAttributes, id, "rendered prompt is stale");
    }
    if episode.persona_attributes.is_empty() {
        report.push(V::Personas, id, "no persona attributes");
    }
    for attr in &episode.persona_attributes {
        if attr.entity_key.trim().is_empty() || attr.entity_value.trim().is_empty() || attr.sentence.trim().is_empty() {
            report.push(V::Personas, id, format!("incomplete persona attribute `{}`", attr.sentence));
        }
    }
    if episode.narrative.name != episode.name || episode.narrative.expanded.trim().is_empty() {
        report.push(V::Narrative, id, "narrative missing or names a different user");
    }

    let generated: Vec<u32> = episode.device_images.iter().take(DEVICE_IMAGE_COUNT).map(|d| d.index).collect();
    if generated != (1..=DEVICE_IMAGE_COUNT as u32).collect::<Vec<_>>() {
        report.push(V::DeviceImages, id, format!("device image indices {generated:?}"));
    }
    for pair in episode.device_images.windows(2) {
        if pair[1].index != pair[0].index + 1 {
            report.push(V::DeviceImages, id, "device image indices are not consecutive");
        }
    }

    let graph_report = episode.event_graph.validate(&rules.graph);
    for v in graph_report.violations {
        report.push(V::EventGraph, v.subject.as_deref(), format!("{:?}: {}", v.kind, v.detail));
    }
    match linearize_sessions(&episode.event_graph) {
        Ok(schedule) => {
            let expected: Vec<_> = schedule.iter().map(|s| (s.node.date, s.node.event.as_str())).collect();
            let found: Vec<_> = episode.sessions.iter().map(|s| (s.date, s.event.as_str())).collect();
            if expected != found {
                report.push(V::Schedule, id, "sessions do not follow the event graph schedule");
            }
        }
        Err(e) => report.push(V::Schedule, id, e.to_string()),
    }
    for (i, s) in episode.sessions.iter().enumerate() {
        if s.round_index as usize != i + 1 {
            report.push(V::Schedule, id, format!("session {} has round index {}", i + 1, s.round_index));
        }
    }

    // Images added during a session are visible from that session on.
    let mut visible: Vec<DeviceImageDesc> = episode.device_images.iter().take(DEVICE_IMAGE_COUNT).cloned().collect();
    let mut extra = episode.device_images.iter().skip(DEVICE_IMAGE_COUNT);
    for session in &episode.sessions {
        let added = session
            .turns
            .iter()
            .filter(|t| {
                t.sharing_info.image_id_from_mobile == Some(crate::dialogue::MobileImageId::NewAdded)
                    && t.sharing_info.is_mobile()
            })
            .count();
        visible.extend(extra.by_ref().take(added).cloned());
        let subject = format!("{}#{}", episode.episode_id, session.round_index);
        for v in validate_session(session, &visible, &rules.dialogue).violations {
            let turn = v.subject.map(|t| format!("{subject}/{t}")).unwrap_or_else(|| subject.clone());
            report.push(V::Session, Some(&turn), format!("{:?}: {}", v.kind, v.detail));
        }
        for turn in session.sharing_turns() {
            if let Some(ImageResolution::Device { index }) = &turn.image {
                if !visible.iter().any(|d| d.index == *index) {
                    report.push(
                        V::ImageReference,
                        Some(&format!("{subject}/{}", turn.utterance_id)),
                        format!("device image {index} does not exist"),
                    );
                }
            }
        }
        if session.summary.as_deref().is_none_or(|s| s.trim().is_empty()) {
            report.push(V::Session, Some(&subject), "missing summary");
        }
    }

    let p = &episode.provenance;
    if p.pipeline_version.is_empty() || p.config_hash.is_empty() || !p.backend_ids.contains_key("chat") {
        report.push(V::Provenance, id, "provenance is incomplete");
    }
    report
}

/// Artifact references that have no file in `artifacts`.
pub fn missing_artifacts(episode: &Episode, artifacts: &ArtifactStore) -> Vec<String> {
    image_refs(episode)
        .filter(|r| !artifacts.contains(r))
        .map(|r| r.to_string())
        .collect()
}

/// Every artifact the episode points at: face, device images and aligned
/// sharing turns.
pub fn image_refs(episode: &Episode) -> impl Iterator<Item = &crate::artifacts::ArtifactRef> {
    let face = episode.face_attributes.face_image_ref.iter();
    let devices = episode
        .device_images
        .iter()
        .filter_map(|d| d.aligned_image.as_ref().map(|a| &a.artifact_ref));
    let turns = episode.sessions.iter().flat_map(|s| &s.turns).filter_map(|t| match &t.image {
        Some(ImageResolution::Aligned { image }) => Some(&image.artifact_ref),
        _ => None,
    });
    face.chain(devices).chain(turns)
}
