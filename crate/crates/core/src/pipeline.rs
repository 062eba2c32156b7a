//! End-to-end episode generation.
//!
//! Workers generate and filter episodes independently; the driver writes
//! kept episodes in index order so a rerun with the same configuration and
//! mock backends reproduces the store byte for byte.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{mpsc, Arc};
use std::time::Duration;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aligner::{
    plan_module, AlignedImage, Aligner, AlignerError, AlignerPlan, ClassWords, ExecContext, HttpSearchClient,
    HttpT2iClient, MockT2iClient, PlanKind, RetrievalExecutor, StubSearchClient,
};
use crate::artifacts::{ArtifactRef, ArtifactStore};
use crate::config::{ConfigError, PipelineConfig};
use crate::device::{generate_device_images, DeviceError};
use crate::dialogue::{
    attach_new_images, dialogue_text, generate_session, shown_interval, summarize_session, DialogueError, DialogueRules,
    ImageResolution, MobileImageId, PreviousSummary, Session, SessionContext,
};
use crate::event_graph::{format_date, generate_event_graph, linearize_sessions, CycleError, GraphGenError, GraphRules};
use crate::filter::{
    tally, AlignmentScorer, FilterChain, FilterDecision, FilterError, FilterReason, HttpAlignmentScorer, HttpClassifier,
    ImageClassifier, MockAlignmentScorer, MockImageClassifier, MockTextClassifier, Realigner, TextClassifier,
};
use crate::gateway::{ChatBackend, Gateway, GatewayError, HttpChatBackend, MockChatBackend, RetryPolicy};
use crate::lexicon::{AttributePool, Lexicon, LexiconError, NameLists};
use crate::profile::{
    dedup_personas, expand_narrative, generate_commonsense, generate_personas, pick_name, render_sentence_form,
    sample_demographics, sample_face_attributes, Narrative, ProfileError, Relation,
};
use crate::retrieval::{embed_captions, Embedder, HashEmbedder, HttpEmbedder, IndexError, VectorIndex};
use crate::seed::{derive_seed, rng_for};
use crate::store::{Episode, EpisodeStore, Provenance, RunHeader, StoreError};

pub const PIPELINE_VERSION: &str = env!("CARGO_PKG_VERSION");
/// Timestamp recorded by runs against mock backends.
pub const FROZEN_CLOCK: &str = "2024-05-01T00:00:00Z";

const CAPTIONS_JSON: &str = include_str!("../resources/captions.json");

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Lexicon(#[from] LexiconError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error("service setup: {0}")]
    Setup(String),
    /// A backend stayed down through the retry budget.
    #[error("episode {index}: {source}")]
    Backend {
        index: usize,
        #[source]
        source: GatewayError,
    },
}

#[derive(Debug, Error)]
pub enum EpisodeError {
    #[error("profile: {0}")]
    Profile(#[from] ProfileError),
    #[error("device images: {0}")]
    Device(#[from] DeviceError),
    #[error("event graph: {0}")]
    Graph(#[from] GraphGenError),
    #[error("schedule: {0}")]
    Schedule(#[from] CycleError),
    #[error("dialogue: {0}")]
    Dialogue(#[from] DialogueError),
    #[error("aligner: {0}")]
    Aligner(#[from] AlignerError),
}

impl EpisodeError {
    /// The backend failure behind this error, when it is one.
    pub fn backend_failure(&self) -> Option<&GatewayError> {
        let inner = match self {
            EpisodeError::Profile(ProfileError::Gateway(e))
            | EpisodeError::Device(DeviceError::Gateway(e))
            | EpisodeError::Graph(GraphGenError::Gateway(e))
            | EpisodeError::Dialogue(DialogueError::Gateway(e))
            | EpisodeError::Aligner(AlignerError::Gateway(e)) => e,
            _ => return None,
        };
        matches!(inner, GatewayError::BackendUnavailable { .. }).then_some(inner)
    }

    pub fn into_backend_failure(self) -> Result<GatewayError, Self> {
        if self.backend_failure().is_none() {
            return Err(self);
        }
        match self {
            EpisodeError::Profile(ProfileError::Gateway(e))
            | EpisodeError::Device(DeviceError::Gateway(e))
            | EpisodeError::Graph(GraphGenError::Gateway(e))
            | EpisodeError::Dialogue(DialogueError::Gateway(e))
            | EpisodeError::Aligner(AlignerError::Gateway(e)) => Ok(e),
            other => Err(other),
        }
    }
}

/// Per-episode generation knobs.
#[derive(Debug, Clone)]
pub struct EpisodeOptions {
    pub run_seed: u64,
    pub p_same_residence: f64,
    pub min_personas: usize,
    pub persona_categories: usize,
    pub graph_rules: GraphRules,
    pub dialogue_rules: DialogueRules,
    pub class_words: ClassWords,
    pub config_hash: String,
    pub frozen_clock: bool,
}

impl EpisodeOptions {
    pub fn from_config(config: &PipelineConfig) -> Self {
        Self {
            run_seed: config.seed,
            p_same_residence: config.sampling.p_same_residence,
            min_personas: config.sampling.min_personas,
            persona_categories: config.sampling.persona_categories,
            graph_rules: GraphRules::default(),
            dialogue_rules: DialogueRules {
                min_sharing: config.sampling.min_sharing_turns,
            },
            class_words: ClassWords::default(),
            config_hash: config.hash(),
            frozen_clock: config.backends.mock,
        }
    }
}

/// Every backend and data set a run talks to.
pub struct Services {
    pub gateway: Arc<Gateway>,
    pub aligner: Arc<Aligner>,
    pub filter: FilterChain,
    pub lexicon: Lexicon,
    pub names: NameLists,
    pub pool: AttributePool,
    pub embedder: Arc<dyn Embedder>,
    pub backend_ids: BTreeMap<String, String>,
}

fn setup<E: std::fmt::Display>(what: &str) -> impl Fn(E) -> PipelineError + '_ {
    move |e| PipelineError::Setup(format!("{what}: {e}"))
}

/// The bundled caption corpus as (id, caption) rows.
pub fn bundled_captions() -> (String, Vec<(String, String)>) {
    #[derive(Deserialize)]
    struct Row {
        id: String,
        caption: String,
    }
    #[derive(Deserialize)]
    struct Corpus {
        source_corpus: String,
        rows: Vec<Row>,
    }
    let corpus: Corpus = serde_json::from_str(CAPTIONS_JSON).expect("bundled captions are valid");
    (
        corpus.source_corpus,
        corpus.rows.into_iter().map(|r| (r.id, r.caption)).collect(),
    )
}

impl Services {
    pub fn from_config(config: &PipelineConfig, artifacts: ArtifactStore) -> Result<Self, PipelineError> {
        config.validate()?;
        let b = &config.backends;
        let d = &config.data;
        let mut ids = BTreeMap::new();

        let backend: Arc<dyn ChatBackend> = if b.mock {
            match &b.chat_script {
                Some(path) => Arc::new(MockChatBackend::from_file(path).map_err(setup("chat script"))?),
                None => Arc::new(MockChatBackend::new()),
            }
        } else {
            let endpoint = b.chat_endpoint.clone().ok_or(ConfigError::MissingEndpoint("chat"))?;
            Arc::new(HttpChatBackend::new(endpoint, b.chat_token.clone()).map_err(setup("chat backend"))?)
        };
        let gateway = Gateway::new(backend)
            .with_settings(config.settings_table())
            .with_concurrency(b.max_concurrent_requests)
            .with_model(b.model.clone())
            .with_retry(RetryPolicy {
                max_attempts: b.retry_attempts,
                base_delay: Duration::from_millis(b.retry_base_delay_ms),
            });
        ids.insert("chat".to_string(), gateway.backend_id().to_string());

        let index = match &d.embeddings {
            Some(path) => Some(VectorIndex::ingest(path)?),
            None => None,
        };
        let embedder: Arc<dyn Embedder> = match (&b.embed_endpoint, b.mock) {
            (Some(url), false) => {
                let dim = index.as_ref().map(|i| i.dimension()).unwrap_or(d.embed_dim);
                Arc::new(HttpEmbedder::new(url, dim).map_err(setup("embedder"))?)
            }
            _ => Arc::new(HashEmbedder::new(d.embed_dim, 0)),
        };
        ids.insert("embed".to_string(), embedder.id().to_string());
        let index = match index {
            Some(i) => i,
            None => {
                let (corpus, rows) = bundled_captions();
                let records = embed_captions(embedder.as_ref(), &rows, &corpus).map_err(setup("caption corpus"))?;
                VectorIndex::from_records(embedder.dimension(), records)?
            }
        };
        if index.dimension() != embedder.dimension() {
            return Err(PipelineError::Setup(format!(
                "embedding file has dimension {} but the embedder produces {}",
                index.dimension(),
                embedder.dimension()
            )));
        }

        let mut aligner = Aligner::new(artifacts.clone())
            .with_concurrency(b.executor_concurrency)
            .with_retrieval(RetrievalExecutor {
                index: Arc::new(index),
                embedder: embedder.clone(),
                image_dir: d.image_dir.clone(),
            });
        if b.mock {
            let t2i = Arc::new(MockT2iClient::new());
            ids.insert("t2i".to_string(), crate::aligner::T2iClient::id(t2i.as_ref()).to_string());
            aligner = aligner.with_t2i(t2i);
            let search = match &b.search_script {
                Some(path) => {
                    let text = std::fs::read_to_string(path).map_err(setup("search script"))?;
                    StubSearchClient::from_jsonl(&text).map_err(setup("search script"))?
                }
                None => StubSearchClient::new(),
            };
            ids.insert("search".to_string(), crate::aligner::SearchClient::id(&search).to_string());
            aligner = aligner.with_search(Arc::new(search));
        } else {
            if let Some(url) = &b.t2i_endpoint {
                let t2i = HttpT2iClient::new(url.clone()).map_err(setup("t2i"))?;
                ids.insert("t2i".to_string(), crate::aligner::T2iClient::id(&t2i).to_string());
                aligner = aligner.with_t2i(Arc::new(t2i));
            }
            if let Some(url) = &b.search_endpoint {
                let search = HttpSearchClient::new(url.clone()).map_err(setup("search"))?;
                ids.insert("search".to_string(), crate::aligner::SearchClient::id(&search).to_string());
                aligner = aligner.with_search(Arc::new(search));
            }
        }

        let text: Arc<dyn TextClassifier> = match (&b.safety_endpoint, b.mock) {
            (Some(url), false) => Arc::new(HttpClassifier::new(url.clone()).map_err(setup("safety hook"))?),
            _ => Arc::new(MockTextClassifier::pass()),
        };
        let image: Arc<dyn ImageClassifier> = match (&b.nsfw_endpoint, b.mock) {
            (Some(url), false) => Arc::new(HttpClassifier::new(url.clone()).map_err(setup("nsfw hook"))?),
            _ => Arc::new(MockImageClassifier::pass()),
        };
        let scorer: Arc<dyn AlignmentScorer> = match (&b.scorer_endpoint, b.mock) {
            (Some(url), false) => {
                Arc::new(HttpAlignmentScorer::new(url.clone(), artifacts.clone()).map_err(setup("scorer"))?)
            }
            _ => Arc::new(MockAlignmentScorer::new(HashEmbedder::new(d.embed_dim, 0))),
        };
        let aligner = Arc::new(aligner);
        let gateway = Arc::new(gateway);
        let filter = FilterChain::new(config.filter.clone(), text, image, scorer)
            .with_artifacts(artifacts)
            .with_realigner(Arc::new(FallbackRealigner {
                aligner: aligner.clone(),
                run_seed: config.seed,
            }));
        ids.extend(filter.hook_ids());

        let lexicon = match &d.lexicon {
            Some(p) => Lexicon::from_file(p)?,
            None => Lexicon::bundled(),
        };
        let names = match &d.names {
            Some(p) => NameLists::from_file(p)?,
            None => NameLists::bundled(),
        };
        let pool = match &d.attribute_pool {
            Some(p) => AttributePool::from_file(p)?,
            None => AttributePool::bundled(),
        };
        Ok(Self {
            gateway,
            aligner,
            filter,
            lexicon,
            names,
            pool,
            embedder,
            backend_ids: ids,
        })
    }
}

/// Re-runs an unaligned image through the executors after the one that
/// produced it.
struct FallbackRealigner {
    aligner: Arc<Aligner>,
    run_seed: u64,
}

impl Realigner for FallbackRealigner {
    fn realign(&self, episode: &Episode, description: &str, failed: &AlignedImage) -> Option<AlignedImage> {
        let order = PlanKind::FALLBACK_ORDER;
        let next = order.iter().position(|k| *k == failed.source).and_then(|i| order.get(i + 1))?;
        let plan = AlignerPlan {
            kind: *next,
            modified_description: None,
        };
        let seed = derive_seed(self.run_seed, &format!("{}/realign/{description}", episode.episode_id));
        let ctx = ExecContext {
            face_image: episode.face_attributes.face_image_ref.as_ref(),
            episode_id: &episode.episode_id,
            description,
            keywords: &[],
            seed,
        };
        self.aligner.execute_plan(&plan, &ctx).ok()
    }
}

pub fn episode_id(run_seed: u64, index: usize) -> String {
    format!("ep-{run_seed}-{index:06}")
}

struct AlignInput<'a> {
    name: &'a str,
    gender: &'a str,
    age: u32,
    face: Option<&'a ArtifactRef>,
    episode_id: &'a str,
}

fn align_description(
    services: &Services,
    opts: &EpisodeOptions,
    input: &AlignInput<'_>,
    description: &str,
    keywords: &[String],
    label: &str,
) -> Result<AlignedImage, AlignerError> {
    let plan = plan_module(
        &services.gateway,
        input.name,
        input.gender,
        input.age,
        description,
        &opts.class_words,
    )?;
    let ctx = ExecContext {
        face_image: input.face,
        episode_id: input.episode_id,
        description,
        keywords,
        seed: derive_seed(opts.run_seed, &format!("{}/{label}", input.episode_id)),
    };
    services.aligner.execute_plan(&plan, &ctx)
}

/// A planner or executor failure becomes an unresolved image; a backend
/// outage is surfaced.
fn soften(result: Result<AlignedImage, AlignerError>) -> Result<Result<AlignedImage, String>, EpisodeError> {
    match result {
        Ok(img) => Ok(Ok(img)),
        Err(AlignerError::Gateway(e @ GatewayError::BackendUnavailable { .. })) => {
            Err(EpisodeError::Aligner(AlignerError::Gateway(e)))
        }
        Err(e) => Ok(Err(e.to_string())),
    }
}

/// Generates one unfiltered episode.
pub fn generate_episode(services: &Services, opts: &EpisodeOptions, index: usize) -> Result<Episode, EpisodeError> {
    let id = episode_id(opts.run_seed, index);
    let seed = derive_seed(opts.run_seed, &format!("episode/{index}"));
    let gw = services.gateway.as_ref();
    tracing::debug!(episode = %id, "generating");

    let demographics = sample_demographics(&services.lexicon, derive_seed(seed, "demographics"), opts.p_same_residence)?;
    let name = pick_name(&services.names, &demographics.birthplace, derive_seed(seed, "name"))?;
    let mut face = sample_face_attributes(&demographics, &services.pool, derive_seed(seed, "face"))?;
    match services.aligner.generate_face(&face.rendered_prompt, derive_seed(seed, "face-image")) {
        Ok(r) => face.face_image_ref = Some(r),
        Err(AlignerError::Gateway(e)) => return Err(AlignerError::Gateway(e).into()),
        Err(e) => tracing::warn!(episode = %id, error = %e, "face image unavailable"),
    }

    let mut rng = rng_for(derive_seed(seed, "choices"));
    let categories: Vec<_> = services
        .lexicon
        .persona_categories
        .choose_multiple(&mut rng, opts.persona_categories)
        .cloned()
        .collect();
    let mut personas = Vec::new();
    for category in &categories {
        let batch = generate_personas(gw, &demographics, category, opts.min_personas)?;
        personas.extend(batch.attributes);
    }
    let persona = personas
        .get(rng.gen_range(0..personas.len().max(1)))
        .cloned()
        .ok_or(ProfileError::TooFewParsed {
            parsed: 0,
            min: opts.min_personas,
        })?;
    let relation = Relation::ALL[rng.gen_range(0..Relation::ALL.len())];
    let commonsense = generate_commonsense(gw, &persona, &demographics, relation)?;
    let sentence_form = render_sentence_form(&commonsense, &persona, &demographics, &name);
    let expanded = expand_narrative(gw, &sentence_form)?;
    let narrative = Narrative {
        name: name.clone(),
        sentence_form,
        expanded,
    };

    let mut device_images = generate_device_images(gw, &narrative.expanded, &name)?;
    let graph = generate_event_graph(gw, &name, &narrative.expanded, &opts.graph_rules)?;
    let schedule = linearize_sessions(&graph)?;

    let profile = demographics.fields(&name);
    let mut sessions: Vec<Session> = Vec::with_capacity(schedule.len());
    let mut history: Vec<(String, String)> = Vec::new();
    let mut previous_summary: Option<String> = None;
    for (i, item) in schedule.iter().enumerate() {
        let last_date = sessions.last().map(|s| s.date);
        let ctx = SessionContext {
            profile,
            device_images: &device_images,
            item,
            round_index: i as u32 + 1,
            history: &history,
            last_date,
        };
        let mut session = generate_session(gw, &ctx, &opts.dialogue_rules)?;
        attach_new_images(&mut session, &mut device_images);
        let date = format_date(session.date);
        let transcript = dialogue_text(&session.turns, &name);
        let summary = match (&previous_summary, last_date) {
            (Some(prev), Some(last)) => {
                let interval = shown_interval(item, last).to_string();
                let last = format_date(last);
                summarize_session(
                    gw,
                    &name,
                    &date,
                    &transcript,
                    Some(PreviousSummary {
                        summary: prev,
                        time_interval: &interval,
                        last_date: &last,
                    }),
                )?
            }
            _ => summarize_session(gw, &name, &date, &transcript, None)?,
        };
        previous_summary = Some(summary.clone());
        session.summary = Some(summary);
        history.push((date, item.node.event.clone()));
        sessions.push(session);
    }

    let gender = demographics.gender.title();
    let input = AlignInput {
        name: &name,
        gender,
        age: demographics.age,
        face: face.face_image_ref.as_ref(),
        episode_id: &id,
    };
    let mut device_failures: BTreeMap<u32, String> = BTreeMap::new();
    for img in device_images.iter_mut() {
        let label = format!("device/{}", img.index);
        match soften(align_description(services, opts, &input, &img.description, &[], &label))? {
            Ok(aligned) => img.aligned_image = Some(aligned),
            Err(reason) => {
                tracing::warn!(episode = %id, index = img.index, %reason, "device image unaligned");
                device_failures.insert(img.index, reason);
            }
        }
    }
    let resolve = |turn: &mut crate::dialogue::Utterance, label: String| -> Result<(), EpisodeError> {
        let info = &turn.sharing_info;
        if !info.is_sharing() {
            return Ok(());
        }
        if let Some(ImageResolution::Device { index }) = turn.image {
            if let Some(reason) = device_failures.get(&index) {
                turn.image = Some(ImageResolution::Unresolved { reason: reason.clone() });
            }
            return Ok(());
        }
        if info.is_mobile() {
            turn.image = Some(match info.image_id_from_mobile {
                Some(MobileImageId::Index(index)) => match device_failures.get(&index) {
                    Some(reason) => ImageResolution::Unresolved { reason: reason.clone() },
                    None => ImageResolution::Device { index },
                },
                _ => ImageResolution::Unresolved {
                    reason: "mobile image id does not name a device image".into(),
                },
            });
            return Ok(());
        }
        let description = info.image_description.clone().unwrap_or_default();
        let keywords = info.keywords.clone().unwrap_or_default();
        turn.image = Some(match soften(align_description(services, opts, &input, &description, &keywords, &label))? {
            Ok(image) => ImageResolution::Aligned { image },
            Err(reason) => ImageResolution::Unresolved { reason },
        });
        Ok(())
    };
    for session in sessions.iter_mut() {
        let round = session.round_index;
        for turn in session.turns.iter_mut() {
            let label = format!("session/{round}/{}", turn.utterance_id);
            resolve(turn, label)?;
        }
    }

    let timestamp = if opts.frozen_clock {
        FROZEN_CLOCK.to_string()
    } else {
        chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
    };
    Ok(Episode {
        episode_id: id,
        name,
        demographics,
        face_attributes: face,
        persona_attributes: personas,
        commonsense_entries: vec![commonsense],
        narrative,
        device_images,
        event_graph: graph,
        sessions,
        provenance: Provenance {
            seed,
            backend_ids: services.backend_ids.clone(),
            pipeline_version: PIPELINE_VERSION.to_string(),
            timestamps: BTreeMap::from([("generated".to_string(), timestamp)]),
            config_hash: opts.config_hash.clone(),
        },
    })
}

/// What happened to one attempted episode.
#[derive(Debug)]
pub enum EpisodeOutcome {
    Kept(Box<Episode>, FilterDecision),
    Dropped(FilterDecision),
    /// A classifier hook was down; the episode is parked for a later pass.
    Held(Box<Episode>, FilterError),
    /// Generation failed for a reason other than a backend outage.
    Failed(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub attempted: usize,
    pub kept: usize,
    pub dropped: usize,
    pub held: usize,
    pub failed: usize,
    pub drop_reasons: BTreeMap<FilterReason, usize>,
    pub flags: BTreeMap<FilterReason, usize>,
    pub deduplicated_personas: usize,
    pub store: PathBuf,
    pub config_hash: String,
}

impl RunSummary {
    pub fn render(&self) -> String {
        let mut out = format!(
            "attempted {}  kept {}  dropped {}  held {}  failed {}\n",
            self.attempted, self.kept, self.dropped, self.held, self.failed
        );
        for (reason, count) in &self.drop_reasons {
            out.push_str(&format!("  dropped for {reason:?}: {count}\n"));
        }
        for (reason, count) in &self.flags {
            out.push_str(&format!("  flagged {reason:?}: {count}\n"));
        }
        out.push_str(&format!("  duplicate personas removed: {}\n", self.deduplicated_personas));
        out.push_str(&format!("  store: {}\n", self.store.display()));
        out
    }
}

/// Generates and filters one episode.
pub fn process_episode(services: &Services, opts: &EpisodeOptions, index: usize) -> Result<EpisodeOutcome, EpisodeError> {
    let mut episode = match generate_episode(services, opts, index) {
        Ok(e) => e,
        Err(e) if e.backend_failure().is_some() => return Err(e),
        Err(e) => {
            tracing::warn!(index, error = %e, "episode generation failed");
            return Ok(EpisodeOutcome::Failed(e.to_string()));
        }
    };
    Ok(match services.filter.filter_episode(&mut episode) {
        Ok(decision) if decision.kept => EpisodeOutcome::Kept(Box::new(episode), decision),
        Ok(decision) => EpisodeOutcome::Dropped(decision),
        Err(e) => EpisodeOutcome::Held(Box::new(episode), e),
    })
}

/// Path of the side store for held episodes.
pub fn held_store_path(store: &Path) -> PathBuf {
    let stem = store.file_stem().and_then(|s| s.to_str()).unwrap_or("episodes");
    store.with_file_name(format!("{stem}.held.jsonl"))
}

/// Runs `n` episodes with the services built from `config`.
pub fn run_generate(config: &PipelineConfig, n: usize) -> Result<RunSummary, PipelineError> {
    config.validate()?;
    let store = EpisodeStore::create(&config.output)?;
    let services = Services::from_config(config, store.artifacts()?)?;
    run_with_services(config, &services, &store, n)
}

pub fn run_with_services(
    config: &PipelineConfig,
    services: &Services,
    store: &EpisodeStore,
    n: usize,
) -> Result<RunSummary, PipelineError> {
    let opts = EpisodeOptions::from_config(config);
    store.write_header(&RunHeader {
        config_hash: opts.config_hash.clone(),
        seed: config.seed,
        pipeline_version: PIPELINE_VERSION.to_string(),
        episodes_requested: n,
    })?;
    let mut summary = RunSummary {
        store: store.path().to_path_buf(),
        config_hash: opts.config_hash.clone(),
        ..RunSummary::default()
    };
    if n == 0 {
        return Ok(summary);
    }
    let held_store = EpisodeStore::new(held_store_path(store.path()));
    let _ = std::fs::remove_file(held_store.path());

    let next = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let (tx, rx) = mpsc::channel::<(usize, Result<EpisodeOutcome, EpisodeError>)>();
    let workers = config.workers.min(n).max(1);
    let mut decisions: Vec<FilterDecision> = Vec::new();
    let mut fatal: Option<PipelineError> = None;

    std::thread::scope(|scope| {
        for _ in 0..workers {
            let tx = tx.clone();
            let (next, abort, opts) = (&next, &abort, &opts);
            scope.spawn(move || loop {
                if abort.load(Ordering::SeqCst) {
                    break;
                }
                let index = next.fetch_add(1, Ordering::SeqCst);
                if index >= n {
                    break;
                }
                let outcome = process_episode(services, opts, index);
                if tx.send((index, outcome)).is_err() {
                    break;
                }
            });
        }
        drop(tx);

        let mut pending: BTreeMap<usize, Result<EpisodeOutcome, EpisodeError>> = BTreeMap::new();
        let mut cursor = 0;
        for (index, outcome) in rx {
            pending.insert(index, outcome);
            while let Some(outcome) = pending.remove(&cursor) {
                if fatal.is_none() {
                    if let Err(e) = record(&mut summary, &mut decisions, store, &held_store, cursor, outcome) {
                        fatal = Some(e);
                        abort.store(true, Ordering::SeqCst);
                    }
                }
                cursor += 1;
                if cursor % 10 == 0 || cursor == n {
                    tracing::info!(done = cursor, total = n, "episodes processed");
                }
            }
        }
    });
    if let Some(e) = fatal {
        return Err(e);
    }
    summary.drop_reasons = tally(&decisions);
    for d in &decisions {
        for f in &d.flags {
            *summary.flags.entry(*f).or_insert(0) += 1;
        }
        summary.deduplicated_personas += d.deduplicated;
    }
    Ok(summary)
}

fn record(
    summary: &mut RunSummary,
    decisions: &mut Vec<FilterDecision>,
    store: &EpisodeStore,
    held: &EpisodeStore,
    index: usize,
    outcome: Result<EpisodeOutcome, EpisodeError>,
) -> Result<(), PipelineError> {
    summary.attempted += 1;
    match outcome {
        Err(e) => {
            return Err(match e.into_backend_failure() {
                Ok(source) => PipelineError::Backend { index, source },
                Err(other) => PipelineError::Setup(other.to_string()),
            })
        }
        Ok(EpisodeOutcome::Kept(episode, decision)) => {
            store.write_episode(&episode)?;
            summary.kept += 1;
            decisions.push(decision);
        }
        Ok(EpisodeOutcome::Dropped(decision)) => {
            summary.dropped += 1;
            decisions.push(decision);
        }
        Ok(EpisodeOutcome::Held(episode, e)) => {
            tracing::warn!(episode = %episode.episode_id, error = %e, "episode held");
            held.write_episode(&episode)?;
            summary.held += 1;
        }
        Ok(EpisodeOutcome::Failed(_)) => summary.failed += 1,
    }
    Ok(())
}

/// Removes duplicate personas across all categories of an episode; exposed
/// for callers assembling episodes by hand.
pub fn dedup_episode_personas(episode: &mut Episode) -> usize {
    dedup_personas(&mut episode.persona_attributes)
}
