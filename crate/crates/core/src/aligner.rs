//! Turning image descriptions into image artifacts: plan which module
//! realizes a description, then run it with fallback.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::artifacts::{ArtifactError, ArtifactRef, ArtifactStore};
use crate::event_graph::Report;
use crate::extract::{parse_plan_block, ExtractError};
use crate::gateway::{Gateway, GatewayError, GenerationError};
use crate::prompts;
use crate::retrieval::{content_tokens, embed_text, Embedder, VectorIndex};
use crate::sync::Semaphore;

pub const IMG_TOKEN: &str = "[img]";
pub const DEFAULT_EXECUTOR_CONCURRENCY: usize = 4;
pub const CONTENT_KEEP_RATIO: f64 = 0.8;

pub const DEFAULT_CLASS_WORDS: [&str; 10] = [
    "man",
    "woman",
    "boy",
    "girl",
    "young man",
    "young woman",
    "person",
    "child",
    "elderly man",
    "elderly woman",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanKind {
    PersonalizedT2i,
    Retrieval,
    WebSearch,
}

impl PlanKind {
    pub const FALLBACK_ORDER: [PlanKind; 3] = [PlanKind::PersonalizedT2i, PlanKind::Retrieval, PlanKind::WebSearch];

    pub fn as_str(self) -> &'static str {
        match self {
            PlanKind::PersonalizedT2i => "personalized_t2i",
            PlanKind::Retrieval => "retrieval",
            PlanKind::WebSearch => "web_search",
        }
    }

    /// Module name as written in the planner prompt.
    pub fn module_name(self) -> &'static str {
        match self {
            PlanKind::PersonalizedT2i => "Personalized Text-to-Image Generator",
            PlanKind::Retrieval => "Image Database Retrieval",
            PlanKind::WebSearch => "Web Search",
        }
    }

    pub fn from_module_name(name: &str) -> Option<Self> {
        let n = name.trim().trim_end_matches('.').to_lowercase();
        if let Ok(kind) = n.parse() {
            return Some(kind);
        }
        if n.contains("text-to-image") || n.contains("personalized") {
            Some(PlanKind::PersonalizedT2i)
        } else if n.contains("retrieval") || n.contains("database") {
            Some(PlanKind::Retrieval)
        } else if n.contains("web search") || n == "search" {
            Some(PlanKind::WebSearch)
        } else {
            None
        }
    }

    /// This kind followed by the ones after it in the fallback chain.
    pub fn chain(self) -> &'static [PlanKind] {
        let start = Self::FALLBACK_ORDER.iter().position(|k| *k == self).unwrap_or(0);
        &Self::FALLBACK_ORDER[start..]
    }
}

impl fmt::Display for PlanKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PlanKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "personalized_t2i" => Ok(PlanKind::PersonalizedT2i),
            "retrieval" => Ok(PlanKind::Retrieval),
            "web_search" => Ok(PlanKind::WebSearch),
            other => Err(format!("unknown plan kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignerPlan {
    pub kind: PlanKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modified_description: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedImage {
    pub artifact_ref: ArtifactRef,
    pub source: PlanKind,
    /// URL, corpus id or generation request id, plus any fallback note.
    pub provenance: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    /// Text the image was produced from or found by: the generation prompt,
    /// the corpus caption or the search result title.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RewriteViolation {
    MissingImgToken,
    MissingClassWord,
    ContentDrift,
}

pub type RewriteReport = Report<RewriteViolation>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassWords(pub Vec<String>);

impl Default for ClassWords {
    fn default() -> Self {
        Self(DEFAULT_CLASS_WORDS.iter().map(|s| s.to_string()).collect())
    }
}

impl ClassWords {
    /// Whether `text` ends with a class word on a word boundary.
    pub fn ends_with_class_word(&self, text: &str) -> bool {
        let text = text.trim_end().to_lowercase();
        self.0.iter().any(|word| {
            let word = word.trim().to_lowercase();
            !word.is_empty()
                && text.ends_with(&word)
                && text[..text.len() - word.len()]
                    .chars()
                    .next_back()
                    .is_none_or(|c| !c.is_alphanumeric())
        })
    }
}

/// Checks the personalized rewrite: every `[img]` must follow a class word,
/// and at least 80% of the original's content words (the person's name
/// excluded) must survive.
pub fn validate_rewrite(original: &str, modified: &str, name: &str, class_words: &ClassWords) -> RewriteReport {
    let mut report = RewriteReport::default();
    if !modified.contains(IMG_TOKEN) {
        report.push(RewriteViolation::MissingImgToken, None, format!("no `{IMG_TOKEN}` token"));
    } else {
        let pieces: Vec<&str> = modified.split(IMG_TOKEN).collect();
        for before in &pieces[..pieces.len() - 1] {
            if !class_words.ends_with_class_word(before) {
                report.push(
                    RewriteViolation::MissingClassWord,
                    None,
                    format!("`{IMG_TOKEN}` not preceded by a class word"),
                );
                break;
            }
        }
    }
    let name_tokens: HashSet<String> = content_tokens(name).into_iter().collect();
    let wanted: Vec<String> = content_tokens(original)
        .into_iter()
        .filter(|t| !name_tokens.contains(t))
        .collect();
    if !wanted.is_empty() {
        let present: HashSet<String> = content_tokens(modified).into_iter().collect();
        let kept = wanted.iter().filter(|t| present.contains(*t)).count();
        let ratio = kept as f64 / wanted.len() as f64;
        if ratio < CONTENT_KEEP_RATIO {
            report.push(
                RewriteViolation::ContentDrift,
                None,
                format!("{kept} of {} content words kept", wanted.len()),
            );
        }
    }
    report
}

#[derive(Debug, Error)]
pub enum AlignerError {
    #[error("unknown module `{0}`")]
    UnknownModuleName(String),
    #[error("personalized rewrite is malformed: {0:?}")]
    BadRewriteFormat(Vec<RewriteViolation>),
    #[error(transparent)]
    Extract(#[from] ExtractError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("image description is empty")]
    EmptyDescription,
    #[error("every executor failed: {}", format_failures(.0))]
    ExecutorFailure(Vec<(PlanKind, String)>),
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
}

fn format_failures(failures: &[(PlanKind, String)]) -> String {
    failures
        .iter()
        .map(|(k, e)| format!("{k}: {e}"))
        .collect::<Vec<_>>()
        .join("; ")
}

impl From<GenerationError<AlignerError>> for AlignerError {
    fn from(err: GenerationError<AlignerError>) -> Self {
        match err {
            GenerationError::Gateway(e) => AlignerError::Gateway(e),
            GenerationError::Rejected(e) => e,
        }
    }
}

/// Interprets a planner completion.
pub fn plan_from_text(text: &str, description: &str, name: &str, class_words: &ClassWords) -> Result<AlignerPlan, AlignerError> {
    let block = parse_plan_block(text)?;
    let kind = PlanKind::from_module_name(&block.module).ok_or_else(|| AlignerError::UnknownModuleName(block.module.clone()))?;
    if kind != PlanKind::PersonalizedT2i {
        return Ok(AlignerPlan {
            kind,
            modified_description: None,
        });
    }
    let modified = block.modified_description.unwrap_or_default();
    let report = validate_rewrite(description, &modified, name, class_words);
    if !report.is_empty() {
        return Err(AlignerError::BadRewriteFormat(report.kinds()));
    }
    Ok(AlignerPlan {
        kind,
        modified_description: Some(modified),
    })
}

pub fn plan_module(
    gateway: &Gateway,
    name: &str,
    gender: &str,
    age: u32,
    description: &str,
    class_words: &ClassWords,
) -> Result<AlignerPlan, AlignerError> {
    if description.trim().is_empty() {
        return Err(AlignerError::EmptyDescription);
    }
    let request = prompts::plan_request(name, gender, age, description);
    let (plan, _) = gateway.complete_parsed(&request, |text| plan_from_text(text, description, name, class_words))?;
    Ok(plan)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{0}")]
pub struct ExecutorError(pub String);

pub trait T2iClient: Send + Sync {
    fn id(&self) -> &str;
    fn generate(&self, prompt: &str, face_image: Option<&[u8]>, seed: u64) -> Result<Vec<u8>, ExecutorError>;
}

#[derive(Serialize)]
struct T2iRequest<'a> {
    prompt: &'a str,
    face_image: String,
    seed: u64,
}

#[derive(Deserialize)]
struct T2iResponse {
    image: String,
}

/// `POST {prompt, face_image: base64, seed}` → `{image: base64}`.
pub struct HttpT2iClient {
    endpoint: String,
    client: reqwest::blocking::Client,
}

impl HttpT2iClient {
    pub fn new(endpoint: impl Into<String>) -> Result<Self, ExecutorError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(300))
            .build()
            .map_err(|e| ExecutorError(e.to_string()))?;
        Ok(Self {
            endpoint: endpoint.into(),
            client,
        })
    }
}

impl T2iClient for HttpT2iClient {
    fn id(&self) -> &str {
        &self.endpoint
    }

    fn generate(&self, prompt: &str, face_image: Option<&[u8]>, seed: u64) -> Result<Vec<u8>, ExecutorError> {
        let body = T2iRequest {
            prompt,
            face_image: face_image.map(|b| BASE64.encode(b)).unwrap_or_default(),
            seed,
        };
        let response = self
            .client
            .post(&self.endpoint)
            .json(&body)
            .send()
            .map_err(|e| ExecutorError(e.to_string()))?;
        if !response.status().is_success() {
            return Err(ExecutorError(format!("HTTP {}", response.status())));
        }
        let parsed: T2iResponse = response.json().map_err(|e| ExecutorError(e.to_string()))?;
        let bytes = BASE64.decode(parsed.image.trim()).map_err(|e| ExecutorError(e.to_string()))?;
        if bytes.is_empty() {
            return Err(ExecutorError("empty image".into()));
        }
        Ok(bytes)
    }
}

/// Deterministic stand-in that renders the request into a small text
/// "image". Can be switched off to exercise fallbacks.
#[derive(Debug, Default)]
pub struct MockT2iClient {
    down: bool,
}

impl MockT2iClient {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn unavailable() -> Self {
        Self { down: true }
    }
}

impl T2iClient for MockT2iClient {
    fn id(&self) -> &str {
        "mock-t2i"
    }

    fn generate(&self, prompt: &str, face_image: Option<&[u8]>, seed: u64) -> Result<Vec<u8>, ExecutorError> {
        if self.down {
            return Err(ExecutorError("mock T2I service is down".into()));
        }
        let face = face_image.map(|b| hex::encode(Sha256::digest(b))).unwrap_or_default();
        Ok(format!("MOCK-IMAGE t2i\nprompt: {prompt}\nface: {face}\nseed: {seed}\n").into_bytes())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchHit {
    pub url: String,
    pub mime: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
}

pub trait SearchClient: Send + Sync {
    fn id(&self) -> &str;
    fn search(&self, query: &str, keywords: &[String]) -> Result<Vec<SearchHit>, ExecutorError>;
    fn fetch(&self, url: &str) -> Result<Vec<u8>, ExecutorError>;
}

/// One scripted answer of the stub search client.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchScript {
    /// Substring of the query, or `*`.
    #[serde(rename = "match")]
    pub matcher: String,
    pub results: Vec<SearchHit>,
}

/// Offline search client. Scripted queries return their listed hits;
/// anything else gets one synthetic `stub://` URL derived from the query.
#[derive(Debug, Default)]
pub struct StubSearchClient {
    scripts: Vec<SearchScript>,
    down: bool,
    fetched: Mutex<Vec<String>>,
}

impl StubSearchClient {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn unavailable() -> Self {
        Self {
            down: true,
            ..Self::default()
        }
    }

    pub fn with_script(mut self, script: SearchScript) -> Self {
        self.scripts.push(script);
        self
    }

    pub fn from_jsonl(text: &str) -> Result<Self, String> {
        let mut stub = Self::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let script: SearchScript = serde_json::from_str(line).map_err(|e| format!("line {}: {e}", i + 1))?;
            stub.scripts.push(script);
        }
        Ok(stub)
    }

    pub fn fetched(&self) -> Vec<String> {
        self.fetched.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }
}

impl SearchClient for StubSearchClient {
    fn id(&self) -> &str {
        "stub-search"
    }

    fn search(&self, query: &str, _keywords: &[String]) -> Result<Vec<SearchHit>, ExecutorError> {
        if self.down {
            return Err(ExecutorError("stub search is down".into()));
        }
        if let Some(script) = self
            .scripts
            .iter()
            .find(|s| s.matcher == "*" || query.contains(&s.matcher))
        {
            return Ok(script.results.clone());
        }
        let key = hex::encode(Sha256::digest(query.as_bytes()));
        Ok(vec![SearchHit {
            url: format!("stub://search/{}.png", &key[..16]),
            mime: "image/png".into(),
            title: Some(query.to_string()),
        }])
    }

    fn fetch(&self, url: &str) -> Result<Vec<u8>, ExecutorError> {
        if self.down {
            return Err(ExecutorError("stub search is down".into()));
        }
        self.fetched
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .push(url.to_string());
        Ok(format!("MOCK-IMAGE web\nurl: {url}\n").into_bytes())
    }
}

#[derive(Serialize)]
struct SearchRequest<'a> {
    query: &'a str,
    keywords: &'a [String],
}

#[derive(Deserialize)]
struct SearchResponse {
    results: Vec<SearchHit>,
}

/// `POST {query, keywords}` → `{results: [{url, mime}]}`; hits are fetched
/// with a plain GET.
pub struct HttpSearchClient {
    endpoint: String,
    client: reqwest::blocking::Client,
}

impl HttpSearchClient {
    pub fn new(endpoint: impl Into<String>) -> Result<Self, ExecutorError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(60))
            .build()
            .map_err(|e| ExecutorError(e.to_string()))?;
        Ok(Self {
            endpoint: endpoint.into(),
            client,
        })
    }
}

impl SearchClient for HttpSearchClient {
    fn id(&self) -> &str {
        &self.endpoint
    }

    fn search(&self, query: &str, keywords: &[String]) -> Result<Vec<SearchHit>, ExecutorError> {
        let response = self
            .client
            .post(&self.endpoint)
            .json(&SearchRequest { query, keywords })
            .send()
            .map_err(|e| ExecutorError(e.to_string()))?;
        if !response.status().is_success() {
            return Err(ExecutorError(format!("HTTP {}", response.status())));
        }
        let parsed: SearchResponse = response.json().map_err(|e| ExecutorError(e.to_string()))?;
        Ok(parsed.results)
    }

    fn fetch(&self, url: &str) -> Result<Vec<u8>, ExecutorError> {
        let response = self.client.get(url).send().map_err(|e| ExecutorError(e.to_string()))?;
        if !response.status().is_success() {
            return Err(ExecutorError(format!("HTTP {}", response.status())));
        }
        let bytes = response.bytes().map_err(|e| ExecutorError(e.to_string()))?;
        Ok(bytes.to_vec())
    }
}

/// Image corpus behind the retrieval module: an index of caption
/// embeddings plus, optionally, a directory of image files named by id.
pub struct RetrievalExecutor {
    pub index: Arc<VectorIndex>,
    pub embedder: Arc<dyn Embedder>,
    pub image_dir: Option<std::path::PathBuf>,
}

impl RetrievalExecutor {
    fn run(&self, description: &str) -> Result<(Vec<u8>, String, String), ExecutorError> {
        let query = embed_text(self.embedder.as_ref(), description).map_err(|e| ExecutorError(e.to_string()))?;
        let hit = self
            .index
            .search(&query, 1)
            .map_err(|e| ExecutorError(e.to_string()))?
            .into_iter()
            .next()
            .ok_or_else(|| ExecutorError("image index is empty".into()))?;
        let meta = self.index.metadata(&hit.id).cloned().unwrap_or_else(|| crate::retrieval::RecordMeta {
            caption: String::new(),
            source_corpus: crate::retrieval::UNKNOWN_CORPUS.into(),
        });
        let bytes = match &self.image_dir {
            Some(dir) => std::fs::read(dir.join(&hit.id)).map_err(|e| ExecutorError(format!("image {}: {e}", hit.id)))?,
            None => format!("MOCK-IMAGE corpus\nid: {}\ncaption: {}\n", hit.id, meta.caption).into_bytes(),
        };
        Ok((bytes, format!("corpus:{}/{}", meta.source_corpus, hit.id), meta.caption))
    }
}

/// Inputs to one execution.
#[derive(Debug, Clone, Copy)]
pub struct ExecContext<'a> {
    pub face_image: Option<&'a ArtifactRef>,
    pub episode_id: &'a str,
    pub description: &'a str,
    pub keywords: &'a [String],
    pub seed: u64,
}

/// Executors for the three modules, each behind its own concurrency bound.
pub struct Aligner {
    t2i: Option<Arc<dyn T2iClient>>,
    retrieval: Option<RetrievalExecutor>,
    search: Option<Arc<dyn SearchClient>>,
    artifacts: ArtifactStore,
    t2i_limit: Semaphore,
    retrieval_limit: Semaphore,
    search_limit: Semaphore,
}

impl Aligner {
    pub fn new(artifacts: ArtifactStore) -> Self {
        Self {
            t2i: None,
            retrieval: None,
            search: None,
            artifacts,
            t2i_limit: Semaphore::new(DEFAULT_EXECUTOR_CONCURRENCY),
            retrieval_limit: Semaphore::new(DEFAULT_EXECUTOR_CONCURRENCY),
            search_limit: Semaphore::new(DEFAULT_EXECUTOR_CONCURRENCY),
        }
    }

    pub fn with_t2i(mut self, client: Arc<dyn T2iClient>) -> Self {
        self.t2i = Some(client);
        self
    }

    pub fn with_retrieval(mut self, executor: RetrievalExecutor) -> Self {
        self.retrieval = Some(executor);
        self
    }

    pub fn with_search(mut self, client: Arc<dyn SearchClient>) -> Self {
        self.search = Some(client);
        self
    }

    pub fn with_concurrency(mut self, per_executor: usize) -> Self {
        self.t2i_limit = Semaphore::new(per_executor);
        self.retrieval_limit = Semaphore::new(per_executor);
        self.search_limit = Semaphore::new(per_executor);
        self
    }

    pub fn artifacts(&self) -> &ArtifactStore {
        &self.artifacts
    }

    pub fn retrieval_executor(&self) -> Option<&RetrievalExecutor> {
        self.retrieval.as_ref()
    }

    /// Generates a face image from the rendered attribute prompt.
    pub fn generate_face(&self, prompt: &str, seed: u64) -> Result<ArtifactRef, AlignerError> {
        let client = self
            .t2i
            .as_ref()
            .ok_or_else(|| AlignerError::ExecutorFailure(vec![(PlanKind::PersonalizedT2i, "no T2I client registered".into())]))?;
        let bytes = {
            let _permit = self.t2i_limit.acquire();
            client.generate(prompt, None, seed)
        }
        .map_err(|e| AlignerError::ExecutorFailure(vec![(PlanKind::PersonalizedT2i, e.0)]))?;
        Ok(self.artifacts.put(&bytes)?)
    }

    fn run_one(
        &self,
        kind: PlanKind,
        plan: &AlignerPlan,
        ctx: &ExecContext<'_>,
    ) -> Result<(Vec<u8>, String, Option<String>), ExecutorError> {
        match kind {
            PlanKind::PersonalizedT2i => {
                let client = self.t2i.as_ref().ok_or_else(|| ExecutorError("no T2I client registered".into()))?;
                let prompt = plan
                    .modified_description
                    .as_deref()
                    .filter(|_| plan.kind == PlanKind::PersonalizedT2i)
                    .unwrap_or(ctx.description);
                let face = match ctx.face_image {
                    Some(r) => Some(self.artifacts.get(r).map_err(|e| ExecutorError(e.to_string()))?),
                    None => None,
                };
                let _permit = self.t2i_limit.acquire();
                let bytes = client.generate(prompt, face.as_deref(), ctx.seed)?;
                let request_id = hex::encode(Sha256::digest(format!("{}\n{}\n{}", ctx.episode_id, prompt, ctx.seed)));
                Ok((bytes, format!("t2i:{}:{}", client.id(), &request_id[..16]), Some(prompt.to_string())))
            }
            PlanKind::Retrieval => {
                let executor = self
                    .retrieval
                    .as_ref()
                    .ok_or_else(|| ExecutorError("no image index registered".into()))?;
                let _permit = self.retrieval_limit.acquire();
                let (bytes, provenance, caption) = executor.run(ctx.description)?;
                Ok((bytes, provenance, Some(caption)))
            }
            PlanKind::WebSearch => {
                let client = self.search.as_ref().ok_or_else(|| ExecutorError("no search client registered".into()))?;
                let _permit = self.search_limit.acquire();
                let hits = client.search(ctx.description, ctx.keywords)?;
                let mut last = ExecutorError("search returned no results".into());
                for hit in hits.iter().filter(|h| h.mime.starts_with("image/")) {
                    match client.fetch(&hit.url) {
                        Ok(bytes) if !bytes.is_empty() => return Ok((bytes, hit.url.clone(), hit.title.clone())),
                        Ok(_) => last = ExecutorError(format!("{} is empty", hit.url)),
                        Err(e) => last = e,
                    }
                }
                Err(last)
            }
        }
    }

    /// Runs the planned module, falling back along
    /// personalized T2I → retrieval → web search.
    pub fn execute_plan(&self, plan: &AlignerPlan, ctx: &ExecContext<'_>) -> Result<AlignedImage, AlignerError> {
        let mut failures: Vec<(PlanKind, String)> = Vec::new();
        for &kind in plan.kind.chain() {
            match self.run_one(kind, plan, ctx) {
                Ok((bytes, provenance, caption)) => {
                    let artifact_ref = self.artifacts.put(&bytes)?;
                    let provenance = if failures.is_empty() {
                        provenance
                    } else {
                        let failed: Vec<&str> = failures.iter().map(|(k, _)| k.as_str()).collect();
                        format!("{provenance} (fallback after {} failed)", failed.join(", "))
                    };
                    return Ok(AlignedImage {
                        artifact_ref,
                        source: kind,
                        provenance,
                        score: None,
                        caption,
                    });
                }
                Err(e) => {
                    tracing::debug!(kind = %kind, error = %e, "executor failed");
                    failures.push((kind, e.0));
                }
            }
        }
        Err(AlignerError::ExecutorFailure(failures))
    }
}
