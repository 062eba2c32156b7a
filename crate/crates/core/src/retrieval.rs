//! Exact cosine top-k over caption embeddings, the binary embedding file
//! format, and text embedders.
//!
//! # File format
//!
//! One UTF-8 JSON manifest line `{"dim": D, "count": N}` terminated by `\n`,
//! then `N` records of:
//!
//! | bytes | content |
//! |---|---|
//! | 2 | id length, `u16` little-endian |
//! | id length | UTF-8 id |
//! | 4 | caption length, `u32` little-endian |
//! | caption length | UTF-8 caption |
//! | 4 × D | vector, `f32` little-endian |

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::seed::rng_for;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordMeta {
    pub caption: String,
    pub source_corpus: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub id: String,
    pub vector: Vec<f32>,
    pub metadata: RecordMeta,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub dim: usize,
    pub count: usize,
    /// Corpus tag applied to every record in the file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_corpus: Option<String>,
}

pub const UNKNOWN_CORPUS: &str = "unknown";

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("I/O on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("bad manifest: {0}")]
    BadManifest(String),
    #[error("manifest declares {what} {expected}, file has {found}")]
    ManifestMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("corrupt row {row}: {detail}")]
    CorruptRow { row: usize, detail: String },
    #[error("dimension mismatch: index has {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("k must be at least 1")]
    ZeroK,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub id: String,
    pub score: f64,
}

/// Scales `v` to unit L2 norm. `None` for zero or non-finite vectors.
pub fn normalize(v: &[f32]) -> Option<Vec<f32>> {
    let norm = v.iter().map(|x| f64::from(*x) * f64::from(*x)).sum::<f64>().sqrt();
    if !norm.is_finite() || norm == 0.0 {
        return None;
    }
    Some(v.iter().map(|x| (f64::from(*x) / norm) as f32).collect())
}

/// Immutable after construction; searches take `&self`.
#[derive(Debug, Clone)]
pub struct VectorIndex {
    dim: usize,
    ids: Vec<String>,
    meta: Vec<RecordMeta>,
    vectors: Vec<f32>,
    positions: HashMap<String, usize>,
}

impl VectorIndex {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            ids: Vec::new(),
            meta: Vec::new(),
            vectors: Vec::new(),
            positions: HashMap::new(),
        }
    }

    pub fn from_records(dim: usize, records: impl IntoIterator<Item = EmbeddingRecord>) -> Result<Self, IndexError> {
        let mut index = Self::new(dim);
        for (row, record) in records.into_iter().enumerate() {
            index.insert(row, record)?;
        }
        Ok(index)
    }

    fn insert(&mut self, row: usize, record: EmbeddingRecord) -> Result<(), IndexError> {
        if record.vector.len() != self.dim {
            return Err(IndexError::DimensionMismatch {
                expected: self.dim,
                got: record.vector.len(),
            });
        }
        if self.positions.contains_key(&record.id) {
            return Err(IndexError::DuplicateId(record.id));
        }
        let unit = normalize(&record.vector).ok_or_else(|| IndexError::CorruptRow {
            row,
            detail: "zero or non-finite vector".into(),
        })?;
        self.positions.insert(record.id.clone(), self.ids.len());
        self.ids.push(record.id);
        self.meta.push(record.metadata);
        self.vectors.extend_from_slice(&unit);
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<EmbeddingRecord> {
        let i = *self.positions.get(id)?;
        Some(EmbeddingRecord {
            id: self.ids[i].clone(),
            vector: self.vectors[i * self.dim..(i + 1) * self.dim].to_vec(),
            metadata: self.meta[i].clone(),
        })
    }

    pub fn metadata(&self, id: &str) -> Option<&RecordMeta> {
        self.positions.get(id).map(|&i| &self.meta[i])
    }

    pub fn records(&self) -> impl Iterator<Item = EmbeddingRecord> + '_ {
        self.ids.iter().map(|id| self.get(id).expect("id is indexed"))
    }

    /// Top `min(k, N)` records by cosine similarity, descending, ties broken
    /// by ascending id.
    pub fn search(&self, query: &[f32], k: usize) -> Result<Vec<Hit>, IndexError> {
        if query.len() != self.dim {
            return Err(IndexError::DimensionMismatch {
                expected: self.dim,
                got: query.len(),
            });
        }
        if k == 0 {
            return Err(IndexError::ZeroK);
        }
        let norm = query.iter().map(|x| f64::from(*x) * f64::from(*x)).sum::<f64>().sqrt();
        let mut scored: Vec<(f64, usize)> = (0..self.ids.len())
            .map(|i| {
                let row = &self.vectors[i * self.dim..(i + 1) * self.dim];
                let dot: f64 = row.iter().zip(query).map(|(a, b)| f64::from(*a) * f64::from(*b)).sum();
                let score = if norm > 0.0 { dot / norm } else { 0.0 };
                (score, i)
            })
            .collect();
        let order = |a: &(f64, usize), b: &(f64, usize)| {
            b.0.partial_cmp(&a.0)
                .unwrap_or(Ordering::Equal)
                .then_with(|| self.ids[a.1].cmp(&self.ids[b.1]))
        };
        let k = k.min(scored.len());
        if k < scored.len() {
            scored.select_nth_unstable_by(k, order);
            scored.truncate(k);
        }
        scored.sort_by(order);
        Ok(scored
            .into_iter()
            .map(|(score, i)| Hit {
                id: self.ids[i].clone(),
                score,
            })
            .collect())
    }

    pub fn ingest(path: &Path) -> Result<Self, IndexError> {
        let file = std::fs::File::open(path).map_err(|source| IndexError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::read_from(BufReader::new(file))
    }

    pub fn read_from<R: BufRead>(mut reader: R) -> Result<Self, IndexError> {
        let mut line = String::new();
        reader
            .read_line(&mut line)
            .map_err(|e| IndexError::BadManifest(e.to_string()))?;
        let manifest: Manifest =
            serde_json::from_str(line.trim_end_matches('\n')).map_err(|e| IndexError::BadManifest(e.to_string()))?;
        if manifest.dim == 0 {
            return Err(IndexError::BadManifest("dim must be positive".into()));
        }
        let corpus = manifest.source_corpus.clone().unwrap_or_else(|| UNKNOWN_CORPUS.to_string());
        let mut index = Self::new(manifest.dim);
        let mut row = 0;
        loop {
            let mut len2 = [0u8; 2];
            match read_exact_or_eof(&mut reader, &mut len2) {
                Ok(false) => break,
                Ok(true) => {}
                Err(detail) => return Err(IndexError::CorruptRow { row, detail }),
            }
            if row >= manifest.count {
                return Err(IndexError::ManifestMismatch {
                    what: "count",
                    expected: manifest.count,
                    found: row + 1 + count_remaining(&mut reader, manifest.dim),
                });
            }
            let record = read_record(&mut reader, u16::from_le_bytes(len2), manifest.dim, &corpus)
                .map_err(|detail| IndexError::CorruptRow { row, detail })?;
            index.insert(row, record)?;
            row += 1;
        }
        if row != manifest.count {
            return Err(IndexError::ManifestMismatch {
                what: "count",
                expected: manifest.count,
                found: row,
            });
        }
        Ok(index)
    }
}

/// Fills `buf`; `Ok(false)` on a clean end of input before the first byte.
fn read_exact_or_eof<R: Read>(reader: &mut R, buf: &mut [u8]) -> Result<bool, String> {
    let mut filled = 0;
    while filled < buf.len() {
        match reader.read(&mut buf[filled..]) {
            Ok(0) if filled == 0 => return Ok(false),
            Ok(0) => return Err("truncated record".into()),
            Ok(n) => filled += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.to_string()),
        }
    }
    Ok(true)
}

fn read_exact<R: Read>(reader: &mut R, buf: &mut [u8]) -> Result<(), String> {
    reader.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => "truncated record".to_string(),
        _ => e.to_string(),
    })
}

fn read_record<R: Read>(reader: &mut R, id_len: u16, dim: usize, corpus: &str) -> Result<EmbeddingRecord, String> {
    let mut id = vec![0u8; usize::from(id_len)];
    read_exact(reader, &mut id)?;
    let id = String::from_utf8(id).map_err(|_| "id is not UTF-8".to_string())?;
    let mut len4 = [0u8; 4];
    read_exact(reader, &mut len4)?;
    let caption_len = u32::from_le_bytes(len4) as usize;
    let mut caption = Vec::new();
    reader
        .by_ref()
        .take(caption_len as u64)
        .read_to_end(&mut caption)
        .map_err(|e| e.to_string())?;
    if caption.len() != caption_len {
        return Err("truncated record".into());
    }
    let caption = String::from_utf8(caption).map_err(|_| "caption is not UTF-8".to_string())?;
    let mut raw = vec![0u8; dim * 4];
    read_exact(reader, &mut raw)?;
    let vector = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok(EmbeddingRecord {
        id,
        vector,
        metadata: RecordMeta {
            caption,
            source_corpus: corpus.to_string(),
        },
    })
}

/// Best-effort count of further well-formed records, for error messages.
fn count_remaining<R: Read>(reader: &mut R, dim: usize) -> usize {
    let mut n = 0;
    loop {
        let mut len2 = [0u8; 2];
        match read_exact_or_eof(reader, &mut len2) {
            Ok(true) => {}
            _ => return n,
        }
        if read_record(reader, u16::from_le_bytes(len2), dim, "").is_err() {
            return n;
        }
        n += 1;
    }
}

pub fn write_embedding_file(
    path: &Path,
    dim: usize,
    source_corpus: Option<&str>,
    records: &[EmbeddingRecord],
) -> Result<(), IndexError> {
    let io = |source| IndexError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut buf = Vec::new();
    encode_embedding_file(&mut buf, dim, source_corpus, records)?;
    let mut file = std::fs::File::create(path).map_err(io)?;
    file.write_all(&buf).map_err(io)?;
    Ok(())
}

pub fn encode_embedding_file(
    out: &mut Vec<u8>,
    dim: usize,
    source_corpus: Option<&str>,
    records: &[EmbeddingRecord],
) -> Result<(), IndexError> {
    let manifest = Manifest {
        dim,
        count: records.len(),
        source_corpus: source_corpus.map(str::to_string),
    };
    out.extend_from_slice(serde_json::to_string(&manifest).expect("manifest serializes").as_bytes());
    out.push(b'\n');
    for (row, record) in records.iter().enumerate() {
        if record.vector.len() != dim {
            return Err(IndexError::DimensionMismatch {
                expected: dim,
                got: record.vector.len(),
            });
        }
        let id_len = u16::try_from(record.id.len()).map_err(|_| IndexError::CorruptRow {
            row,
            detail: "id longer than 65535 bytes".into(),
        })?;
        let caption_len = u32::try_from(record.metadata.caption.len()).map_err(|_| IndexError::CorruptRow {
            row,
            detail: "caption too long".into(),
        })?;
        out.extend_from_slice(&id_len.to_le_bytes());
        out.extend_from_slice(record.id.as_bytes());
        out.extend_from_slice(&caption_len.to_le_bytes());
        out.extend_from_slice(record.metadata.caption.as_bytes());
        for x in &record.vector {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(())
}

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("embedding backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("embedding backend returned {got} vector(s) for {expected} text(s)")]
    CountMismatch { expected: usize, got: usize },
    #[error("embedding has dimension {got}, expected {expected}")]
    Dimension { expected: usize, got: usize },
}

pub trait Embedder: Send + Sync {
    fn id(&self) -> &str;
    fn dimension(&self) -> usize;
    /// Unit-norm vectors of [`Embedder::dimension`], one per text.
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbedError>;
}

pub fn embed_text(embedder: &dyn Embedder, text: &str) -> Result<Vec<f32>, EmbedError> {
    let mut out = embedder.embed(&[text.to_string()])?;
    out.pop().ok_or(EmbedError::CountMismatch { expected: 1, got: 0 })
}

pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| f64::from(*x) * f64::from(*y)).sum();
    let na = a.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

const STOPWORDS: &[&str] = &[
    "a", "an", "the", "of", "in", "on", "at", "to", "and", "or", "with", "for", "from", "by", "is", "are", "was",
    "be", "his", "her", "their", "its", "this", "that", "during", "while", "as", "into", "over", "some",
];

pub fn content_tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .map(str::to_lowercase)
        .filter(|t| !t.is_empty() && !STOPWORDS.contains(&t.as_str()))
        .collect()
}

/// Deterministic bag-of-words embedder: each content token maps to a seeded
/// pseudo-random vector, the sum (plus a small whole-text component) is
/// normalized. Texts sharing words land close together.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
    seed: u64,
    id: String,
}

pub const DEFAULT_HASH_DIM: usize = 256;

impl HashEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        Self {
            dim: dim.max(1),
            seed,
            id: format!("hash:{dim}:{seed}"),
        }
    }

    fn token_vector(&self, token: &str, out: &mut [f64], weight: f64) {
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update(token.as_bytes());
        let digest = hasher.finalize();
        let mut seed = [0u8; 8];
        seed.copy_from_slice(&digest[..8]);
        let mut rng = rng_for(u64::from_le_bytes(seed));
        for x in out.iter_mut() {
            *x += weight * rng.gen_range(-1.0..1.0);
        }
    }

    pub fn embed_one(&self, text: &str) -> Vec<f32> {
        let mut acc = vec![0.0f64; self.dim];
        for token in content_tokens(text) {
            self.token_vector(&token, &mut acc, 1.0);
        }
        self.token_vector(&format!("\u{0}text:{}", text.trim().to_lowercase()), &mut acc, 0.25);
        let norm = acc.iter().map(|x| x * x).sum::<f64>().sqrt();
        acc.iter().map(|x| (x / norm) as f32).collect()
    }
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_HASH_DIM, 0)
    }
}

impl Embedder for HashEmbedder {
    fn id(&self) -> &str {
        &self.id
    }

    fn dimension(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbedError> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f32>>,
}

/// Client for `POST {base}/embed {"texts": [...]}` → `{"vectors": [[...]]}`.
pub struct HttpEmbedder {
    url: String,
    dim: usize,
    client: reqwest::blocking::Client,
}

impl HttpEmbedder {
    pub fn new(base: &str, dim: usize) -> Result<Self, EmbedError> {
        let base = base.trim_end_matches('/');
        let url = if base.ends_with("/embed") {
            base.to_string()
        } else {
            format!("{base}/embed")
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| EmbedError::BackendUnavailable(e.to_string()))?;
        Ok(Self { url, dim, client })
    }
}

impl Embedder for HttpEmbedder {
    fn id(&self) -> &str {
        &self.url
    }

    fn dimension(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbedError> {
        let response = self
            .client
            .post(&self.url)
            .json(&EmbedRequest { texts })
            .send()
            .map_err(|e| EmbedError::BackendUnavailable(e.to_string()))?;
        let status = response.status();
        if !status.is_success() {
            return Err(EmbedError::BackendUnavailable(format!("HTTP {status}")));
        }
        let body: EmbedResponse = response
            .json()
            .map_err(|e| EmbedError::BackendUnavailable(e.to_string()))?;
        check_vectors(texts.len(), self.dim, body.vectors)
    }
}

fn check_vectors(expected: usize, dim: usize, vectors: Vec<Vec<f32>>) -> Result<Vec<Vec<f32>>, EmbedError> {
    if vectors.len() != expected {
        return Err(EmbedError::CountMismatch {
            expected,
            got: vectors.len(),
        });
    }
    vectors
        .into_iter()
        .map(|v| {
            if v.len() != dim {
                return Err(EmbedError::Dimension {
                    expected: dim,
                    got: v.len(),
                });
            }
            normalize(&v).ok_or(EmbedError::Dimension { expected: dim, got: 0 })
        })
        .collect()
}

/// Embeds captions into records for an index file.
pub fn embed_captions(
    embedder: &dyn Embedder,
    rows: &[(String, String)],
    source_corpus: &str,
) -> Result<Vec<EmbeddingRecord>, EmbedError> {
    let captions: Vec<String> = rows.iter().map(|(_, c)| c.clone()).collect();
    let vectors = embedder.embed(&captions)?;
    Ok(rows
        .iter()
        .zip(vectors)
        .map(|((id, caption), vector)| EmbeddingRecord {
            id: id.clone(),
            vector,
            metadata: RecordMeta {
                caption: caption.clone(),
                source_corpus: source_corpus.to_string(),
            },
        })
        .collect())
}

/// Ids appearing more than once, for diagnostics on caption manifests.
pub fn duplicate_ids<'a>(ids: impl IntoIterator<Item = &'a str>) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut dups = Vec::new();
    for id in ids {
        if !seen.insert(id) && !dups.iter().any(|d| d == id) {
            dups.push(id.to_string());
        }
    }
    dups
}
