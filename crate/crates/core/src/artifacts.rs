//! Content-addressed image artifacts, stored as files named by the lowercase
//! hex SHA-256 of their bytes.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ArtifactRef(String);

impl ArtifactRef {
    pub fn of(bytes: &[u8]) -> Self {
        Self(hex::encode(Sha256::digest(bytes)))
    }

    /// Accepts a 64-character lowercase hex digest.
    pub fn parse(digest: &str) -> Option<Self> {
        let ok = digest.len() == 64
            && digest.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b));
        ok.then(|| Self(digest.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ArtifactRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("artifact I/O at {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("artifact {0} is missing")]
    Missing(ArtifactRef),
    #[error("artifact {expected} is corrupt (content hashes to {actual})")]
    Corrupt {
        expected: ArtifactRef,
        actual: ArtifactRef,
    },
}

#[derive(Debug, Clone)]
pub struct ArtifactStore {
    dir: PathBuf,
}

impl ArtifactStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, ArtifactError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|source| ArtifactError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_of(&self, reference: &ArtifactRef) -> PathBuf {
        self.dir.join(reference.as_str())
    }

    /// Stores `bytes`; writing the same content twice is a no-op.
    pub fn put(&self, bytes: &[u8]) -> Result<ArtifactRef, ArtifactError> {
        let reference = ArtifactRef::of(bytes);
        let path = self.path_of(&reference);
        if path.exists() {
            return Ok(reference);
        }
        let io = |source| ArtifactError::Io {
            path: path.display().to_string(),
            source,
        };
        // Write to a unique temp name, then rename, so readers never see a
        // partial file.
        let tmp = self.dir.join(format!(
            ".{}.{:?}.tmp",
            reference.as_str(),
            std::thread::current().id()
        ));
        let mut file = std::fs::File::create(&tmp).map_err(io)?;
        file.write_all(bytes).map_err(io)?;
        file.sync_all().map_err(io)?;
        std::fs::rename(&tmp, &path).map_err(io)?;
        Ok(reference)
    }

    /// Reads an artifact and checks its content against its name.
    pub fn get(&self, reference: &ArtifactRef) -> Result<Vec<u8>, ArtifactError> {
        let path = self.path_of(reference);
        let bytes = match std::fs::read(&path) {
            Ok(bytes) => bytes,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(ArtifactError::Missing(reference.clone()))
            }
            Err(source) => {
                return Err(ArtifactError::Io {
                    path: path.display().to_string(),
                    source,
                })
            }
        };
        let actual = ArtifactRef::of(&bytes);
        if &actual != reference {
            return Err(ArtifactError::Corrupt {
                expected: reference.clone(),
                actual,
            });
        }
        Ok(bytes)
    }

    pub fn contains(&self, reference: &ArtifactRef) -> bool {
        self.path_of(reference).is_file()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn put_get_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let store = ArtifactStore::open(dir.path()).unwrap();
        let r = store.put(b"pixels").unwrap();
        assert_eq!(r, store.put(b"pixels").unwrap());
        assert_eq!(store.get(&r).unwrap(), b"pixels");
        assert_eq!(r.as_str(), hex::encode(Sha256::digest(b"pixels")));
        assert!(ArtifactRef::parse(r.as_str()).is_some());
        assert!(ArtifactRef::parse("XYZ").is_none());
    }

    #[test]
    fn detects_tampering() {
        let dir = tempfile::tempdir().unwrap();
        let store = ArtifactStore::open(dir.path()).unwrap();
        let r = store.put(b"a").unwrap();
        std::fs::write(store.path_of(&r), b"b").unwrap();
        assert!(matches!(store.get(&r), Err(ArtifactError::Corrupt { .. })));
        let missing = ArtifactRef::of(b"never stored");
        assert!(matches!(store.get(&missing), Err(ArtifactError::Missing(_))));
    }
}
