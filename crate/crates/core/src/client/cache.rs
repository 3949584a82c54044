//! Append-only on-disk completion cache, one record file per digest.
//!
//! Reads are lock-free; writes go through a mutex and land via rename, so
//! concurrent workers never observe a torn record. Existing entries are
//! never overwritten: the first completion for a digest is the one every
//! replay sees.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use super::CompletionRecord;

#[derive(Debug, thiserror::Error)]
pub enum CacheError {
    #[error("cache io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt cache entry {digest}: {msg}")]
    Corrupt { digest: String, msg: String },
}

#[derive(Debug)]
pub struct Cache {
    dir: PathBuf,
    write_lock: Mutex<()>,
}

impl Cache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, CacheError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|source| CacheError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        Ok(Cache {
            dir,
            write_lock: Mutex::new(()),
        })
    }

    fn entry_path(&self, digest: &str) -> PathBuf {
        self.dir.join(format!("{digest}.json"))
    }

    pub fn get(&self, digest: &str) -> Result<Option<CompletionRecord>, CacheError> {
        let path = self.entry_path(digest);
        let bytes = match fs::read(&path) {
            Ok(bytes) => bytes,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(source) => {
                return Err(CacheError::Io {
                    path: path.display().to_string(),
                    source,
                });
            }
        };
        let record = serde_json::from_slice(&bytes).map_err(|e| CacheError::Corrupt {
            digest: digest.to_string(),
            msg: e.to_string(),
        })?;
        Ok(Some(record))
    }

    /// Store a record under its prompt digest. A pre-existing entry wins.
    pub fn put(&self, record: &CompletionRecord) -> Result<(), CacheError> {
        let _guard = self.write_lock.lock().expect("cache write lock");
        let path = self.entry_path(&record.prompt_digest);
        if path.exists() {
            return Ok(());
        }
        let tmp = self.dir.join(format!(".{}.tmp", record.prompt_digest));
        let json = serde_json::to_vec_pretty(record).expect("record serializes");
        fs::write(&tmp, json).map_err(|source| CacheError::Io {
            path: tmp.display().to_string(),
            source,
        })?;
        fs::rename(&tmp, &path).map_err(|source| CacheError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(())
    }

    pub fn contains(&self, digest: &str) -> bool {
        self.entry_path(digest).exists()
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn len(&self) -> usize {
        fs::read_dir(&self.dir)
            .map(|entries| {
                entries
                    .filter_map(Result::ok)
                    .filter(|e| e.path().extension().is_some_and(|ext| ext == "json"))
                    .count()
            })
            .unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
