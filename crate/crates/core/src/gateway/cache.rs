//! Content-addressed response cache.
//!
//! Layout: `{dir}/{first two hex chars}/{digest}.txt` holds the raw response
//! text and `{dir}/index.jsonl` maps each digest to its request metadata.
//! Entries are written to a temp file and renamed into place, so concurrent
//! writers of one key converge on a single complete file.

use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use parking_lot::Mutex;
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug)]
pub struct ResponseCache {
    dir: PathBuf,
    index_lock: Mutex<()>,
}

/// Fields that identify one request. Any change yields a different key.
#[derive(Debug, Clone, Serialize)]
pub struct CacheKeyParts<'a> {
    pub backend: &'a str,
    pub model: &'a str,
    pub template_hash: &'a str,
    pub prompt: &'a str,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl CacheKeyParts<'_> {
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(self).expect("key parts serialize"));
        hex::encode(h.finalize())
    }
}

impl ResponseCache {
    pub fn open(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            index_lock: Mutex::new(()),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn entry_path(&self, digest: &str) -> PathBuf {
        self.dir.join(&digest[..2]).join(format!("{digest}.txt"))
    }

    pub fn get(&self, digest: &str) -> io::Result<Option<String>> {
        match fs::read_to_string(self.entry_path(digest)) {
            Ok(text) => Ok(Some(text)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }

    pub fn put(&self, digest: &str, text: &str, meta: &serde_json::Value) -> io::Result<()> {
        let path = self.entry_path(digest);
        let shard = path.parent().expect("entry path has a shard directory");
        fs::create_dir_all(shard)?;
        let mut tmp = tempfile::NamedTempFile::new_in(shard)?;
        tmp.write_all(text.as_bytes())?;
        tmp.persist(&path).map_err(|e| e.error)?;

        let mut line = serde_json::to_vec(&serde_json::json!({ "digest": digest, "meta": meta }))?;
        line.push(b'\n');
        let _guard = self.index_lock.lock();
        OpenOptions::new()
            .create(true)
            .append(true)
            .open(self.dir.join("index.jsonl"))?
            .write_all(&line)
    }
}
