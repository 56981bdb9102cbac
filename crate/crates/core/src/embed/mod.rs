//! Node documents and their embeddings.
//!
//! A node's document is its own text followed by every message it received,
//! ascending by sender ([`aggregate_text`]). Documents are embedded either by
//! the offline [`embed_hashing`] bag-of-words embedder or by an
//! OpenAI-compatible embeddings endpoint ([`EmbedService`]).

mod aggregate;
mod hashing;
mod service;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use aggregate::{aggregate_all, aggregate_text, AggregatedDocument, MESSAGE_SEPARATOR};
pub use hashing::{embed_hashing, fnv1a64, hashing_matrix, DEFAULT_HASH_DIM};
pub use service::{EmbedBackend, EmbedService};

use crate::gateway::GatewayError;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("node {0} has neither original text nor messages")]
    EmptyDocument(usize),
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("embedding contains a non-finite value in row {0}")]
    NonFinite(usize),
    #[error("malformed embedding file {path}: {reason}")]
    Malformed { path: PathBuf, reason: String },
    #[error("hashing dimension must be at least 2, got {0}")]
    InvalidDimension(usize),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// `n` rows of dimension `d`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    n: usize,
    d: usize,
    data: Vec<f32>,
    embedder_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingSidecar {
    pub embedder_id: String,
    pub dataset_hash: String,
}

impl EmbeddingMatrix {
    pub fn from_rows(rows: Vec<Vec<f32>>, d: usize, embedder_id: impl Into<String>) -> Result<Self, EmbedError> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * d);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != d {
                return Err(EmbedError::DimensionMismatch { expected: d, got: row.len() });
            }
            if row.iter().any(|x| !x.is_finite()) {
                return Err(EmbedError::NonFinite(i));
            }
            data.extend(row);
        }
        Ok(Self {
            n,
            d,
            data,
            embedder_id: embedder_id.into(),
        })
    }

    pub fn rows(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn embedder_id(&self) -> &str {
        &self.embedder_id
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    /// Binary layout: little-endian `u64` n, `u64` d, then n·d `f32`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 4 * self.data.len());
        out.extend_from_slice(&(self.n as u64).to_le_bytes());
        out.extend_from_slice(&(self.d as u64).to_le_bytes());
        for x in &self.data {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], embedder_id: impl Into<String>) -> Result<Self, String> {
        if bytes.len() < 16 {
            return Err("shorter than the 16-byte header".into());
        }
        let n = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
        let d = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let body = &bytes[16..];
        if n.checked_mul(d).and_then(|c| c.checked_mul(4)) != Some(body.len()) {
            return Err(format!("header says {n}x{d} but body has {} bytes", body.len()));
        }
        let data: Vec<f32> = body.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(format!("non-finite value in row {}", pos / d.max(1)));
        }
        Ok(Self {
            n,
            d,
            data,
            embedder_id: embedder_id.into(),
        })
    }

    /// Write `path` and a JSON sidecar at `path` + `.json`.
    pub fn save(&self, path: &Path, dataset_hash: &str) -> Result<(), EmbedError> {
        fs::write(path, self.to_bytes())?;
        let sidecar = EmbeddingSidecar {
            embedder_id: self.embedder_id.clone(),
            dataset_hash: dataset_hash.to_owned(),
        };
        fs::write(sidecar_path(path), serde_json::to_vec_pretty(&sidecar).map_err(std::io::Error::from)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<(Self, EmbeddingSidecar), EmbedError> {
        let malformed = |reason: String| EmbedError::Malformed {
            path: path.to_owned(),
            reason,
        };
        let sidecar: EmbeddingSidecar =
            serde_json::from_slice(&fs::read(sidecar_path(path))?).map_err(|e| malformed(e.to_string()))?;
        let m = Self::from_bytes(&fs::read(path)?, sidecar.embedder_id.clone()).map_err(malformed)?;
        Ok((m, sidecar))
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}
