use std::hash::Hasher;

use fnv::FnvHasher;

use super::{AggregatedDocument, EmbedError, EmbeddingMatrix};
use crate::text::tokenize;

pub const DEFAULT_HASH_DIM: usize = 256;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = FnvHasher::default();
    h.write(bytes);
    h.finish()
}

/// Term frequencies bucketed by `fnv1a64(token) mod d`, L2-normalized. An
/// empty token stream gives the zero vector.
pub fn embed_hashing(text: &str, d: usize) -> Result<Vec<f32>, EmbedError> {
    if d < 2 {
        return Err(EmbedError::InvalidDimension(d));
    }
    let mut counts = vec![0f64; d];
    for token in tokenize(text) {
        counts[(fnv1a64(token.as_bytes()) % d as u64) as usize] += 1.0;
    }
    let norm = counts.iter().map(|c| c * c).sum::<f64>().sqrt();
    if norm > 0.0 {
        counts.iter_mut().for_each(|c| *c /= norm);
    }
    Ok(counts.into_iter().map(|c| c as f32).collect())
}

/// Embed `docs` in order; `None` rows become zero vectors.
pub fn hashing_matrix(docs: &[Option<AggregatedDocument>], d: usize) -> Result<EmbeddingMatrix, EmbedError> {
    let rows = docs
        .iter()
        .map(|doc| match doc {
            Some(doc) => embed_hashing(&doc.text, d),
            None => Ok(vec![0.0; d]),
        })
        .collect::<Result<Vec<_>, _>>()?;
    EmbeddingMatrix::from_rows(rows, d, format!("hashing-fnv1a64-d{d}"))
}
