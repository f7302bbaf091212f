//! Text embedding and exact cosine-similarity search.

mod hashing;
mod index;
mod remote;

pub use hashing::{fnv1a64, tokenize, HashingEmbedder, DEFAULT_DIM};
pub use index::{
    build_index, build_index_with, query_index, query_index_with,
    IndexSnapshot, ScoredHit, VectorIndex, SNAPSHOT_VERSION,
};
pub use remote::{HttpEmbedder, RemoteEmbedderConfig};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Unit-norm tolerance for stored vectors.
pub const NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbeddingError {
    #[error("text is empty after trimming")]
    EmptyText,
    #[error("embedder unavailable: {0}")]
    EmbedderUnavailable(String),
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("index is empty")]
    EmptyIndex,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("vector cannot be normalized (zero or non-finite norm)")]
    Degenerate,
    #[error("embedding template `{id}`: {source}")]
    Template {
        id: String,
        #[source]
        source: Box<EmbeddingError>,
    },
    #[error("invalid index snapshot: {0}")]
    Snapshot(String),
    #[error("index was built with `{found}` but the configured embedder is `{expected}`")]
    EmbedderMismatch { expected: String, found: String },
}

/// A dense embedding. Embedders return unit-normalized vectors; the type
/// itself accepts any values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Self {
        EmbeddingVector(values)
    }

    /// Scale to unit L2 norm.
    pub fn normalized(values: Vec<f64>) -> Result<Self, EmbeddingError> {
        let v = EmbeddingVector(values);
        let n = v.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(EmbeddingError::Degenerate);
        }
        Ok(EmbeddingVector(v.0.into_iter().map(|x| x / n).collect()))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn is_unit(&self) -> bool {
        (self.norm() - 1.0).abs() <= NORM_TOLERANCE
    }

    pub fn scaled(&self, factor: f64) -> Self {
        EmbeddingVector(self.0.iter().map(|x| x * factor).collect())
    }
}

/// `dot(a, b) / (|a| |b|)`.
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbeddingError> {
    if a.dim() != b.dim() {
        return Err(EmbeddingError::DimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    let dot: f64 = a.0.iter().zip(&b.0).map(|(x, y)| x * y).sum();
    let denom = a.norm() * b.norm();
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok(dot / denom)
}

/// Maps text to fixed-dimension unit vectors. Implementations must be
/// deterministic for identical input and safe to call concurrently.
pub trait Embedder: Send + Sync {
    /// Stable identifier recorded in index snapshots.
    fn id(&self) -> String;
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError>;
}

impl<E: Embedder + ?Sized> Embedder for std::sync::Arc<E> {
    fn id(&self) -> String {
        (**self).id()
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError> {
        (**self).embed(text)
    }
}

pub fn embed(text: &str, embedder: &dyn Embedder) -> Result<EmbeddingVector, EmbeddingError> {
    embedder.embed(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(xs.to_vec())
    }

    #[test]
    fn self_and_antipodal_similarity() {
        let a = EmbeddingVector::normalized(vec![0.3, -1.2, 4.0, 0.0]).unwrap();
        assert!((cosine_similarity(&a, &a).unwrap() - 1.0).abs() < 1e-9);
        let neg = a.scaled(-1.0);
        assert!((cosine_similarity(&a, &neg).unwrap() + 1.0).abs() < 1e-9);
    }

    #[test]
    fn scale_invariance() {
        let a = v(&[1.0, 2.0, 3.0]);
        let b = v(&[-2.0, 0.5, 1.0]);
        let s = cosine_similarity(&a.scaled(7.0), &b).unwrap();
        assert!((s - cosine_similarity(&a, &b).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn dimension_mismatch() {
        assert_eq!(
            cosine_similarity(&v(&[1.0]), &v(&[1.0, 0.0])),
            Err(EmbeddingError::DimensionMismatch { left: 1, right: 2 })
        );
    }

    #[test]
    fn zero_vector_cannot_normalize() {
        assert_eq!(
            EmbeddingVector::normalized(vec![0.0; 4]),
            Err(EmbeddingError::Degenerate)
        );
    }
}
