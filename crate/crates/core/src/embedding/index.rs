use std::cmp::Ordering;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{cosine_similarity, Embedder, EmbeddingError, EmbeddingVector};
use crate::catalog::Catalog;
use crate::exec::Exec;

pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredHit {
    #[serde(rename = "id")]
    pub template_id: String,
    pub score: f64,
}

/// Descending score, ties by ascending id.
fn rank_order(a: &ScoredHit, b: &ScoredHit) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.template_id.cmp(&b.template_id))
}

/// Immutable id-sorted set of unit vectors searched exhaustively.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorIndex {
    entries: Vec<(String, EmbeddingVector)>,
    dim: usize,
    embedder_id: String,
}

impl VectorIndex {
    pub fn from_entries(
        mut entries: Vec<(String, EmbeddingVector)>,
        dim: usize,
        embedder_id: impl Into<String>,
    ) -> Result<Self, EmbeddingError> {
        if dim == 0 {
            return Err(EmbeddingError::Snapshot("dimension must be positive".into()));
        }
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        if let Some(w) = entries.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(EmbeddingError::Snapshot(format!("duplicate id `{}`", w[0].0)));
        }
        for (id, v) in &entries {
            if v.dim() != dim {
                return Err(EmbeddingError::DimensionMismatch {
                    left: dim,
                    right: v.dim(),
                });
            }
            if !v.is_unit() {
                return Err(EmbeddingError::Snapshot(format!("vector `{id}` is not unit length")));
            }
        }
        Ok(VectorIndex {
            entries,
            dim,
            embedder_id: embedder_id.into(),
        })
    }

    pub fn entries(&self) -> &[(String, EmbeddingVector)] {
        &self.entries
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn embedder_id(&self) -> &str {
        &self.embedder_id
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn query(&self, q: &EmbeddingVector, k: usize) -> Result<Vec<ScoredHit>, EmbeddingError> {
        query_index(self, q, k)
    }

    pub fn to_snapshot(&self) -> IndexSnapshot {
        IndexSnapshot {
            version: SNAPSHOT_VERSION,
            embedder_id: self.embedder_id.clone(),
            dim: self.dim,
            entries: self
                .entries
                .iter()
                .map(|(id, v)| SnapshotEntry {
                    id: id.clone(),
                    vector: v.clone(),
                })
                .collect(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), EmbeddingError> {
        let json = serde_json::to_string(&self.to_snapshot())
            .map_err(|e| EmbeddingError::Snapshot(e.to_string()))?;
        std::fs::write(path, json).map_err(|e| EmbeddingError::Snapshot(e.to_string()))
    }

    /// Load a snapshot, rejecting it if it was built by a different embedder.
    pub fn load(path: &Path, embedder: &dyn Embedder) -> Result<Self, EmbeddingError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| EmbeddingError::Snapshot(format!("{}: {e}", path.display())))?;
        let snap: IndexSnapshot =
            serde_json::from_str(&text).map_err(|e| EmbeddingError::Snapshot(e.to_string()))?;
        snap.into_index(Some(embedder))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotEntry {
    pub id: String,
    pub vector: EmbeddingVector,
}

/// On-disk JSON form of a [`VectorIndex`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexSnapshot {
    pub version: u32,
    pub embedder_id: String,
    pub dim: usize,
    pub entries: Vec<SnapshotEntry>,
}

impl IndexSnapshot {
    pub fn into_index(self, embedder: Option<&dyn Embedder>) -> Result<VectorIndex, EmbeddingError> {
        if self.version != SNAPSHOT_VERSION {
            return Err(EmbeddingError::Snapshot(format!(
                "unsupported version {}",
                self.version
            )));
        }
        if let Some(e) = embedder {
            if e.id() != self.embedder_id {
                return Err(EmbeddingError::EmbedderMismatch {
                    expected: e.id(),
                    found: self.embedder_id,
                });
            }
        }
        VectorIndex::from_entries(
            self.entries.into_iter().map(|e| (e.id, e.vector)).collect(),
            self.dim,
            self.embedder_id,
        )
    }
}

pub fn build_index(catalog: &Catalog, embedder: &dyn Embedder) -> Result<VectorIndex, EmbeddingError> {
    build_index_with(catalog, embedder, Exec::default())
}

/// Embed the canonical text of every template.
pub fn build_index_with(
    catalog: &Catalog,
    embedder: &dyn Embedder,
    exec: Exec,
) -> Result<VectorIndex, EmbeddingError> {
    if catalog.is_empty() {
        return Err(EmbeddingError::EmptyIndex);
    }
    let entries = exec.try_map(catalog.templates(), |t| {
        embedder
            .embed(&t.canonical_text())
            .map(|v| (t.id.clone(), v))
            .map_err(|e| EmbeddingError::Template {
                id: t.id.clone(),
                source: Box::new(e),
            })
    })?;
    VectorIndex::from_entries(entries, embedder.dim(), embedder.id())
}

pub fn query_index(
    index: &VectorIndex,
    q: &EmbeddingVector,
    k: usize,
) -> Result<Vec<ScoredHit>, EmbeddingError> {
    query_index_with(index, q, k, Exec::default())
}

/// Exhaustive top-k search by cosine similarity.
pub fn query_index_with(
    index: &VectorIndex,
    q: &EmbeddingVector,
    k: usize,
    exec: Exec,
) -> Result<Vec<ScoredHit>, EmbeddingError> {
    if k == 0 {
        return Err(EmbeddingError::InvalidK);
    }
    if index.is_empty() {
        return Err(EmbeddingError::EmptyIndex);
    }
    if q.dim() != index.dim {
        return Err(EmbeddingError::DimensionMismatch {
            left: index.dim,
            right: q.dim(),
        });
    }
    let mut hits = exec.try_map(&index.entries, |(id, v)| {
        cosine_similarity(q, v).map(|score| ScoredHit {
            template_id: id.clone(),
            score,
        })
    })?;
    hits.sort_by(rank_order);
    hits.truncate(k);
    Ok(hits)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(xs: &[f64]) -> EmbeddingVector {
        EmbeddingVector::normalized(xs.to_vec()).unwrap()
    }

    fn index(entries: &[(&str, &[f64])]) -> VectorIndex {
        let dim = entries[0].1.len();
        VectorIndex::from_entries(
            entries.iter().map(|(id, v)| (id.to_string(), unit(v))).collect(),
            dim,
            "test",
        )
        .unwrap()
    }

    #[test]
    fn k_larger_than_entries_returns_all_sorted() {
        let idx = index(&[("b", &[1.0, 0.0]), ("a", &[0.0, 1.0]), ("c", &[1.0, 1.0])]);
        let hits = idx.query(&unit(&[1.0, 0.1]), 10).unwrap();
        assert_eq!(hits.len(), 3);
        let ids: Vec<_> = hits.iter().map(|h| h.template_id.as_str()).collect();
        assert_eq!(ids, ["b", "c", "a"]);
        assert!(hits.windows(2).all(|w| w[0].score >= w[1].score));
    }

    #[test]
    fn ties_break_by_ascending_id() {
        let idx = index(&[("zeta", &[1.0, 0.0]), ("alpha", &[1.0, 0.0])]);
        let hits = idx.query(&unit(&[1.0, 0.0]), 2).unwrap();
        assert_eq!(hits[0].template_id, "alpha");
        assert_eq!(hits[0].score, hits[1].score);
    }

    #[test]
    fn errors() {
        let idx = index(&[("a", &[1.0, 0.0])]);
        assert_eq!(idx.query(&unit(&[1.0, 0.0]), 0), Err(EmbeddingError::InvalidK));
        assert!(matches!(
            idx.query(&unit(&[1.0, 0.0, 0.0]), 1),
            Err(EmbeddingError::DimensionMismatch { .. })
        ));
        let empty = VectorIndex::from_entries(vec![], 2, "t").unwrap();
        assert_eq!(empty.query(&unit(&[1.0, 0.0]), 1), Err(EmbeddingError::EmptyIndex));
    }

    #[test]
    fn rejects_non_unit_and_duplicates() {
        let bad = VectorIndex::from_entries(
            vec![("a".into(), EmbeddingVector::new(vec![2.0, 0.0]))],
            2,
            "t",
        );
        assert!(bad.is_err());
        let dup = VectorIndex::from_entries(
            vec![("a".into(), unit(&[1.0, 0.0])), ("a".into(), unit(&[0.0, 1.0]))],
            2,
            "t",
        );
        assert!(dup.is_err());
    }

    #[test]
    fn snapshot_rejects_other_embedder() {
        let idx = index(&[("a", &[1.0, 0.0])]);
        let snap = idx.to_snapshot();
        let other = crate::embedding::HashingEmbedder::new(2);
        assert!(matches!(
            snap.into_index(Some(&other)),
            Err(EmbeddingError::EmbedderMismatch { .. })
        ));
    }
}
