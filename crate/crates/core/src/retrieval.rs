//! Turns gathered requirements into a query and picks the best template.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dialogue::{SlotSchema, SlotState, PURPOSE_SLOT};
use crate::embedding::{query_index, Embedder, EmbeddingError, ScoredHit, VectorIndex};

pub const DEFAULT_K: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RetrievalError {
    #[error("no slot is filled; the query would be empty")]
    NoFilledSlots,
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

/// Rank-1 template plus runners-up. Serializes as
/// `{chosen, score, alternatives: [{id, score}], query_text}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub chosen: String,
    pub score: f64,
    pub alternatives: Vec<ScoredHit>,
    pub query_text: String,
}

impl Recommendation {
    /// The final agent line shown to the user.
    pub fn agent_text(&self) -> String {
        format!("Recommended template: {}.yaml", self.chosen)
    }
}

/// Purpose first, then `slot=value` for every other Filled slot in schema
/// order. Uncertain and Unfilled slots are left out so the remaining context
/// decides the match.
pub fn compose_query(state: &SlotState, schema: &SlotSchema) -> Result<String, RetrievalError> {
    let mut parts = Vec::new();
    if let Some(p) = state.filled(PURPOSE_SLOT) {
        parts.push(p.to_string());
    }
    for name in schema.names().filter(|n| *n != PURPOSE_SLOT) {
        if let Some(v) = state.filled(name) {
            parts.push(format!("{name}={v}"));
        }
    }
    if parts.is_empty() {
        return Err(RetrievalError::NoFilledSlots);
    }
    Ok(parts.join(" "))
}

pub fn recommend(
    state: &SlotState,
    schema: &SlotSchema,
    index: &VectorIndex,
    embedder: &dyn Embedder,
    k: usize,
) -> Result<Recommendation, RetrievalError> {
    let query_text = compose_query(state, schema)?;
    let q = embedder.embed(&query_text)?;
    let mut hits = query_index(index, &q, k)?.into_iter();
    let top = hits.next().ok_or(EmbeddingError::EmptyIndex)?;
    Ok(Recommendation {
        chosen: top.template_id,
        score: top.score,
        alternatives: hits.collect(),
        query_text,
    })
}
