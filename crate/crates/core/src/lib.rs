//! Constraint-aware service scaffolding: a catalog of pre-approved templates
//! is embedded into an exact vector index, a clarification loop gathers
//! requirements from the developer, and the best-matching template is
//! recommended.

pub mod catalog;
pub mod clock;
pub mod cost;
pub mod dialogue;
pub mod embedding;
pub mod eval;
pub mod exec;
pub mod pipeline;
pub mod retrieval;
pub mod transport;

pub use catalog::{ingest_catalog, parse_template, Catalog, FacetSet, ServiceTemplate};
pub use cost::{compute_cost, MetricsRecord, Rates};
pub use dialogue::{ConversationSession, RuleTable, ScriptedAdapter, SlotSchema, TokenUsage};
pub use embedding::{Embedder, EmbeddingVector, HashingEmbedder, VectorIndex};
pub use exec::Exec;
pub use pipeline::{Conversation, ConversationEvent, Engine, Reply};
pub use retrieval::{compose_query, recommend, Recommendation};
