use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use arc_swap::{ArcSwap, ArcSwapOption};
use thiserror::Error;
use tokio::sync::Mutex;
use tplrag_core::catalog::{CatalogError, IngestReport};
use tplrag_core::clock::Clock;
use tplrag_core::dialogue::{DialogueError, LlmAdapter};
use tplrag_core::embedding::{build_index, EmbeddingError};
use tplrag_core::{ingest_catalog, Catalog, Conversation, ConversationEvent, Embedder, Engine, MetricsRecord};

use crate::config::ServiceConfig;
use crate::eventlog::{read_log, EventLog, LogRecord};

#[derive(Debug, Error)]
pub enum StateError {
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("event log {path}: {source}")]
    Log {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("event log session {session}: {source}")]
    Replay {
        session: String,
        #[source]
        source: DialogueError,
    },
}

/// Catalog and engine swapped together on re-ingest.
pub struct Loaded {
    pub catalog: Catalog,
    pub engine: Arc<Engine>,
}

pub struct SessionSlot {
    pub seq: u64,
    /// Held for the whole duration of one message; `try_lock` gives the 409.
    pub conv: Arc<Mutex<Conversation>>,
    /// Last committed state, read without waiting on `conv`.
    pub view: ArcSwap<Conversation>,
}

pub struct AppState {
    pub config: ServiceConfig,
    pub embedder: Arc<dyn Embedder>,
    pub adapter: Arc<dyn LlmAdapter>,
    pub clock: Arc<dyn Clock>,
    pub loaded: ArcSwapOption<Loaded>,
    sessions: RwLock<HashMap<String, Arc<SessionSlot>>>,
    next_seq: AtomicU64,
    log: Option<EventLog>,
}

impl AppState {
    /// Build the state, replaying the event log and ingesting the configured
    /// catalog if any. Blocking; call before entering an async runtime or
    /// from a blocking task.
    pub fn new(
        config: ServiceConfig,
        embedder: Arc<dyn Embedder>,
        adapter: Arc<dyn LlmAdapter>,
        clock: Arc<dyn Clock>,
    ) -> Result<Arc<Self>, StateError> {
        let log_err = |path: &Path, source| StateError::Log {
            path: path.display().to_string(),
            source,
        };
        let mut sessions = HashMap::new();
        let mut seq = 0;
        let log = match &config.event_log {
            Some(path) => {
                for (id, events) in read_log(path).map_err(|e| log_err(path, e))? {
                    let conv = Conversation::replay(&events).map_err(|source| StateError::Replay {
                        session: id.clone(),
                        source,
                    })?;
                    sessions.insert(id, Arc::new(new_slot(seq, conv)));
                    seq += 1;
                }
                tracing::info!(sessions = sessions.len(), "event log replayed");
                Some(EventLog::open(path).map_err(|e| log_err(path, e))?)
            }
            None => None,
        };
        let state = Arc::new(AppState {
            config,
            embedder,
            adapter,
            clock,
            loaded: ArcSwapOption::empty(),
            sessions: RwLock::new(sessions),
            next_seq: AtomicU64::new(seq),
            log,
        });
        if let Some(dir) = state.config.catalog_dir.clone() {
            let report = state.ingest(&dir)?;
            tracing::info!(%report, "catalog loaded");
        }
        Ok(state)
    }

    /// Ingest `dir`, rebuild the index and swap both in atomically.
    /// Requests already holding the previous snapshot finish on it.
    pub fn ingest(&self, dir: &Path) -> Result<IngestReport, StateError> {
        let (catalog, report) = ingest_catalog(dir)?;
        let index = build_index(&catalog, self.embedder.as_ref())?;
        let mut engine = Engine::new(Arc::new(index), self.embedder.clone(), self.adapter.clone());
        engine.turn_cap = self.config.turn_cap;
        engine.rates = self.config.rates;
        self.loaded.store(Some(Arc::new(Loaded {
            catalog,
            engine: Arc::new(engine),
        })));
        Ok(report)
    }

    pub fn session(&self, id: &str) -> Option<Arc<SessionSlot>> {
        self.sessions.read().unwrap_or_else(|p| p.into_inner()).get(id).cloned()
    }

    pub fn insert_session(&self, id: String, conv: Conversation) {
        let seq = self.next_seq.fetch_add(1, Ordering::Relaxed);
        self.sessions
            .write()
            .unwrap_or_else(|p| p.into_inner())
            .insert(id, Arc::new(new_slot(seq, conv)));
    }

    /// Every session in creation order.
    pub fn sessions(&self) -> Vec<(String, Arc<SessionSlot>)> {
        let mut all: Vec<_> = self
            .sessions
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .iter()
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        all.sort_by_key(|(_, s)| s.seq);
        all
    }

    pub fn metrics(&self, id: &str, conv: &Conversation) -> MetricsRecord {
        conv.metrics(id, self.config.rates)
    }

    pub fn record(&self, session_id: &str, events: &[ConversationEvent]) -> std::io::Result<()> {
        let Some(log) = &self.log else {
            return Ok(());
        };
        let ts = self.clock.now_ms();
        let records: Vec<LogRecord> = events
            .iter()
            .map(|e| LogRecord {
                ts,
                session_id: session_id.to_string(),
                event: e.clone(),
            })
            .collect();
        log.append(&records)
    }
}

fn new_slot(seq: u64, conv: Conversation) -> SessionSlot {
    SessionSlot {
        seq,
        view: ArcSwap::from_pointee(conv.clone()),
        conv: Arc::new(Mutex::new(conv)),
    }
}
