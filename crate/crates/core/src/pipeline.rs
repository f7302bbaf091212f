//! End-to-end engine: clarification loop, then retrieval, with every state
//! change emitted as a replayable [`ConversationEvent`].

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::clock::Clock;
use crate::cost::{compute_cost, MetricsRecord, Rates};
use crate::dialogue::{
    start_session, AgentAction, ConversationSession, DialogueError, LlmAdapter, SessionEvent,
    SlotSchema, Speaker, DEFAULT_TURN_CAP,
};
use crate::embedding::{Embedder, VectorIndex};
use crate::retrieval::{recommend, Recommendation, DEFAULT_K};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", content = "payload", rename_all = "snake_case")]
pub enum ConversationEvent {
    Dialogue(SessionEvent),
    Recommended {
        recommendation: Option<Recommendation>,
        error: Option<String>,
    },
}

/// A session plus its retrieval outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct Conversation {
    pub session: ConversationSession,
    pub recommendation: Option<Recommendation>,
    pub retrieval_error: Option<String>,
}

impl Conversation {
    pub fn new(session: ConversationSession) -> Self {
        Conversation {
            session,
            recommendation: None,
            retrieval_error: None,
        }
    }

    pub fn apply(&mut self, event: &ConversationEvent) -> Result<(), DialogueError> {
        match event {
            ConversationEvent::Dialogue(e) => self.session.apply(e),
            ConversationEvent::Recommended {
                recommendation,
                error,
            } => {
                self.recommendation = recommendation.clone();
                self.retrieval_error = error.clone();
                Ok(())
            }
        }
    }

    pub fn replay<'a>(
        events: impl IntoIterator<Item = &'a ConversationEvent>,
    ) -> Result<Self, DialogueError> {
        let mut iter = events.into_iter();
        let session = match iter.next() {
            Some(ConversationEvent::Dialogue(first)) => ConversationSession::replay([first])?,
            _ => {
                return Err(DialogueError::InvalidEvent(
                    "history must begin with `started`".into(),
                ))
            }
        };
        let mut conv = Conversation::new(session);
        for e in iter {
            conv.apply(e)?;
        }
        Ok(conv)
    }

    pub fn metrics(&self, session_id: &str, rates: Rates) -> MetricsRecord {
        let usage = self.session.usage();
        let turns = self.session.transcript().turns();
        let duration_ms = match (turns.first(), turns.last()) {
            (Some(a), Some(b)) if b.speaker == Speaker::Agent => b.timestamp_ms.saturating_sub(a.timestamp_ms),
            _ => 0,
        };
        MetricsRecord {
            session_id: session_id.to_string(),
            turns: self.session.questions_asked(),
            input_tokens: usage.input_tokens,
            output_tokens: usage.output_tokens,
            cost_usd: compute_cost(usage, rates),
            success: None,
            duration_ms,
        }
    }
}

/// What the caller gets back for one user message.
#[derive(Debug, Clone, PartialEq)]
pub struct Reply {
    pub action: AgentAction,
    /// Text of the agent turn appended for this message.
    pub agent_text: String,
    pub recommendation: Option<Recommendation>,
    pub retrieval_error: Option<String>,
    pub events: Vec<ConversationEvent>,
}

pub struct Engine {
    pub index: Arc<VectorIndex>,
    pub embedder: Arc<dyn Embedder>,
    pub adapter: Arc<dyn LlmAdapter>,
    pub schema: SlotSchema,
    pub turn_cap: u32,
    pub k: usize,
    pub rates: Rates,
}

impl Engine {
    pub fn new(index: Arc<VectorIndex>, embedder: Arc<dyn Embedder>, adapter: Arc<dyn LlmAdapter>) -> Self {
        Engine {
            index,
            embedder,
            adapter,
            schema: SlotSchema::default(),
            turn_cap: DEFAULT_TURN_CAP,
            k: DEFAULT_K,
            rates: Rates::default(),
        }
    }

    pub fn start(
        &self,
        schema: Option<SlotSchema>,
        message: &str,
        clock: &dyn Clock,
    ) -> Result<(Conversation, Reply), DialogueError> {
        let schema = schema.unwrap_or_else(|| self.schema.clone());
        let (session, step) = start_session(schema, message, self.adapter.as_ref(), clock, self.turn_cap)?;
        let mut events = vec![ConversationEvent::Dialogue(session.started_event())];
        events.extend(step.events.into_iter().map(ConversationEvent::Dialogue));
        let mut conv = Conversation::new(session);
        let reply = self.conclude(&mut conv, step.action, events, clock)?;
        Ok((conv, reply))
    }

    pub fn respond(
        &self,
        conv: &mut Conversation,
        message: &str,
        clock: &dyn Clock,
    ) -> Result<Reply, DialogueError> {
        let step = conv.session.advance(message, self.adapter.as_ref(), clock)?;
        let events = step.events.into_iter().map(ConversationEvent::Dialogue).collect();
        self.conclude(conv, step.action, events, clock)
    }

    fn conclude(
        &self,
        conv: &mut Conversation,
        action: AgentAction,
        mut events: Vec<ConversationEvent>,
        clock: &dyn Clock,
    ) -> Result<Reply, DialogueError> {
        match &action {
            AgentAction::AskQuestion { text, .. } => Ok(Reply {
                agent_text: text.clone(),
                action,
                recommendation: None,
                retrieval_error: None,
                events,
            }),
            AgentAction::Recommend { .. } => {
                let outcome = recommend(
                    conv.session.slots(),
                    conv.session.schema(),
                    &self.index,
                    self.embedder.as_ref(),
                    self.k,
                );
                let (recommendation, error, text) = match outcome {
                    Ok(r) => {
                        let t = r.agent_text();
                        (Some(r), None, t)
                    }
                    Err(e) => (
                        None,
                        Some(e.to_string()),
                        format!("No template could be recommended: {e}"),
                    ),
                };
                let finished = conv.session.finish(&text, clock)?;
                let rec_event = ConversationEvent::Recommended {
                    recommendation: recommendation.clone(),
                    error: error.clone(),
                };
                conv.apply(&rec_event)?;
                events.push(ConversationEvent::Dialogue(finished));
                events.push(rec_event);
                Ok(Reply {
                    action,
                    agent_text: text,
                    recommendation,
                    retrieval_error: error,
                    events,
                })
            }
        }
    }
}
